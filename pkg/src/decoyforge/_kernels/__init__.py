"""Geometry kernels with a compiled core and a numpy fallback.

The compiled extension (`_fast`, Cython) is preferred when importable; the
numpy reference backend (`_ref`) is always available and bit-identical.
`DECOYFORGE_KERNELS=ref|fast` forces a backend; `fast` raises if the
extension is missing.

Exported functions: pocket_mask, any_within, min_cross_dist, cross_pairs,
self_pairs, rmsd_batch, scatter_add_rows. See `_ref.py` for contracts.
"""

from __future__ import annotations

import os

from . import _ref

_choice = os.environ.get("DECOYFORGE_KERNELS", "auto").lower()

if _choice == "ref":
    _impl = _ref
elif _choice == "fast":
    from . import _fast as _impl  # type: ignore[no-redef]
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _ref

BACKEND = _impl.BACKEND

pocket_mask = _impl.pocket_mask
any_within = _impl.any_within
min_cross_dist = _impl.min_cross_dist
cross_pairs = _impl.cross_pairs
self_pairs = _impl.self_pairs
rmsd_batch = _impl.rmsd_batch
scatter_add_rows = _impl.scatter_add_rows


def available_backends() -> list[str]:
    backends = ["ref"]
    try:
        from . import _fast  # noqa: F401

        backends.append("fast")
    except ImportError:
        pass
    return backends
