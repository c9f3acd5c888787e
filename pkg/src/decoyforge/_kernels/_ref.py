"""Pure-numpy kernel backend.

Reference implementations of the geometry hot loops. The compiled backend in
`_fast.pyx` must return bit-identical results; accumulations here are ordered
to match its sequential C loops (per-atom squared terms are summed in index
order, pair scans run row-major).
"""

from __future__ import annotations

import numpy as np

BACKEND = "ref"


def _check_coords(x, name):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 3:
        raise ValueError(f"{name} must be (n, 3), got {x.shape}")
    return x


def pocket_mask(protein: np.ndarray, ligand: np.ndarray, cutoff: float) -> np.ndarray:
    """Boolean mask of protein atoms within `cutoff` of any ligand atom."""
    protein = _check_coords(protein, "protein")
    ligand = _check_coords(ligand, "ligand")
    d2 = ((protein[:, None, :] - ligand[None, :, :]) ** 2).sum(axis=-1)
    return (d2 <= cutoff * cutoff).any(axis=1)


def any_within(a: np.ndarray, b: np.ndarray, cutoff: float) -> bool:
    """True if any cross pair (a_i, b_j) is within `cutoff`."""
    a = _check_coords(a, "a")
    b = _check_coords(b, "b")
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    return bool((d2 <= cutoff * cutoff).any())


def min_cross_dist(a: np.ndarray, b: np.ndarray) -> float:
    """Minimum Euclidean distance over all cross pairs."""
    a = _check_coords(a, "a")
    b = _check_coords(b, "b")
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    return float(np.sqrt(d2.min()))


def cross_pairs(a: np.ndarray, b: np.ndarray, cutoff: float) -> np.ndarray:
    """(m, 2) indices (i into a, j into b) with d(a_i, b_j) <= cutoff.

    Rows are ordered by i, then j.
    """
    a = _check_coords(a, "a")
    b = _check_coords(b, "b")
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    ii, jj = np.nonzero(d2 <= cutoff * cutoff)
    return np.stack([ii, jj], axis=1).astype(np.int64)


def self_pairs(x: np.ndarray, cutoff: float) -> np.ndarray:
    """(m, 2) index pairs i < j with d(x_i, x_j) <= cutoff, ordered by i then j."""
    x = _check_coords(x, "x")
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=-1)
    mask = np.triu(d2 <= cutoff * cutoff, k=1)
    ii, jj = np.nonzero(mask)
    return np.stack([ii, jj], axis=1).astype(np.int64)


def rmsd_batch(native: np.ndarray, poses: np.ndarray) -> np.ndarray:
    """RMSD of each pose against the native coordinates (fixed atom order).

    poses has shape (k, n, 3). Squared deviations are accumulated atom by
    atom so the result matches the compiled backend bit for bit.
    """
    native = _check_coords(native, "native")
    poses = np.ascontiguousarray(poses, dtype=np.float64)
    if poses.ndim != 3 or poses.shape[1:] != native.shape:
        raise ValueError(f"poses must be (k, {native.shape[0]}, 3), got {poses.shape}")
    n = native.shape[0]
    acc = np.zeros(poses.shape[0], dtype=np.float64)
    for atom in range(n):
        d = poses[:, atom, :] - native[atom]
        acc += (d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]) + d[:, 2] * d[:, 2]
    return np.sqrt(acc / n)


def scatter_add_rows(values: np.ndarray, index: np.ndarray, n_rows: int) -> np.ndarray:
    """Sum rows of `values` into an (n_rows, d) output at positions `index`.

    Accumulation happens in input order (np.add.at), matching the compiled
    backend's sequential loop.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    index = np.ascontiguousarray(index, dtype=np.int64)
    if values.ndim != 2 or index.ndim != 1 or index.shape[0] != values.shape[0]:
        raise ValueError("values must be (e, d) and index (e,)")
    out = np.zeros((n_rows, values.shape[1]), dtype=np.float64)
    np.add.at(out, index, values)
    return out
