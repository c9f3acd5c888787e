"""Compare the compiled kernel backend against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]

The compiled backend must win on the neighbour-search and batch-RMSD hot
loops (curation and decoy annotation are dominated by them); results are
also checked for bit equality while timing.
"""

import argparse
import time

import numpy as np

from decoyforge._kernels import _ref, available_backends


def timed(fn, repeats):
    best = float("inf")
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if "fast" not in available_backends():
        raise SystemExit("compiled backend not built; run pip install -e . first")
    from decoyforge._kernels import _fast

    rng = np.random.default_rng(0)
    protein = rng.uniform(-30, 30, (2500, 3))
    ligand = rng.uniform(-5, 5, (60, 3))
    native = rng.uniform(-5, 5, (40, 3))
    poses = native + rng.standard_normal((2000, 40, 3))
    values = rng.standard_normal((200_000, 64))
    index = rng.integers(0, 5_000, size=200_000)

    cases = [
        ("self_pairs 2500 atoms", lambda m: m.self_pairs(protein, 5.0)),
        ("cross_pairs 2500x60", lambda m: m.cross_pairs(protein, ligand, 5.0)),
        ("pocket_mask 2500x60", lambda m: m.pocket_mask(protein, ligand, 10.0)),
        ("any_within (early exit)", lambda m: m.any_within(protein, ligand, 10.0)),
        ("rmsd_batch 2000x40", lambda m: m.rmsd_batch(native, poses)),
        ("scatter_add 200k x 64", lambda m: m.scatter_add_rows(values, index, 5_000)),
    ]

    print(f"{'kernel':28s} {'numpy':>10s} {'compiled':>10s} {'speedup':>8s}")
    for name, call in cases:
        t_ref, r_ref = timed(lambda: call(_ref), args.repeats)
        t_fast, r_fast = timed(lambda: call(_fast), args.repeats)
        same = (
            np.array_equal(r_ref, r_fast)
            if isinstance(r_ref, np.ndarray)
            else r_ref == r_fast
        )
        flag = "" if same else "  MISMATCH"
        print(f"{name:28s} {t_ref * 1e3:9.2f}ms {t_fast * 1e3:9.2f}ms {t_ref / t_fast:7.1f}x{flag}")


if __name__ == "__main__":
    main()
