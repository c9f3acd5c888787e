"""Backend parity and brute-force correctness of the geometry kernels."""

import numpy as np
import pytest

from decoyforge._kernels import _ref, available_backends

fast = pytest.importorskip("decoyforge._kernels._fast") if "fast" in available_backends() else None

needs_fast = pytest.mark.skipif(fast is None, reason="compiled kernels not built")


def _random_coords(rng, n):
    return rng.uniform(-8.0, 8.0, size=(n, 3))


def _brute_pairs_cross(a, b, cutoff):
    out = []
    for i in range(len(a)):
        for j in range(len(b)):
            if np.linalg.norm(a[i] - b[j]) <= cutoff:
                out.append((i, j))
    return out


def test_ref_cross_pairs_brute_force():
    rng = np.random.default_rng(0)
    a, b = _random_coords(rng, 12), _random_coords(rng, 9)
    got = [tuple(r) for r in _ref.cross_pairs(a, b, 5.0)]
    assert got == _brute_pairs_cross(a, b, 5.0)


def test_ref_self_pairs_brute_force():
    rng = np.random.default_rng(1)
    x = _random_coords(rng, 15)
    got = [tuple(r) for r in _ref.self_pairs(x, 6.0)]
    expected = [
        (i, j)
        for i in range(15)
        for j in range(i + 1, 15)
        if np.linalg.norm(x[i] - x[j]) <= 6.0
    ]
    assert got == expected


def test_ref_min_and_any():
    rng = np.random.default_rng(2)
    a, b = _random_coords(rng, 8), _random_coords(rng, 7)
    brute = min(np.linalg.norm(p - q) for p in a for q in b)
    assert _ref.min_cross_dist(a, b) == pytest.approx(brute, abs=1e-12)
    assert _ref.any_within(a, b, brute + 1e-9)
    assert not _ref.any_within(a, b, brute - 1e-9)


def test_ref_rmsd_batch_matches_scalar_loop():
    rng = np.random.default_rng(3)
    native = _random_coords(rng, 11)
    poses = rng.uniform(-8, 8, size=(5, 11, 3))
    got = _ref.rmsd_batch(native, poses)
    for k in range(5):
        acc = 0.0
        for a in range(11):
            d = poses[k, a] - native[a]
            acc += d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
        assert got[k] == pytest.approx(np.sqrt(acc / 11), abs=1e-12)


def test_ref_scatter_add_rows():
    values = np.array([[1.0, 10.0], [2.0, 20.0], [3.0, 30.0]])
    out = _ref.scatter_add_rows(values, np.array([0, 0, 1]), 3)
    assert out.tolist() == [[3.0, 30.0], [3.0, 30.0], [0.0, 0.0]]


@needs_fast
@pytest.mark.parametrize("trial", range(10))
def test_backend_parity_bitwise(trial):
    rng = np.random.default_rng(100 + trial)
    a = _random_coords(rng, int(rng.integers(1, 40)))
    b = _random_coords(rng, int(rng.integers(1, 40)))
    cutoff = float(rng.uniform(1.0, 10.0))

    assert np.array_equal(_ref.cross_pairs(a, b, cutoff), fast.cross_pairs(a, b, cutoff))
    assert np.array_equal(_ref.self_pairs(a, cutoff), fast.self_pairs(a, cutoff))
    assert np.array_equal(_ref.pocket_mask(a, b, cutoff), fast.pocket_mask(a, b, cutoff))
    assert _ref.any_within(a, b, cutoff) == fast.any_within(a, b, cutoff)
    # bit-identical floats, not approximately equal
    assert _ref.min_cross_dist(a, b) == fast.min_cross_dist(a, b)
    poses = rng.uniform(-8, 8, size=(4, a.shape[0], 3))
    assert np.array_equal(_ref.rmsd_batch(a, poses), fast.rmsd_batch(a, poses))
    values = rng.standard_normal((23, 5))
    index = rng.integers(0, 7, size=23)
    assert np.array_equal(
        _ref.scatter_add_rows(values, index, 7), fast.scatter_add_rows(values, index, 7)
    )


@needs_fast
def test_fast_scatter_rejects_bad_index():
    with pytest.raises(IndexError):
        fast.scatter_add_rows(np.ones((2, 2)), np.array([0, 5]), 3)
