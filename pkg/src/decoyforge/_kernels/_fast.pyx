# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel backend.

Same contracts as `_ref.py`; pair scans are row-major and reductions are
sequential so both backends agree bit for bit.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND = "fast"


def _coords(x, name):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 3:
        raise ValueError(f"{name} must be (n, 3), got {x.shape}")
    return x


def pocket_mask(protein, ligand, double cutoff):
    protein = _coords(protein, "protein")
    ligand = _coords(ligand, "ligand")
    cdef double[:, ::1] p = protein
    cdef double[:, ::1] l = ligand
    cdef Py_ssize_t np_ = p.shape[0], nl = l.shape[0], i, j
    cdef double c2 = cutoff * cutoff, dx, dy, dz
    out = np.zeros(np_, dtype=np.bool_)
    cdef cnp.uint8_t[::1] o = out.view(np.uint8)
    for i in range(np_):
        for j in range(nl):
            dx = p[i, 0] - l[j, 0]
            dy = p[i, 1] - l[j, 1]
            dz = p[i, 2] - l[j, 2]
            if (dx * dx + dy * dy) + dz * dz <= c2:
                o[i] = 1
                break
    return out


def any_within(a, b, double cutoff):
    a = _coords(a, "a")
    b = _coords(b, "b")
    cdef double[:, ::1] av = a
    cdef double[:, ::1] bv = b
    cdef Py_ssize_t na = av.shape[0], nb = bv.shape[0], i, j
    cdef double c2 = cutoff * cutoff, dx, dy, dz
    for i in range(na):
        for j in range(nb):
            dx = av[i, 0] - bv[j, 0]
            dy = av[i, 1] - bv[j, 1]
            dz = av[i, 2] - bv[j, 2]
            if (dx * dx + dy * dy) + dz * dz <= c2:
                return True
    return False


def min_cross_dist(a, b):
    a = _coords(a, "a")
    b = _coords(b, "b")
    cdef double[:, ::1] av = a
    cdef double[:, ::1] bv = b
    cdef Py_ssize_t na = av.shape[0], nb = bv.shape[0], i, j
    cdef double best = -1.0, d2, dx, dy, dz
    for i in range(na):
        for j in range(nb):
            dx = av[i, 0] - bv[j, 0]
            dy = av[i, 1] - bv[j, 1]
            dz = av[i, 2] - bv[j, 2]
            d2 = (dx * dx + dy * dy) + dz * dz
            if best < 0.0 or d2 < best:
                best = d2
    return sqrt(best)


def cross_pairs(a, b, double cutoff):
    a = _coords(a, "a")
    b = _coords(b, "b")
    cdef double[:, ::1] av = a
    cdef double[:, ::1] bv = b
    cdef Py_ssize_t na = av.shape[0], nb = bv.shape[0], i, j, m = 0
    cdef double c2 = cutoff * cutoff, dx, dy, dz
    for i in range(na):
        for j in range(nb):
            dx = av[i, 0] - bv[j, 0]
            dy = av[i, 1] - bv[j, 1]
            dz = av[i, 2] - bv[j, 2]
            if (dx * dx + dy * dy) + dz * dz <= c2:
                m += 1
    out = np.empty((m, 2), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] ov = out
    cdef Py_ssize_t k = 0
    for i in range(na):
        for j in range(nb):
            dx = av[i, 0] - bv[j, 0]
            dy = av[i, 1] - bv[j, 1]
            dz = av[i, 2] - bv[j, 2]
            if (dx * dx + dy * dy) + dz * dz <= c2:
                ov[k, 0] = i
                ov[k, 1] = j
                k += 1
    return out


def self_pairs(x, double cutoff):
    x = _coords(x, "x")
    cdef double[:, ::1] xv = x
    cdef Py_ssize_t n = xv.shape[0], i, j, m = 0
    cdef double c2 = cutoff * cutoff, dx, dy, dz
    for i in range(n):
        for j in range(i + 1, n):
            dx = xv[i, 0] - xv[j, 0]
            dy = xv[i, 1] - xv[j, 1]
            dz = xv[i, 2] - xv[j, 2]
            if (dx * dx + dy * dy) + dz * dz <= c2:
                m += 1
    out = np.empty((m, 2), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] ov = out
    cdef Py_ssize_t k = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = xv[i, 0] - xv[j, 0]
            dy = xv[i, 1] - xv[j, 1]
            dz = xv[i, 2] - xv[j, 2]
            if (dx * dx + dy * dy) + dz * dz <= c2:
                ov[k, 0] = i
                ov[k, 1] = j
                k += 1
    return out


def rmsd_batch(native, poses):
    native = _coords(native, "native")
    poses = np.ascontiguousarray(poses, dtype=np.float64)
    if poses.ndim != 3 or poses.shape[1] != native.shape[0] or poses.shape[2] != 3:
        raise ValueError(f"poses must be (k, {native.shape[0]}, 3), got {poses.shape}")
    cdef double[:, ::1] nv = native
    cdef double[:, :, ::1] pv = poses
    cdef Py_ssize_t k = pv.shape[0], n = nv.shape[0], p, a
    cdef double acc, dx, dy, dz
    out = np.empty(k, dtype=np.float64)
    cdef double[::1] ov = out
    for p in range(k):
        acc = 0.0
        for a in range(n):
            dx = pv[p, a, 0] - nv[a, 0]
            dy = pv[p, a, 1] - nv[a, 1]
            dz = pv[p, a, 2] - nv[a, 2]
            acc += (dx * dx + dy * dy) + dz * dz
        ov[p] = sqrt(acc / n)
    return out


def scatter_add_rows(values, index, Py_ssize_t n_rows):
    values = np.ascontiguousarray(values, dtype=np.float64)
    index = np.ascontiguousarray(index, dtype=np.int64)
    if values.ndim != 2 or index.ndim != 1 or index.shape[0] != values.shape[0]:
        raise ValueError("values must be (e, d) and index (e,)")
    cdef double[:, ::1] vv = values
    cdef cnp.int64_t[::1] iv = index
    cdef Py_ssize_t e = vv.shape[0], d = vv.shape[1], i, c
    cdef cnp.int64_t row
    out = np.zeros((n_rows, d), dtype=np.float64)
    cdef double[:, ::1] ov = out
    for i in range(e):
        row = iv[i]
        if row < 0 or row >= n_rows:
            raise IndexError(f"scatter index {row} out of range for {n_rows} rows")
        for c in range(d):
            ov[row, c] += vv[i, c]
    return out
