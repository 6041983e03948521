# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Lipschitz-pruning kernels.

Mirrors ``_kernels_py`` bit for bit: the violation predicate compares squared
norms accumulated coordinate by coordinate in the same order.
"""
import numpy as np


cdef inline bint _violates(const double[:, ::1] base, const double[:, ::1] height,
                           Py_ssize_t i, Py_ssize_t j, double L2) noexcept nogil:
    cdef Py_ssize_t d
    cdef double t, db2 = 0.0, dh2 = 0.0
    for d in range(base.shape[1]):
        t = base[i, d] - base[j, d]
        db2 = db2 + t * t
    for d in range(height.shape[1]):
        t = height[i, d] - height[j, d]
        dh2 = dh2 + t * t
    return dh2 > L2 * db2


def lipschitz_prune(base, height, double L):
    """Greedy max-violation deletion; returns a uint8 keep-mask."""
    cdef const double[:, ::1] b = np.ascontiguousarray(base, dtype=np.float64)
    cdef const double[:, ::1] h = np.ascontiguousarray(height, dtype=np.float64)
    cdef Py_ssize_t m = b.shape[0]
    cdef Py_ssize_t i, j, best
    cdef long long bestdeg
    cdef double L2 = L * L
    deg_arr = np.zeros(m, dtype=np.int64)
    alive_arr = np.ones(m, dtype=np.uint8)
    cdef long long[::1] deg = deg_arr
    cdef unsigned char[::1] alive = alive_arr
    with nogil:
        for i in range(m):
            for j in range(i + 1, m):
                if _violates(b, h, i, j, L2):
                    deg[i] += 1
                    deg[j] += 1
        while True:
            best = -1
            bestdeg = 0
            for i in range(m):
                if alive[i] and deg[i] > bestdeg:
                    best = i
                    bestdeg = deg[i]
            if best < 0:
                break
            alive[best] = 0
            deg[best] = 0
            for j in range(m):
                if alive[j] and _violates(b, h, best, j, L2):
                    deg[j] -= 1
    return alive_arr.astype(bool)


def count_violations(base, height, double L):
    """Number of unordered pairs breaking the Lipschitz bound."""
    cdef const double[:, ::1] b = np.ascontiguousarray(base, dtype=np.float64)
    cdef const double[:, ::1] h = np.ascontiguousarray(height, dtype=np.float64)
    cdef Py_ssize_t m = b.shape[0]
    cdef Py_ssize_t i, j
    cdef long long total = 0
    cdef double L2 = L * L
    with nogil:
        for i in range(m):
            for j in range(i + 1, m):
                if _violates(b, h, i, j, L2):
                    total += 1
    return int(total)
