# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled simplex hot kernels; contracts mirror _kernels_py exactly."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

COMPILED = True


def choose_entering(cnp.ndarray[cnp.float64_t, ndim=1] d,
                    cnp.ndarray[cnp.int8_t, ndim=1] eligibility,
                    double tol, bint bland):
    cdef Py_ssize_t n = d.shape[0]
    cdef Py_ssize_t j, best = -1
    cdef double score, best_score = 0.0
    cdef cnp.int8_t e
    for j in range(n):
        e = eligibility[j]
        if e == 0:
            if d[j] >= -tol:
                continue
        elif e == 1:
            if d[j] <= tol:
                continue
        else:
            continue
        if bland:
            return j
        score = d[j] if d[j] > 0 else -d[j]
        if score > best_score:
            best_score = score
            best = j
    return best


def ratio_test(cnp.ndarray[cnp.float64_t, ndim=1] col,
               cnp.ndarray[cnp.float64_t, ndim=1] xB,
               cnp.ndarray[cnp.float64_t, ndim=1] lbB,
               cnp.ndarray[cnp.float64_t, ndim=1] ubB,
               double sigma, double limit, double tol):
    cdef Py_ssize_t m = col.shape[0]
    cdef Py_ssize_t i, leave = -1
    cdef double v, t, step = limit, pivot_mag = 0.0, mag
    for i in range(m):
        v = sigma * col[i]
        if v > tol:
            t = (xB[i] - lbB[i]) / v
        elif v < -tol:
            t = (ubB[i] - xB[i]) / (-v)
        else:
            continue
        mag = v if v > 0 else -v
        if t < step - 1e-12:
            step = t
            leave = i
            pivot_mag = mag
        elif leave >= 0 and t < step + 1e-12 and mag > pivot_mag:
            leave = i
            pivot_mag = mag
    if step < 0.0:
        step = 0.0
    return leave, step


def update_binv(cnp.ndarray[cnp.float64_t, ndim=2] binv,
                cnp.ndarray[cnp.float64_t, ndim=1] col,
                Py_ssize_t r):
    cdef Py_ssize_t m = binv.shape[0]
    cdef Py_ssize_t i, k
    cdef double pivot = col[r]
    cdef double factor
    for i in range(m):
        if i == r:
            continue
        factor = col[i] / pivot
        if factor != 0.0:
            for k in range(m):
                binv[i, k] -= factor * binv[r, k]
    for k in range(m):
        binv[r, k] /= pivot
