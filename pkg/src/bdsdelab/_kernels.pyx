# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled interpolation kernels for the backward solver.

Same arithmetic as ``_kernels_py`` so both backends agree to rounding.
"""
import numpy as np
from libc.math cimport floor


def interp_1d(const double[:, ::1] fields, double lo, double hi, double h,
              const double[::1] pts):
    cdef Py_ssize_t c = fields.shape[0]
    cdef Py_ssize_t n = fields.shape[1]
    cdef Py_ssize_t P = pts.shape[0]
    out = np.empty((c, P), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t q, i, k
    cdef double p, s, w
    with nogil:
        for q in range(P):
            p = pts[q]
            if p < lo:
                p = lo
            elif p > hi:
                p = hi
            s = (p - lo) / h
            i = <Py_ssize_t>floor(s)
            if i > n - 2:
                i = n - 2
            if i < 0:
                i = 0
            w = s - i
            for k in range(c):
                o[k, q] = (1.0 - w) * fields[k, i] + w * fields[k, i + 1]
    return out


def interp_2d(const double[:, ::1] fields, double lo, double hi, double h,
              Py_ssize_t n, const double[:, ::1] pts):
    cdef Py_ssize_t c = fields.shape[0]
    cdef Py_ssize_t P = pts.shape[0]
    out = np.empty((c, P), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t q, i, j, k, base
    cdef double p0, p1, s0, s1, w0, w1
    with nogil:
        for q in range(P):
            p0 = pts[q, 0]
            p1 = pts[q, 1]
            if p0 < lo:
                p0 = lo
            elif p0 > hi:
                p0 = hi
            if p1 < lo:
                p1 = lo
            elif p1 > hi:
                p1 = hi
            s0 = (p0 - lo) / h
            s1 = (p1 - lo) / h
            i = <Py_ssize_t>floor(s0)
            j = <Py_ssize_t>floor(s1)
            if i > n - 2:
                i = n - 2
            if i < 0:
                i = 0
            if j > n - 2:
                j = n - 2
            if j < 0:
                j = 0
            w0 = s0 - i
            w1 = s1 - j
            base = i * n + j
            for k in range(c):
                o[k, q] = ((1.0 - w0) * ((1.0 - w1) * fields[k, base] + w1 * fields[k, base + 1])
                           + w0 * ((1.0 - w1) * fields[k, base + n] + w1 * fields[k, base + n + 1]))
    return out
