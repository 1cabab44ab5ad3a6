# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, fabs

cnp.import_array()


cdef inline double _hermite(double x, const double[::1] y, const double[::1] dy,
                            double h, Py_ssize_t last) noexcept nogil:
    cdef double ax = fabs(x)
    cdef double u, t, t2, t3
    cdef Py_ssize_t k
    if ax > last * h:
        return 0.0
    u = ax / h
    k = <Py_ssize_t>u
    if k > last - 1:
        k = last - 1
    t = u - k
    t2 = t * t
    t3 = t2 * t
    return ((2 * t3 - 3 * t2 + 1) * y[k]
            + (t3 - 2 * t2 + t) * h * dy[k]
            + (-2 * t3 + 3 * t2) * y[k + 1]
            + (t3 - t2) * h * dy[k + 1])


def hermite_eval(x, y, dy, double h):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] dyv = np.ascontiguousarray(dy, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    cdef Py_ssize_t last = yv.shape[0] - 1
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            ov[i] = _hermite(xv[i], yv, dyv, h, last)
    return out.reshape(np.shape(x))


def hermite_sum(x, w, y, dy, double h):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] dyv = np.ascontiguousarray(dy, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    cdef Py_ssize_t last = yv.shape[0] - 1
    cdef Py_ssize_t i
    cdef double total = 0.0
    with nogil:
        for i in range(n):
            total += wv[i] * _hermite(xv[i], yv, dyv, h, last)
    return total


def phase_sum(freqs, weights, s):
    cdef const double[::1] fv = np.ascontiguousarray(freqs, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[::1] sv = np.ascontiguousarray(s, dtype=np.float64)
    cdef Py_ssize_t nf = fv.shape[0]
    cdef Py_ssize_t ns = sv.shape[0]
    re = np.zeros(ns, dtype=np.float64)
    im = np.zeros(ns, dtype=np.float64)
    cdef double[::1] rv = re
    cdef double[::1] iv = im
    cdef Py_ssize_t j, k
    cdef double arg, acc_r, acc_i
    with nogil:
        for k in range(ns):
            acc_r = 0.0
            acc_i = 0.0
            for j in range(nf):
                arg = fv[j] * sv[k]
                acc_r += wv[j] * cos(arg)
                acc_i += wv[j] * sin(arg)
            rv[k] = acc_r
            iv[k] = acc_i
    return re + 1j * im
