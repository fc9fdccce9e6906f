# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled fixed-step kernels; see ``_kernels_py`` for the reference versions."""
import numpy as np
cimport numpy as cnp
from libc.math cimport isfinite

cnp.import_array()

PARAMETRIC2D = 0
LORENZ63 = 1


cdef inline void _rhs(int system, const double[:] p, double* s, double* u, double* out) noexcept nogil:
    cdef double c0, c1
    if system == 0:
        c0 = s[0] * s[0] * s[0]
        c1 = s[1] * s[1] * s[1]
        out[0] = p[0] * c0 + p[1] * c1 + u[0]
        out[1] = p[2] * c0 + p[3] * c1 + u[1]
    else:
        out[0] = p[0] * (s[1] - s[0])
        out[1] = u[0] * s[0] - s[1] - s[0] * s[2]
        out[2] = s[0] * s[1] - p[1] * s[2]


def rk4_ode(int system, params, s0, times, controls, int substeps):
    if system != 0 and system != 1:
        raise ValueError(f"unknown system id {system}")
    cdef double[:] p = np.ascontiguousarray(params, dtype=np.float64)
    cdef double[:, :] init = np.ascontiguousarray(s0, dtype=np.float64)
    cdef double[:] t = np.ascontiguousarray(times, dtype=np.float64)
    cdef double[:, :, :] u = np.ascontiguousarray(controls, dtype=np.float64)
    cdef Py_ssize_t nb = init.shape[0], dim = init.shape[1], n = t.shape[0]
    cdef Py_ssize_t m = u.shape[2]
    result = np.empty((nb, n, dim), dtype=np.float64)
    cdef double[:, :, :] out = result
    cdef double s[3]
    cdef double tmp[3]
    cdef double k1[3]
    cdef double k2[3]
    cdef double k3[3]
    cdef double k4[3]
    cdef double ua[3]
    cdef double um[3]
    cdef double ub[3]
    cdef double h, a, mid, b, du
    cdef Py_ssize_t bi, i, j, d, c
    cdef int failed = -1
    cdef bint finite
    with nogil:
        for bi in range(nb):
            for d in range(dim):
                s[d] = init[bi, d]
                out[bi, 0, d] = s[d]
            for i in range(n - 1):
                h = (t[i + 1] - t[i]) / substeps
                for j in range(substeps):
                    a = j / (<double>substeps)
                    mid = (j + 0.5) / substeps
                    b = (j + 1.0) / substeps
                    for c in range(m):
                        du = u[bi, i + 1, c] - u[bi, i, c]
                        ua[c] = u[bi, i, c] + a * du
                        um[c] = u[bi, i, c] + mid * du
                        ub[c] = u[bi, i, c] + b * du
                    _rhs(system, p, s, ua, k1)
                    for d in range(dim):
                        tmp[d] = s[d] + 0.5 * h * k1[d]
                    _rhs(system, p, tmp, um, k2)
                    for d in range(dim):
                        tmp[d] = s[d] + 0.5 * h * k2[d]
                    _rhs(system, p, tmp, um, k3)
                    for d in range(dim):
                        tmp[d] = s[d] + h * k3[d]
                    _rhs(system, p, tmp, ub, k4)
                    for d in range(dim):
                        s[d] = s[d] + (h / 6.0) * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d])
                finite = True
                for d in range(dim):
                    out[bi, i + 1, d] = s[d]
                    if not isfinite(s[d]):
                        finite = False
                if not finite and failed < 0:
                    failed = bi
    return result, failed


def central_difference(y, double dt):
    cdef double[:, :, :] v = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t nb = v.shape[0], n = v.shape[1], dim = v.shape[2]
    result = np.empty((nb, n, dim), dtype=np.float64)
    cdef double[:, :, :] out = result
    cdef Py_ssize_t b, i, d
    cdef double inv2 = 1.0 / (2.0 * dt), inv1 = 1.0 / dt
    with nogil:
        for b in range(nb):
            for d in range(dim):
                out[b, 0, d] = (v[b, 1, d] - v[b, 0, d]) * inv1
                out[b, n - 1, d] = (v[b, n - 1, d] - v[b, n - 2, d]) * inv1
                for i in range(1, n - 1):
                    out[b, i, d] = (v[b, i + 1, d] - v[b, i - 1, d]) * inv2
    return result
