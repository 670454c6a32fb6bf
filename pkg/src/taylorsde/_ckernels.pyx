# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Euler kernels. Must match ``_pykernels`` bit for bit."""

import numpy as np


def affine_euler(const double[::1] x0, const double[::1] alpha, const double[::1] beta,
                 const double[::1] gamma, const double[::1] kappa,
                 const double[:, ::1] z, bint full=True):
    cdef Py_ssize_t n = z.shape[0], m = z.shape[1], k, j
    cdef double x, inc
    if x0.shape[0] != n or alpha.shape[0] != m or beta.shape[0] != m \
            or gamma.shape[0] != m or kappa.shape[0] != m:
        raise ValueError("shape mismatch between start values, coefficients and noise")
    if full:
        out = np.empty((n, m + 1), dtype=np.float64)
    else:
        out = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] path
    cdef double[::1] term
    if full:
        path = out
        with nogil:
            for k in range(n):
                x = x0[k]
                path[k, 0] = x
                for j in range(m):
                    inc = (alpha[j] + beta[j] * x) + (gamma[j] + kappa[j] * x) * z[k, j]
                    x = x + inc
                    path[k, j + 1] = x
    else:
        term = out
        with nogil:
            for k in range(n):
                x = x0[k]
                for j in range(m):
                    inc = (alpha[j] + beta[j] * x) + (gamma[j] + kappa[j] * x) * z[k, j]
                    x = x + inc
                term[k] = x
    return out


def accumulate(const double[::1] f0, const double[:, ::1] drift,
               const double[:, ::1] diffusion, const double[:, ::1] dxi):
    cdef Py_ssize_t n = drift.shape[0], m = drift.shape[1], k, j
    cdef double f, inc
    if f0.shape[0] != n or diffusion.shape[0] != n or dxi.shape[0] != n \
            or diffusion.shape[1] != m or dxi.shape[1] != m:
        raise ValueError("shape mismatch between start values and increments")
    out = np.empty((n, m + 1), dtype=np.float64)
    cdef double[:, ::1] path = out
    with nogil:
        for k in range(n):
            f = f0[k]
            path[k, 0] = f
            for j in range(m):
                inc = drift[k, j] + diffusion[k, j] * dxi[k, j]
                f = f + inc
                path[k, j + 1] = f
    return out
