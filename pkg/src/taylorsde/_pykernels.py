"""Pure numpy fallback for the compiled Euler kernels.

Loops run over time with paths vectorized; the arithmetic is parenthesized
exactly as in ``_ckernels.pyx`` so both backends round identically.
"""

import numpy as np


def affine_euler(x0, alpha, beta, gamma, kappa, z, full=True):
    n, m = z.shape
    if x0.shape[0] != n or not (alpha.shape[0] == beta.shape[0] == gamma.shape[0] == kappa.shape[0] == m):
        raise ValueError("shape mismatch between start values, coefficients and noise")
    x = np.array(x0, dtype=np.float64, copy=True)
    if full:
        out = np.empty((n, m + 1), dtype=np.float64)
        out[:, 0] = x
    for j in range(m):
        inc = (alpha[j] + beta[j] * x) + (gamma[j] + kappa[j] * x) * z[:, j]
        x = x + inc
        if full:
            out[:, j + 1] = x
    return out if full else x


def accumulate(f0, drift, diffusion, dxi):
    n, m = drift.shape
    if f0.shape[0] != n or diffusion.shape != (n, m) or dxi.shape != (n, m):
        raise ValueError("shape mismatch between start values and increments")
    out = np.empty((n, m + 1), dtype=np.float64)
    out[:, 0] = f0
    inc = drift + diffusion * dxi
    f = out[:, 0].copy()
    for j in range(m):
        f = f + inc[:, j]
        out[:, j + 1] = f
    return out
