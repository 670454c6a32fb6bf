"""Backend selection for the Euler kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback. Set ``TAYLORSDE_BACKEND=python`` to force the fallback.
"""

import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available_backends():
    return sorted(_BACKENDS)


def _select(name):
    if name in (None, "", "auto"):
        return "cython" if "cython" in _BACKENDS else "python"
    if name not in _BACKENDS:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}; have {available_backends()}")
    return name


BACKEND = _select(os.environ.get("TAYLORSDE_BACKEND"))


def set_backend(name):
    """Switch the active backend; returns the previous one."""
    global BACKEND
    previous, BACKEND = BACKEND, _select(name)
    return previous


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def affine_euler(x0, alpha, beta, gamma, kappa, z, full=True, backend=None):
    """Euler recursion ``x += (alpha_j + beta_j x) + (gamma_j + kappa_j x) z_kj``.

    ``alpha``/``beta`` carry the drift already multiplied by the step,
    ``gamma``/``kappa`` the diffusion already multiplied by its square root.
    Returns the full ``(n, m+1)`` path matrix or only the terminal column.
    """
    impl = _BACKENDS[_select(backend or BACKEND)]
    return impl.affine_euler(_f64(x0), _f64(alpha), _f64(beta), _f64(gamma), _f64(kappa), _f64(z), bool(full))


def accumulate(f0, drift, diffusion, dxi, backend=None):
    """Forward-Euler sum ``F_{j+1} = F_j + (drift_kj + diffusion_kj * dxi_kj)``."""
    impl = _BACKENDS[_select(backend or BACKEND)]
    return impl.accumulate(_f64(f0), _f64(drift), _f64(diffusion), _f64(dxi))
