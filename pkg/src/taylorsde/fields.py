"""Twice-differentiable scalar fields f(t, x) and the built-in catalog."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericalError
from .estimation import fd_derivative

DERIVATIVES = ("f_t", "f_x", "f_tt", "f_xx", "f_tx")

# derivative name -> (order, axis) for fd_derivative over (t, x)
_FD_SPEC = {
    "f_t": (1, 0),
    "f_x": (1, 1),
    "f_tt": (2, 0),
    "f_xx": (2, 1),
    "f_tx": (2, (0, 1)),
}


@dataclass(frozen=True)
class ScalarField:
    """A vectorized function ``f(t, x)`` with partial derivatives.

    Derivatives listed in ``analytic`` are exact callbacks; the rest fall
    back to central finite differences. ``f_xi`` and ``f_xibar`` are the
    same derivative: shifting the mean moves xi one-for-one.
    """

    name: str
    f: Callable
    analytic: dict = field(default_factory=dict)
    time_dependent: bool = True

    def __post_init__(self):
        unknown = set(self.analytic) - set(DERIVATIVES)
        if unknown:
            raise ValueError(f"unknown derivative names {sorted(unknown)}")

    @property
    def derivative_source(self) -> str:
        return "analytic" if set(self.analytic) == set(DERIVATIVES) else "finite-difference"

    def __call__(self, t, x):
        return _checked(self.f(t, x), self.name, "f")

    def derivative(self, name: str, t, x, *, source: str | None = None):
        if name not in _FD_SPEC:
            raise ValueError(f"unknown derivative {name!r}")
        use_analytic = name in self.analytic if source is None else source == "analytic"
        if use_analytic:
            if name not in self.analytic:
                raise ValueError(f"{self.name} has no analytic {name}")
            out = self.analytic[name](t, x)
        else:
            order, axis = _FD_SPEC[name]
            out = fd_derivative(self.f, (t, x), order, axis)
        return _checked(out, self.name, name)

    def f_t(self, t, x):
        return self.derivative("f_t", t, x)

    def f_x(self, t, x):
        return self.derivative("f_x", t, x)

    def f_tt(self, t, x):
        return self.derivative("f_tt", t, x)

    def f_xx(self, t, x):
        return self.derivative("f_xx", t, x)

    def f_tx(self, t, x):
        return self.derivative("f_tx", t, x)


def _checked(value, name, what):
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{what} of field {name!r} is not finite")
    return arr if arr.ndim else float(arr)


def _zero(t, x):
    return np.zeros(np.broadcast(np.asarray(t), np.asarray(x)).shape)


def _const(c):
    def fn(t, x):
        return np.full(np.broadcast(np.asarray(t), np.asarray(x)).shape, float(c))
    return fn


def constant_field(c: float = 1.0) -> ScalarField:
    return ScalarField(f"constant({c})", _const(c), {k: _zero for k in DERIVATIVES}, time_dependent=False)


def identity() -> ScalarField:
    d = {k: _zero for k in DERIVATIVES}
    d["f_x"] = _const(1.0)
    return ScalarField("identity", lambda t, x: _const(0.0)(t, x) + x, d, time_dependent=False)


def affine(slope: float = 2.0, intercept: float = 3.0) -> ScalarField:
    d = {k: _zero for k in DERIVATIVES}
    d["f_x"] = _const(slope)
    return ScalarField(f"affine({slope},{intercept})", lambda t, x: _const(0.0)(t, x) + slope * x + intercept,
                       d, time_dependent=False)


def power(n: int) -> ScalarField:
    """``x**n`` for integer ``n >= 0``."""

    def mono(k, coef):
        if k < 0 or coef == 0:
            return _zero
        return lambda t, x: _const(0.0)(t, x) + coef * np.asarray(x, dtype=np.float64) ** k

    d = {k: _zero for k in DERIVATIVES}
    d["f_x"] = mono(n - 1, n)
    d["f_xx"] = mono(n - 2, n * (n - 1))
    return ScalarField(f"x^{n}", mono(n, 1), d, time_dependent=False)


def t_x2() -> ScalarField:
    """``t * x**2``."""
    return ScalarField("t*x^2", lambda t, x: t * np.square(x), {
        "f_t": lambda t, x: _const(0.0)(t, x) + np.square(x),
        "f_x": lambda t, x: 2.0 * t * x,
        "f_tt": _zero,
        "f_xx": lambda t, x: _const(0.0)(t, x) + 2.0 * t,
        "f_tx": lambda t, x: _const(0.0)(t, x) + 2.0 * x,
    })


def exp_field() -> ScalarField:
    def e(t, x):
        with np.errstate(over="ignore"):  # overflow surfaces as a non-finite value error
            return _const(0.0)(t, x) + np.exp(x)

    return ScalarField("exp", e, {"f_t": _zero, "f_x": e, "f_tt": _zero, "f_xx": e, "f_tx": _zero},
                       time_dependent=False)


def poly2(coeffs) -> ScalarField:
    """``c0 + c1 t + c2 x + c3 t^2 + c4 x^2 + c5 t x``."""
    c0, c1, c2, c3, c4, c5 = (float(c) for c in coeffs)
    return ScalarField("poly2", lambda t, x: c0 + c1 * t + c2 * x + c3 * t * t + c4 * x * x + c5 * t * x, {
        "f_t": lambda t, x: _const(0.0)(t, x) + c1 + 2 * c3 * t + c5 * x,
        "f_x": lambda t, x: _const(0.0)(t, x) + c2 + 2 * c4 * x + c5 * t,
        "f_tt": _const(2 * c3),
        "f_xx": _const(2 * c4),
        "f_tx": _const(c5),
    })


# ---- utilities -------------------------------------------------------------


def exponential_utility(gamma: float) -> ScalarField:
    """``U(x) = -exp(-gamma x)``; bounded above."""
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")

    def u(t, x):
        return _const(0.0)(t, x) - np.exp(-gamma * np.asarray(x, dtype=np.float64))

    return ScalarField(f"exponential_utility({gamma})", u, {
        "f_t": _zero,
        "f_x": lambda t, x: -gamma * u(t, x),
        "f_tt": _zero,
        "f_xx": lambda t, x: gamma * gamma * u(t, x),
        "f_tx": _zero,
    }, time_dependent=False)


def power_utility(gamma: float) -> ScalarField:
    """``U(x) = x^(1-gamma) / (1-gamma)`` on x > 0 (log utility at gamma = 1)."""
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    if gamma == 1:
        return log_utility()
    q = 1.0 - gamma

    def u(t, x):
        x = np.asarray(x, dtype=np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            return _const(0.0)(t, x) + np.where(x > 0, np.power(np.abs(x), q) / q, np.nan)

    return ScalarField(f"power_utility({gamma})", u, {
        "f_t": _zero,
        "f_x": lambda t, x: _const(0.0)(t, x) + np.power(np.asarray(x, dtype=np.float64), -gamma),
        "f_tt": _zero,
        "f_xx": lambda t, x: _const(0.0)(t, x) - gamma * np.power(np.asarray(x, dtype=np.float64), -gamma - 1),
        "f_tx": _zero,
    }, time_dependent=False)


def log_utility() -> ScalarField:
    def u(t, x):
        x = np.asarray(x, dtype=np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            return _const(0.0)(t, x) + np.where(x > 0, np.log(np.abs(x)), np.nan)

    return ScalarField("log_utility", u, {
        "f_t": _zero,
        "f_x": lambda t, x: _const(0.0)(t, x) + 1.0 / np.asarray(x, dtype=np.float64),
        "f_tt": _zero,
        "f_xx": lambda t, x: _const(0.0)(t, x) - 1.0 / np.square(np.asarray(x, dtype=np.float64)),
        "f_tx": _zero,
    }, time_dependent=False)


def utility(kind: str, gamma: float | None = None) -> ScalarField:
    if kind == "exponential":
        return exponential_utility(gamma)
    if kind == "power":
        return power_utility(gamma)
    if kind == "log":
        return log_utility()
    raise ValueError(f"unknown utility {kind!r}")


CATALOG = {
    "constant": lambda **kw: constant_field(kw.get("c", 1.0)),
    "identity": lambda **kw: identity(),
    "affine": lambda **kw: affine(),
    "quadratic": lambda **kw: power(2),
    "cubic": lambda **kw: power(3),
    "t_x2": lambda **kw: t_x2(),
    "exp": lambda **kw: exp_field(),
    "exponential_utility": lambda **kw: exponential_utility(kw.get("gamma", 2.0)),
    "power_utility": lambda **kw: power_utility(kw.get("gamma", 2.0)),
    "log_utility": lambda **kw: log_utility(),
}


def from_catalog(name: str, **params) -> ScalarField:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown field {name!r}; choose from {sorted(CATALOG)}") from None
    return factory(**params)

