"""Second-order Taylor expansion around an anchor (a, b) and the choice of the time anchor."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import NumericalError
from .fields import ScalarField

ROOT_TOL = 1e-8
BRACKET_XTOL = 1e-10
MAX_DOUBLINGS = 10


@dataclass(frozen=True)
class ExpansionPoint:
    a: float
    b: float
    fitted: bool = False
    root_found: bool | None = None
    degenerate: bool = False
    residual: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError(f"expansion point must be finite, got ({self.a}, {self.b})")


@dataclass(frozen=True)
class Coefficients:
    """The six point values of the second-order expansion at the anchor."""

    f_psi: float
    f_t: float
    f_xi: float
    half_f_xixi: float
    half_f_tt: float
    f_txi: float

    @classmethod
    def at(cls, field: ScalarField, psi: ExpansionPoint) -> "Coefficients":
        a, b = psi.a, psi.b
        return cls(
            field(a, b),
            field.f_t(a, b),
            field.f_x(a, b),
            0.5 * field.f_xx(a, b),
            0.5 * field.f_tt(a, b),
            field.f_tx(a, b),
        )

    def evaluate(self, dt, dx):
        """Expansion value at offsets ``dt = t - a`` and ``dx = xi - b``."""
        return (self.f_psi + self.f_t * dt + self.f_xi * dx + self.half_f_xixi * dx * dx
                + self.half_f_tt * dt * dt + self.f_txi * dt * dx)


@dataclass(frozen=True)
class ExpansionReport:
    f_psi: float
    f_t: float
    f_xi: float
    half_f_xixi: float
    half_f_tt: float
    f_txi: float
    expansion: float
    remainder: float

    def to_dict(self):
        return asdict(self)


def taylor_expand(field: ScalarField, psi: ExpansionPoint, t: float, xi: float) -> ExpansionReport:
    c = Coefficients.at(field, psi)
    expansion = float(c.evaluate(t - psi.a, xi - psi.b))
    remainder = field(t, xi) - expansion
    return ExpansionReport(**asdict(c), expansion=expansion, remainder=float(remainder))


def expected_expansion(field: ScalarField, psi: ExpansionPoint, t: float, mean: float,
                       second_moment: float) -> float:
    """Expected second-order expansion given ``E xi = mean`` and ``E (xi - b)^2 = second_moment``.

    The linear terms only see the mean; the quadratic term in xi needs the
    second moment about the anchor.
    """
    dm = mean - psi.b
    if second_moment < dm * dm - 1e-12 * max(1.0, dm * dm):
        raise ValueError(f"second moment {second_moment} is below (mean - b)^2 = {dm * dm}")
    c = Coefficients.at(field, psi)
    dt = t - psi.a
    return float(c.f_psi + c.f_t * dt + c.f_xi * dm + c.half_f_xixi * second_moment
                 + c.half_f_tt * dt * dt + c.f_txi * dt * dm)


def expected_remainder(field: ScalarField, psi: ExpansionPoint, t: float, oracle) -> float:
    """``E f(t, xi) - expected_expansion`` with moments taken from ``oracle``."""
    ef = oracle(lambda xi: field(t, xi)).value
    mean = oracle(lambda xi: xi).value
    m2 = oracle(lambda xi: (xi - psi.b) ** 2).value
    return ef - expected_expansion(field, psi, t, mean, m2)


def remainder_estimate(field: ScalarField, psi: ExpansionPoint, t: float, oracle):
    """``E R(t, xi)`` as an estimate with its own standard error (pathwise remainder)."""
    c = Coefficients.at(field, psi)
    return oracle(lambda xi: field(t, xi) - c.evaluate(t - psi.a, xi - psi.b))


def foc_residual(field: ScalarField, psi: ExpansionPoint, t: float, mean_star: float, oracle) -> float:
    """Left side of the first-order condition for the mean, as a function of the anchor.

    ``E f_x(t, mean* + noise) - f_x(psi) - f_xx(psi)(mean* - b) - f_tx(psi)(t - a)``.
    ``oracle`` is re-centred on ``mean_star``.
    """
    a, b = psi.a, psi.b
    ef_x = oracle.recentered(mean_star)(lambda xi: field.f_x(t, xi)).value
    return float(ef_x - field.f_x(a, b) - field.f_xx(a, b) * (mean_star - b) - field.f_tx(a, b) * (t - a))


def fit_a_hat(field: ScalarField, b: float, t: float, empirical_mean: float, oracle) -> ExpansionPoint:
    """Pick the time anchor that makes the first-order condition hold at ``empirical_mean``.

    Scans outward from ``a = t`` (half-width ``max(1, |t|)``, doubled up to
    2**10 times) for a sign change, takes the one nearest ``t`` and refines
    it with Brent's method. Without a sign change the minimizer of ``|g|``
    over the scanned range is returned with ``root_found=False``. When
    ``t`` itself satisfies the root tolerance it is returned (this is also
    the tie-break when g vanishes identically); ``degenerate`` marks g
    vanishing across the whole first scan.
    """

    def g(a):
        v = foc_residual(field, ExpansionPoint(a, b), t, empirical_mean, oracle)
        if not math.isfinite(v):
            raise NumericalError(f"first-order residual is not finite at a={a}")
        return v

    def done(a, val, root, degenerate=False):
        return ExpansionPoint(float(a), b, fitted=True, root_found=root, degenerate=degenerate, residual=float(val))

    g_t = g(t)
    w0 = max(1.0, abs(t))
    if abs(g_t) <= ROOT_TOL:
        degenerate = abs(g(t - w0)) <= ROOT_TOL and abs(g(t + w0)) <= ROOT_TOL
        return done(t, g_t, True, degenerate)

    scanned = {t: g_t}
    for k in range(MAX_DOUBLINGS + 1):
        w = w0 * 2.0**k
        for a in (t - w, t + w):
            scanned[a] = g(a)
        pts = sorted(scanned)
        brackets = [(lo, hi) for lo, hi in zip(pts, pts[1:]) if np.sign(scanned[lo]) != np.sign(scanned[hi])]
        if brackets:
            lo, hi = min(brackets, key=lambda br: min(abs(br[0] - t), abs(br[1] - t)))
            if scanned[lo] == 0.0 or scanned[hi] == 0.0:
                root = lo if scanned[lo] == 0.0 else hi
            else:
                root = brentq(g, lo, hi, xtol=BRACKET_XTOL, rtol=4 * np.finfo(float).eps, maxiter=500)
            val = g(root)
            return done(root, val, abs(val) <= ROOT_TOL)

    pts = sorted(scanned)
    vals = [abs(scanned[p]) for p in pts]
    i = int(np.argmin(vals))
    best = pts[i]
    if 0 < i < len(pts) - 1:
        try:
            res = minimize_scalar(lambda a: abs(g(a)), bracket=(pts[i - 1], best, pts[i + 1]), method="golden",
                                  options={"xtol": BRACKET_XTOL})
        except ValueError:  # flat neighbourhood, not a valid bracket
            res = None
        if res is not None and abs(g(res.x)) < vals[i]:
            best = float(res.x)
    val = g(best)
    return done(best, val, abs(val) <= ROOT_TOL)
