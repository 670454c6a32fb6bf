"""Expectation oracles, finite-difference derivatives and brute-force grid search."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .noise import NoiseLaw, ProcessSpec, TimeGrid, generate_ensemble, sample_noise

FIRST_ORDER_STEP = 1e-5
SECOND_ORDER_STEP = 1e-4


@dataclass(frozen=True)
class ExpectationEstimate:
    value: float
    std_error: float
    n_samples: int
    method: str

    def __post_init__(self):
        if self.method not in ("enumeration", "monte-carlo"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.std_error >= 0:
            raise ValueError("std_error must be >= 0")
        if self.method == "enumeration" and self.std_error != 0:
            raise ValueError("enumeration estimates are exact")

    def to_dict(self):
        return {"value": self.value, "std_error": self.std_error,
                "n_samples": self.n_samples, "method": self.method}


def _as_samples(g, xi):
    vals = np.asarray(g(xi), dtype=np.float64)
    return np.broadcast_to(vals, np.shape(xi))


def mc_summary(samples) -> ExpectationEstimate:
    """Sample mean with standard error ``std / sqrt(n)``; rejects non-finite draws."""
    samples = np.asarray(samples, dtype=np.float64)
    bad = int(np.count_nonzero(~np.isfinite(samples)))
    if bad:
        raise NumericalError(f"{bad} of {samples.size} samples are not finite")
    n = samples.size
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    flat = samples.ravel()
    if np.all(flat == flat[0]):  # degenerate draws: the mean is exact, summation would round it
        return ExpectationEstimate(float(flat[0]), 0.0, n, "monte-carlo")
    return ExpectationEstimate(float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(n)), n, "monte-carlo")


class EnumerationOracle:
    """Exact expectations over ``xi = mean + sigma * eta`` for a finite-support law."""

    def __init__(self, law: NoiseLaw, mean: float, sigma: float):
        atoms, weights = law.atoms()
        self.law, self.mean, self.sigma = law, float(mean), float(sigma)
        self._atoms, self._weights = atoms, weights

    def support(self):
        return self.mean + self.sigma * self._atoms, self._weights

    def __call__(self, g) -> ExpectationEstimate:
        xi, w = self.support()
        vals = _as_samples(g, xi)
        if not np.all(np.isfinite(vals)):
            raise NumericalError("g is not finite on the support")
        return ExpectationEstimate(float(np.dot(w, vals)), 0.0, len(w), "enumeration")

    def recentered(self, mean: float) -> "EnumerationOracle":
        return EnumerationOracle(self.law, mean, self.sigma)


class SampleOracle:
    """Monte Carlo expectations over ``xi = mean + residuals`` on a fixed panel.

    Recentering keeps the residuals, so every expectation taken through one
    oracle (or its recentered copies) uses common random numbers.
    """

    def __init__(self, residuals, mean: float):
        self.residuals = np.asarray(residuals, dtype=np.float64)
        self.mean = float(mean)

    @classmethod
    def from_law(cls, law: NoiseLaw, mean: float, sigma: float, n: int, seed: int):
        return cls(sigma * sample_noise(law, n, seed), mean)

    @classmethod
    def from_samples(cls, samples, mean: float | None = None):
        samples = np.asarray(samples, dtype=np.float64)
        centre = float(samples.mean())
        return cls(samples - centre, centre if mean is None else mean)

    def __call__(self, g) -> ExpectationEstimate:
        xi = self.mean + self.residuals
        return mc_summary(_as_samples(g, xi))

    def recentered(self, mean: float) -> "SampleOracle":
        return SampleOracle(self.residuals, mean)


def expect_enumeration(g, law: NoiseLaw, mean: float = 0.0, sigma: float = 1.0) -> ExpectationEstimate:
    return EnumerationOracle(law, mean, sigma)(g)


def expect_mc(g, spec: ProcessSpec, t: float, n: int, seed: int, *, panel=None,
              grid: TimeGrid | None = None) -> ExpectationEstimate:
    """Monte Carlo estimate of ``E g(xi(t))``.

    Marginal mode draws ``xi(t) = mean(t) + vol(t) eta``; pass ``panel`` (a
    fixed vector of standardized draws) for common random numbers. Increment
    mode needs ``grid`` and ``t`` must be one of its points.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if spec.mode == "marginal":
        mean, vol = spec.curves(np.array([t]))
        eta = sample_noise(spec.noise, n, seed) if panel is None else np.asarray(panel, dtype=np.float64)
        if eta.shape != (n,):
            raise ValueError(f"panel must have shape ({n},), got {eta.shape}")
        xi = mean[0] + vol[0] * eta
    else:
        if grid is None:
            raise ValueError("increment mode needs the simulation grid")
        j = np.flatnonzero(np.isclose(grid.points, t, rtol=0, atol=1e-12 * max(1.0, abs(t))))
        if j.size == 0:
            raise ValueError(f"t={t} is not a grid point")
        xi = generate_ensemble(spec, grid, n, seed).values[:, j[0]]
    return mc_summary(_as_samples(g, xi))


def fd_step(x, order: int):
    """Step ``1e-5 * max(1, |x|)`` for first and ``1e-4 * max(1, |x|)`` for second derivatives."""
    base = FIRST_ORDER_STEP if order == 1 else SECOND_ORDER_STEP
    return base * np.maximum(1.0, np.abs(x))


def _shift(x, i, d):
    y = list(x)
    y[i] = y[i] + d
    return y


def fd_derivative(h, x, order: int = 1, axis=0):
    """Central-difference derivative of ``h(*x)``.

    ``x`` is a scalar or a sequence of coordinates. ``axis`` picks the
    coordinate; a pair ``(i, j)`` with ``order=2`` gives the mixed second
    derivative from the 4-point stencil. ``h`` may return arrays (e.g. one
    value per Monte Carlo path), which are differenced elementwise.
    """
    scalar = not isinstance(x, (tuple, list))
    x = [np.asarray(v, dtype=np.float64) for v in ([x] if scalar else x)]

    def call(y):
        return h(y[0]) if scalar else h(*y)

    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    if isinstance(axis, tuple):
        i, j = axis
        if order != 2:
            raise ValueError("mixed derivatives are second order")
        if i != j:
            hi, hj = fd_step(x[i], 2), fd_step(x[j], 2)
            pp = call(_shift(_shift(x, i, hi), j, hj))
            pm = call(_shift(_shift(x, i, hi), j, -hj))
            mp = call(_shift(_shift(x, i, -hi), j, hj))
            mm = call(_shift(_shift(x, i, -hi), j, -hj))
            return (pp - pm - mp + mm) / (4.0 * hi * hj)
        axis = i
    step = fd_step(x[axis], order)
    up, down = call(_shift(x, axis, step)), call(_shift(x, axis, -step))
    if order == 1:
        return (up - down) / (2.0 * step)
    return (up - 2.0 * call(x) + down) / (step * step)


def grid_points(lo: float, hi: float, step: float) -> np.ndarray:
    if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
        raise ValueError(f"need lo < hi, got {lo}, {hi}")
    if not step > 0:
        raise ValueError(f"step must be > 0, got {step}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count, dtype=np.float64)


def grid_argmax(h, lo: float, hi: float, step: float):
    """Largest ``h`` over ``lo, lo+step, ..., <= hi``; ties go to the smallest point."""
    pts = grid_points(lo, hi, step)
    vals = np.array([float(h(p)) for p in pts])
    if not np.all(np.isfinite(vals)):
        bad = pts[~np.isfinite(vals)]
        raise NumericalError(f"h is not finite at {bad.size} grid points, first at {bad[0]}")
    k = int(np.argmax(vals))
    return float(pts[k]), float(vals[k])
