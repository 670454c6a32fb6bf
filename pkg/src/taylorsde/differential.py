"""Pathwise reconstruction of f(t, xi(t)) from stochastic differentials.

Two schemes integrate the same ensemble with forward Euler:

* the Taylor-anchored differential
  ``df = [f_t(psi) + f_tt(psi)(t - a) + f_tx(psi)(mean(t) - b) + delta_t varpi_t] dt + delta varpi_x dxi``
  where ``f = E f + delta * varpi`` is the ensemble decomposition and
  ``delta * varpi_x = f_x``; the time-independent form keeps only the
  ``dxi`` term;
* Ito's lemma, ``df = (f_t + mu f_x + s^2 f_xx / 2) dt + s f_x dW``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from . import kernels
from .fields import ScalarField
from .noise import PathEnsemble
from .taylor import ExpansionPoint

NEW_MODES = ("time-dependent", "time-independent")
COMPARISON_KEYS = ("scheme", "max_abs_error", "terminal_rmse", "flags")

DELTA_ZERO = "delta_zero"
OUTSIDE_ITO = "outside_assumptions"


@dataclass(frozen=True, eq=False)
class EnsembleStatistics:
    times: np.ndarray
    values: np.ndarray  # f(t, xi) per path and time
    mean_f: np.ndarray
    delta: np.ndarray
    varpi: np.ndarray  # NaN where delta is zero

    @property
    def zero_delta(self) -> np.ndarray:
        return ~(self.delta > 0)


def _zero_threshold(mean_f):
    return 1e-13 * np.maximum(1.0, np.abs(mean_f))


def ensemble_statistics(field: ScalarField, ensemble: PathEnsemble, reference: PathEnsemble | None = None):
    """Ensemble mean and population standard deviation of f, and each path's standardized residual.

    With ``reference`` the mean and deviation come from that (held-out)
    ensemble and only the residuals from ``ensemble``.
    """
    if ensemble.n_paths < 2 and reference is None:
        raise ValueError("ensemble statistics need at least 2 paths")
    t = ensemble.times
    values = field(t[None, :], ensemble.values)
    if reference is None:
        ref_values = values
    else:
        if reference.n_paths < 2 or not np.array_equal(reference.times, t):
            raise ValueError("reference ensemble needs >= 2 paths on the same grid")
        ref_values = field(t[None, :], reference.values)
    mean_f = ref_values.mean(axis=0)
    delta = ref_values.std(axis=0)
    delta = np.where(delta <= _zero_threshold(mean_f), 0.0, delta)
    with np.errstate(invalid="ignore", divide="ignore"):
        varpi = np.where(delta > 0, (values - mean_f) / np.where(delta > 0, delta, 1.0), np.nan)
    return EnsembleStatistics(t, values, mean_f, delta, varpi)


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    scheme: str
    times: np.ndarray
    fhat: np.ndarray
    truth: np.ndarray
    flags: tuple = ()
    terms: dict = dc_field(default_factory=dict)

    @property
    def max_abs_error(self) -> float:
        return float(np.max(np.abs(self.fhat - self.truth)))

    @property
    def terminal_rmse(self) -> float:
        return float(np.sqrt(np.mean((self.fhat[:, -1] - self.truth[:, -1]) ** 2)))

    def row(self):
        return {"scheme": self.scheme, "max_abs_error": self.max_abs_error,
                "terminal_rmse": self.terminal_rmse, "flags": ";".join(self.flags)}


def reconstruct_new_calculus(field: ScalarField, ensemble: PathEnsemble, psi: ExpansionPoint,
                             mode: str = "time-dependent", reference: PathEnsemble | None = None):
    if mode not in NEW_MODES:
        raise ValueError(f"mode must be one of {NEW_MODES}, got {mode!r}")
    stats = ensemble_statistics(field, ensemble, reference)
    t, x = ensemble.times, ensemble.values
    dt = ensemble.grid.dt
    n, m = x.shape[0], x.shape[1] - 1
    flags = []
    if np.any(stats.zero_delta[:-1]):
        flags.append(DELTA_ZERO)

    # delta * varpi_x = f_x, so the diffusion coefficient never divides by delta
    diffusion = np.broadcast_to(field.f_x(t[None, :-1], x[:, :-1]), (n, m))
    terms = {"delta": stats.delta, "mean_f": stats.mean_f}
    if mode == "time-independent":
        drift = np.zeros((n, m))
    else:
        a, b = psi.a, psi.b
        mean_xi = (reference.values if reference is not None else x).mean(axis=0)
        varpi = np.where(stats.zero_delta[None, :], 0.0, stats.varpi)
        delta_t = np.gradient(stats.delta, dt, edge_order=1) if m >= 1 else np.zeros(1)
        varpi_t = np.gradient(varpi, dt, axis=1, edge_order=1)
        anchored = field.f_t(a, b) + field.f_tt(a, b) * (t - a) + field.f_tx(a, b) * (mean_xi - b)
        bracket = anchored[None, :] + delta_t[None, :] * varpi_t
        drift = bracket[:, :-1] * dt
        terms.update(anchored=anchored, delta_t=delta_t)
    fhat = kernels.accumulate(stats.values[:, 0], drift, diffusion, np.diff(x, axis=1))
    return ReconstructionResult(f"new-{mode}", t, fhat, stats.values, tuple(flags), terms)


def _as_coefficient(c) -> Callable:
    if callable(c):
        return c
    return lambda t, x: np.full(np.broadcast(np.asarray(t), np.asarray(x)).shape, float(c))


@dataclass(frozen=True)
class ItoCoefficients:
    drift: Callable
    diffusion: Callable


def ito_coefficients(field: ScalarField, drift, vol) -> ItoCoefficients:
    """Ito drift ``f_t + mu f_x + s^2 f_xx / 2`` and diffusion ``s f_x`` for ``dxi = mu dt + s dW``."""
    mu, s = _as_coefficient(drift), _as_coefficient(vol)

    def ito_drift(t, x):
        return field.f_t(t, x) + mu(t, x) * field.f_x(t, x) + 0.5 * s(t, x) ** 2 * field.f_xx(t, x)

    def ito_diffusion(t, x):
        return s(t, x) * field.f_x(t, x)

    return ItoCoefficients(ito_drift, ito_diffusion)


def reconstruct_ito(field: ScalarField, ensemble: PathEnsemble, drift, vol) -> ReconstructionResult:
    """Forward-Euler Ito reconstruction along the observed paths.

    The Brownian increment is implied by the path, ``dW = (dxi - mu dt) / s``,
    so ``drift dt + diffusion dW`` is accumulated in the algebraically equal
    form ``(f_t + s^2 f_xx / 2) dt + f_x dxi``, which stays finite where s
    vanishes.
    """
    mu, s = _as_coefficient(drift), _as_coefficient(vol)
    t, x = ensemble.times, ensemble.values
    n, m = x.shape[0], x.shape[1] - 1
    tl, xl = t[None, :-1], x[:, :-1]
    coef = ito_coefficients(field, mu, s)
    f_x = np.broadcast_to(field.f_x(tl, xl), (n, m))
    # drift - mu f_x: the mu f_x dt part is carried by f_x dxi
    time_part = np.broadcast_to(coef.drift(tl, xl) - mu(tl, xl) * f_x, (n, m))
    truth = np.broadcast_to(field(t[None, :], x), x.shape)
    fhat = kernels.accumulate(truth[:, 0], time_part * ensemble.grid.dt, f_x, np.diff(x, axis=1))
    flags = ()
    if ensemble.mode != "increment" or ensemble.noise != "standard-normal":
        flags = (OUTSIDE_ITO,)
    return ReconstructionResult("ito", t, fhat, np.array(truth), flags)


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple

    def to_csv(self, header_lines=()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COMPARISON_KEYS)
        for r in self.rows:
            w.writerow([r["scheme"], f"{r['max_abs_error']:.17g}", f"{r['terminal_rmse']:.17g}", r["flags"]])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps([{k: r[k] for k in COMPARISON_KEYS} for r in self.rows], indent=2)

    def by_scheme(self, scheme):
        for r in self.rows:
            if r["scheme"] == scheme:
                return r
        raise KeyError(scheme)


def compare_schemes(field: ScalarField, ensemble: PathEnsemble, psi: ExpansionPoint, drift, vol,
                    with_results: bool = False):
    """Reconstruct with both Taylor-anchored forms and Ito on one ensemble; no winner is picked."""
    results = [
        reconstruct_new_calculus(field, ensemble, psi, "time-dependent"),
        reconstruct_new_calculus(field, ensemble, psi, "time-independent"),
        reconstruct_ito(field, ensemble, drift, vol),
    ]
    table = ComparisonTable(tuple(r.row() for r in results))
    return (table, results) if with_results else table


@dataclass(frozen=True)
class WeakErrorStudy:
    dts: tuple
    mean_fhat: tuple  # plain MC mean of the reconstructed terminal value
    mean_fhat_se: tuple
    errors: tuple  # E[fhat_T - f(exact X_T)] on shared Brownian paths
    errors_se: tuple
    slope: float
    exact_mean: float


def weak_error_study(field: ScalarField, x0: float, mu: float, sigma: float, T: float, step_counts,
                     n_paths: int, seed: int, exact_mean: float, workers: int = 1) -> WeakErrorStudy:
    """Weak error of the Ito reconstruction on Euler-Maruyama GBM paths at several step sizes.

    All levels are driven by one Brownian path per sample (coarse increments
    are sums of fine ones), and the exact solution on that path,
    ``x0 exp((mu - sigma^2/2) T + sigma W_T)``, serves as a control variate
    whose mean ``exact_mean`` is known. The error at each level is the mean of
    ``fhat_T - f(T, X_T^exact)``; the slope is the least-squares fit of log
    |error| against log dt.
    """
    from .noise import BLOCK_PATHS, NoiseLaw, TimeGrid, coarsen, map_blocks, simulate_affine

    counts = sorted({int(c) for c in step_counts})
    fine = counts[-1]
    if any(fine % c for c in counts):
        raise ValueError("every step count must divide the finest one")
    law = NoiseLaw()

    def block(rng, start, stop):
        z = law.draw(rng, (BLOCK_PATHS, fine))[: stop - start]
        w_T = z.sum(axis=1) * np.sqrt(T / fine)
        exact = field(T, x0 * np.exp((mu - 0.5 * sigma**2) * T + sigma * w_T))
        out = []
        for c in counts:
            grid = TimeGrid(0.0, T, c)
            paths = simulate_affine(x0, 0.0, mu, 0.0, sigma, grid, stop - start, 0, z=coarsen(z, fine // c))
            ens = PathEnsemble(grid, paths, seed, "increment", "standard-normal")
            fhat = reconstruct_ito(field, ens, lambda t, x: mu * x, lambda t, x: sigma * x).fhat[:, -1]
            out.append((fhat, fhat - exact))
        return out

    parts = map_blocks(block, seed, n_paths, workers)
    means, mses, errs, eses = [], [], [], []
    for i in range(len(counts)):
        fh = np.concatenate([p[i][0] for p in parts])
        d = np.concatenate([p[i][1] for p in parts])
        means.append(float(fh.mean()))
        mses.append(float(fh.std(ddof=1) / np.sqrt(fh.size)))
        errs.append(float(d.mean()))
        eses.append(float(d.std(ddof=1) / np.sqrt(d.size)))
    dts = tuple(T / c for c in counts)
    slope = float(np.polyfit(np.log(dts), np.log(np.abs(errs)), 1)[0]) if len(counts) > 1 else float("nan")
    return WeakErrorStudy(dts, tuple(means), tuple(mses), tuple(errs), tuple(eses), slope, float(exact_mean))
