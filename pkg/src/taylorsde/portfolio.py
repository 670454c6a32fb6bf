"""Constant-policy investment problem: wealth paths, value function, Taylor constants, oracles.

Wealth follows ``dX = mu pi dt + pi sigma dW`` with pi the amount held in
the risky asset and a zero risk-free rate. All value-function evaluations
for one seed share a noise panel (common random numbers), so J(t, x; pi) is
a smooth function of t, x and pi and can be finite-differenced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np

from . import kernels
from .differential import ensemble_statistics
from .errors import NumericalError
from .estimation import ExpectationEstimate, SampleOracle, fd_derivative, fd_step, grid_argmax, grid_points, mc_summary
from .fields import ScalarField, utility
from .noise import NoiseLaw, PathEnsemble, TimeGrid, derive_seed, noise_panel, simulate_affine
from .taylor import ExpansionPoint, fit_a_hat

CSV_KEYS = ("mu", "sigma", "gamma", "T", "n_paths", "seed", "pi_paper", "pi_merton", "pi_grid",
            "fk_residual", "delta_stein", "delta_ensemble")


@dataclass(frozen=True)
class UtilitySpec:
    kind: str = "exponential"
    gamma: float | None = 2.0

    def __post_init__(self):
        if self.kind not in ("exponential", "power", "log"):
            raise ValueError(f"unknown utility {self.kind!r}")
        if self.kind != "log" and not (self.gamma is not None and self.gamma > 0):
            raise ValueError(f"{self.kind} utility needs gamma > 0")

    def field(self) -> ScalarField:
        return utility(self.kind, self.gamma)

    def __call__(self, x):
        with np.errstate(over="ignore"):
            return self.field().f(0.0, x)


@dataclass(frozen=True)
class PortfolioProblem:
    x0: float = 1.0
    mu: float = 0.08
    sigma: float = 0.2
    T: float = 1.0
    s: float = 0.0
    utility: UtilitySpec = dc_field(default_factory=UtilitySpec)
    policy_grid: tuple = (0.0, 3.0, 0.05)
    steps: int = 50

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not (0 <= self.s < self.T):
            raise ValueError(f"need T > s >= 0, got s={self.s}, T={self.T}")
        if not math.isfinite(self.x0) or not math.isfinite(self.mu):
            raise ValueError("x0 and mu must be finite")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")

    def grid(self, t: float | None = None) -> TimeGrid:
        return TimeGrid(self.s if t is None else t, self.T, self.steps)


def simulate_wealth(p: PortfolioProblem, pi: float, grid: TimeGrid, n: int, seed: int, workers: int = 1):
    """Euler paths ``X_{j+1} = X_j + mu pi dt + pi sigma sqrt(dt) Z_j`` started at ``x0``."""
    if grid.t0 < p.s - 1e-12 or grid.T > p.T + 1e-12:
        raise ValueError(f"grid [{grid.t0}, {grid.T}] must lie inside [{p.s}, {p.T}]")
    values = simulate_affine(p.x0, p.mu * pi, 0.0, pi * p.sigma, 0.0, grid, n, seed, workers=workers)
    return PathEnsemble(grid, values, int(seed), "increment", "standard-normal")


@lru_cache(maxsize=8)
def _panel(n: int, steps: int, seed: int) -> np.ndarray:
    z = noise_panel(NoiseLaw(), n, steps, seed)
    z.setflags(write=False)
    return z


def terminal_wealth(p: PortfolioProblem, pi: float, t: float, x, n: int, seed: int) -> np.ndarray:
    """X(T) per path, started from X(t) = x with ``p.steps`` Euler steps over [t, T].

    The step count is fixed, so for a given seed every (t, x, pi) is driven
    by the same noise panel. Past the horizon the wealth is frozen.
    """
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    x = np.broadcast_to(np.asarray(x, dtype=np.float64), (n,))
    if t >= p.T:
        return np.array(x)
    grid = TimeGrid(t, p.T, p.steps)
    alpha = np.full(p.steps, p.mu * pi * grid.dt)
    gamma = np.full(p.steps, pi * p.sigma * math.sqrt(grid.dt))
    zero = np.zeros(p.steps)
    return kernels.affine_euler(x, alpha, zero, gamma, zero, _panel(n, p.steps, seed), full=False)


def _utilities(p: PortfolioProblem, pi: float, t: float, x, n: int, seed: int) -> np.ndarray:
    return p.utility(terminal_wealth(p, pi, t, x, n, seed))


def value_function(p: PortfolioProblem, pi: float, t: float, x: float, n: int, seed: int) -> ExpectationEstimate:
    """Monte Carlo ``E U(X(T))`` from ``X(t) = x`` under the constant policy ``pi``."""
    if not (p.s - 1e-12 <= t <= p.T):
        raise ValueError(f"t={t} outside [{p.s}, {p.T}]")
    u = _utilities(p, pi, t, x, n, seed)
    bad = int(np.count_nonzero(~np.isfinite(u)))
    if bad:
        raise NumericalError(f"utility undefined on {bad} of {n} paths (e.g. non-positive wealth)")
    return mc_summary(u)


def value_field(p: PortfolioProblem, pi: float, n: int, seed: int) -> ScalarField:
    """J(t, x) = E U(x + D(t)) with D(t) the terminal wealth gain from t on one fixed panel.

    Wealth is additive, so starting at x shifts every terminal value by x;
    the gain D(t) is simulated once per t. Derivatives are finite differences.
    """

    @lru_cache(maxsize=256)
    def gain(t):
        return terminal_wealth(p, pi, t, 0.0, n, seed)

    def f(t, x):
        t, x = np.broadcast_arrays(np.asarray(t, dtype=np.float64), np.asarray(x, dtype=np.float64))
        out = np.empty(t.shape)
        for tv in np.unique(t):
            sel = t == tv
            d = gain(float(tv))
            out[sel] = p.utility(x[sel][:, None] + d[None, :]).mean(axis=1)
        return out if out.ndim else float(out)

    return ScalarField(f"J[pi={pi}]", f)


@dataclass(frozen=True, eq=False)
class ValueEstimate:
    """Finite-difference constants of J at the anchor, with per-path contributions."""

    psi: ExpansionPoint
    pi: float
    J: ExpectationEstimate
    constants: dict  # name -> ExpectationEstimate, for c1..c4
    samples: dict = dc_field(repr=False, default_factory=dict)

    def value(self, name):
        return self.constants[name].value

    def std_error(self, name):
        return self.constants[name].std_error


CONSTANT_SPEC = {"c1": (1, 0), "c2": (2, 0), "c3": (2, (0, 1)), "c4": (2, 1)}
CONSTANT_NAMES = {"c1": "J_t", "c2": "J_tt", "c3": "J_tX", "c4": "J_XX"}


def estimate_constants(p: PortfolioProblem, pi: float, psi: ExpansionPoint, n: int, seed: int) -> ValueEstimate:
    """c1 = J_t, c2 = J_tt, c3 = J_tX, c4 = J_XX at psi, differenced path by path on one panel."""
    a, b = psi.a, psi.b
    reach = float(max(fd_step(a, 1), fd_step(a, 2)))
    if a + reach > p.T:
        raise ValueError(f"stencil around a={a} reaches past the horizon T={p.T}")

    def h(t, x):
        u = _utilities(p, pi, float(t), float(x), n, seed)
        bad = int(np.count_nonzero(~np.isfinite(u)))
        if bad:
            raise NumericalError(f"utility undefined on {bad} of {n} paths at (t={t}, x={x})")
        return u

    samples = {name: fd_derivative(h, (a, b), order, axis) for name, (order, axis) in CONSTANT_SPEC.items()}
    constants = {name: mc_summary(v) for name, v in samples.items()}
    return ValueEstimate(psi, pi, mc_summary(h(a, b)), constants, samples)


def paper_pi_star(c3: float, c4: float, sigma: float) -> float:
    """Closed-form policy ``c / (2 sigma)`` with ``c = -c3 / c4``."""
    if c4 == 0:
        raise ZeroDivisionError("c4 = 0: the closed-form policy is undefined")
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return (-c3 / c4) / (2.0 * sigma)


def fk_quadratic(c3: float, c4: float, mu: float, sigma: float):
    """``pi -> c3 mu pi + c4 pi^2 sigma mu``, the policy-dependent part of the stationarity condition."""
    return lambda pi: c3 * mu * pi + c4 * pi * pi * sigma * mu


@dataclass(frozen=True)
class FKResidual:
    value: float
    std_error: float | None
    pi_sup: float
    sup_value: float


def feynman_kac_residual(constants, a_hat: float, s: float, x: float, p: PortfolioProblem,
                         pi_range=None) -> FKResidual:
    """``c1 + c2 (s - a_hat) + c3 x + sup_pi {c3 mu pi + c4 pi^2 sigma mu}`` with the sup on a grid.

    ``constants`` is a ValueEstimate (standard error propagated path by path
    at the maximizing grid point) or a plain ``(c1, c2, c3, c4)`` tuple.
    """
    lo, hi, step = pi_range or p.policy_grid
    if isinstance(constants, ValueEstimate):
        c1, c2, c3, c4 = (constants.value(k) for k in ("c1", "c2", "c3", "c4"))
    else:
        c1, c2, c3, c4 = (float(v) for v in constants)
    pi_sup, sup_value = grid_argmax(fk_quadratic(c3, c4, p.mu, p.sigma), lo, hi, step)
    value = c1 + c2 * (s - a_hat) + c3 * x + sup_value
    se = None
    if isinstance(constants, ValueEstimate):
        smp = constants.samples
        per_path = (smp["c1"] + smp["c2"] * (s - a_hat) + smp["c3"] * x
                    + fk_quadratic(smp["c3"], smp["c4"], p.mu, p.sigma)(pi_sup))
        se = mc_summary(per_path).std_error
    return FKResidual(float(value), se, pi_sup, sup_value)


def merton_oracle(p: PortfolioProblem) -> float:
    """Classical optimum ``mu / (gamma sigma^2)`` for exponential utility and additive wealth."""
    if p.utility.kind != "exponential":
        raise NotImplementedError("the closed-form optimum is only available for exponential utility")
    return p.mu / (p.utility.gamma * p.sigma**2)


@dataclass(frozen=True)
class GridSearchResult:
    pi_hat: float
    table: tuple  # (pi, J, std_error) rows
    seed: int
    n: int


def policy_grid_search(p: PortfolioProblem, n: int, seed: int, workers: int = 1) -> GridSearchResult:
    """Brute-force argmax of J(s, x0; pi) over the policy grid, every pi on the same panel."""
    pis = grid_points(*p.policy_grid)
    _panel(n, p.steps, seed)  # build once; threads then share it read-only

    def row(pi):
        est = value_function(p, float(pi), p.s, p.x0, n, seed)
        return float(pi), est.value, est.std_error

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            table = tuple(pool.map(row, pis))
    else:
        table = tuple(row(pi) for pi in pis)
    values = np.array([r[1] for r in table])
    return GridSearchResult(table[int(np.argmax(values))][0], table, int(seed), int(n))


@dataclass
class ReportConfig:
    n_paths: int = 100_000
    seed: int = 0
    n_fit: int = 20_000
    n_outer: int = 256
    n_inner: int = 2_000
    j_steps: int = 20
    pi_candidate: float | None = None
    workers: int = 1


def _clean(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(x) for x in v]
    return v


def _point_oracle(x):
    return SampleOracle(np.zeros(2), x)


def _std_of_std_error(samples) -> float:
    """Delta-method standard error of a population standard deviation."""
    n = samples.size
    d = samples - samples.mean()
    m2, m4 = np.mean(d**2), np.mean(d**4)
    if m2 <= 0:
        return 0.0
    return float(math.sqrt(max(m4 - m2 * m2, 0.0) / (4.0 * m2 * n)))


def portfolio_report(p: PortfolioProblem, cfg: ReportConfig) -> dict:
    """Run every estimate and oracle and collect them; agreement is reported, never asserted.

    Each stage records its own status so a failing stage leaves the others intact.
    """
    rec = {"status": {}}
    status = rec["status"]

    def stage(name, fn):
        try:
            out = fn()
            status[name] = "ok"
            return out
        except (ArithmeticError, ValueError, NotImplementedError) as exc:
            status[name] = f"error: {exc}"
            return None

    rec["seeds"] = {"panel": cfg.seed, "outer_ensemble": derive_seed(cfg.seed, 1)}
    rec["pi_merton"] = stage("pi_merton", lambda: merton_oracle(p))

    grid = stage("pi_grid", lambda: policy_grid_search(p, cfg.n_paths, cfg.seed, cfg.workers))
    rec["pi_grid"] = grid.pi_hat if grid else None
    rec["pi_grid_table"] = [{"pi": r[0], "J": r[1], "std_error": r[2]} for r in grid.table] if grid else None

    pi_c = cfg.pi_candidate if cfg.pi_candidate is not None else rec["pi_grid"]
    rec["pi_candidate"] = pi_c

    psi = None
    if pi_c is not None:
        def fit():
            J = value_field(p, pi_c, cfg.n_fit, cfg.seed)
            return fit_a_hat(J, 0.0, p.s, p.x0, _point_oracle(p.x0))

        psi = stage("a_hat", fit)
    rec["a_hat"] = psi.a if psi else None
    rec["a_hat_root_found"] = psi.root_found if psi else None
    rec["a_hat_foc_residual"] = psi.residual if psi else None
    rec["b"] = 0.0

    consts = stage("constants", lambda: estimate_constants(p, pi_c, psi, cfg.n_paths, cfg.seed)) if psi else None
    rec["constants"] = ({k: {"value": v.value, "std_error": v.std_error, "derivative": CONSTANT_NAMES[k]}
                         for k, v in consts.constants.items()} if consts else None)

    def pi_paper():
        c3, c4 = consts.value("c3"), consts.value("c4")
        est = paper_pi_star(c3, c4, p.sigma)
        # linearized per-path contribution of (c3, c4) to -c3 / (2 c4 sigma)
        lin = -consts.samples["c3"] / (2 * c4 * p.sigma) + c3 * consts.samples["c4"] / (2 * c4 * c4 * p.sigma)
        return est, mc_summary(lin).std_error

    out = stage("pi_paper", pi_paper) if consts else None
    rec["pi_paper"], rec["pi_paper_std_error"] = out if out else (None, None)

    fk = stage("fk_residual", lambda: feynman_kac_residual(consts, psi.a, p.s, p.x0, p)) if consts else None
    rec["fk_residual"] = fk.value if fk else None
    rec["fk_residual_std_error"] = fk.std_error if fk else None
    rec["fk_pi_sup"] = fk.pi_sup if fk else None

    if consts:
        c4 = consts.constants["c4"]
        scale = pi_c**2 * p.sigma**2
        rec["delta_stein"] = c4.value * scale
        rec["delta_stein_std_error"] = c4.std_error * abs(scale)
    else:
        rec["delta_stein"] = rec["delta_stein_std_error"] = None

    def ensemble_part():
        grid_j = TimeGrid(p.s, p.T, cfg.j_steps)
        ens = simulate_wealth(p, pi_c, grid_j, cfg.n_outer, derive_seed(cfg.seed, 1), cfg.workers)
        J = value_field(p, pi_c, cfg.n_inner, cfg.seed)
        stats = ensemble_statistics(J, ens)
        return ens, stats

    ens_out = stage("delta_ensemble", ensemble_part) if pi_c is not None else None
    if ens_out:
        ens, stats = ens_out
        rec["delta_ensemble"] = float(stats.delta[-1])
        rec["delta_ensemble_std_error"] = _std_of_std_error(stats.values[:, -1])
        rec["delta_ensemble_time"] = float(stats.times[-1])
        rec["delta_ensemble_curve"] = {"t": stats.times, "delta": stats.delta}
    else:
        rec["delta_ensemble"] = rec["delta_ensemble_std_error"] = None

    def dj_terms():
        dt = ens.grid.dt
        t = stats.times[:-1]
        c1, c2, c3 = (consts.value(k) for k in ("c1", "c2", "c3"))
        ex = ens.values.mean(axis=0)[:-1]
        base = (c1 + c2 * (t - psi.a) + c3 * ex)[None, :]
        delta_t = np.gradient(stats.delta, dt)[:-1][None, :]
        varpi = np.where(stats.zero_delta[None, :], 0.0, stats.varpi)
        varpi_t = np.gradient(varpi, dt, axis=1)[:, :-1]
        out = {}
        if pi_c != 0:
            dw = (np.diff(ens.values, axis=1) - p.mu * pi_c * dt) / (pi_c * p.sigma)
            out["dj_drift_literal"] = mc_summary((base + delta_t * dw).ravel())
        out["dj_drift_consistent"] = mc_summary((base + delta_t * varpi_t).ravel())
        return out

    dj = stage("dj_drift", dj_terms) if (ens_out and consts) else None
    for key in ("dj_drift_literal", "dj_drift_consistent"):
        est = dj.get(key) if dj else None
        rec[key] = est.value if est else None
        rec[f"{key}_std_error"] = est.std_error if est else None
    return _clean(rec)


def report_csv_row(rec: dict, p: PortfolioProblem, cfg: ReportConfig):
    vals = {"mu": p.mu, "sigma": p.sigma, "gamma": p.utility.gamma, "T": p.T, "n_paths": cfg.n_paths,
            "seed": cfg.seed}
    for k in CSV_KEYS[6:]:
        vals[k] = rec.get(k)
    return [vals[k] for k in CSV_KEYS]
