"""Noise laws, the process xi(t) = mean(t) + vol(t) * eta(t), and path ensembles.

Random numbers come from per-block streams keyed by ``(seed, block)``; a
block is a fixed run of ``BLOCK_PATHS`` consecutive paths. Path ``k`` is
therefore a function of ``(seed, k)`` alone, whatever ``n_paths`` is and
however many workers generate the blocks.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels

BLOCK_PATHS = 1024

NOISE_KINDS = (
    "standard-normal",
    "symmetric-bernoulli",
    "centered-uniform",
    "centered-exponential",
    "student-t",
)
MODES = ("marginal", "increment")


@dataclass(frozen=True)
class NoiseLaw:
    """A zero-mean, unit-variance noise law."""

    kind: str = "standard-normal"
    nu: float | None = None

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if self.kind == "student-t":
            if self.nu is None or not math.isfinite(self.nu) or self.nu <= 2:
                raise ValueError(f"student-t needs nu > 2 for finite variance, got {self.nu}")
        elif self.nu is not None:
            raise ValueError(f"{self.kind} takes no nu parameter")

    @property
    def is_discrete(self) -> bool:
        return self.kind == "symmetric-bernoulli"

    def atoms(self):
        """Support points and weights; only for discrete laws."""
        if not self.is_discrete:
            raise ValueError(f"{self.kind} has no finite support")
        return np.array([-1.0, 1.0]), np.array([0.5, 0.5])

    def mean(self) -> float:
        return 0.0

    def variance(self) -> float:
        return 1.0

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.kind == "standard-normal":
            return rng.standard_normal(shape)
        if self.kind == "symmetric-bernoulli":
            return 2.0 * rng.integers(0, 2, size=shape).astype(np.float64) - 1.0
        if self.kind == "centered-uniform":
            r3 = math.sqrt(3.0)
            return rng.uniform(-r3, r3, size=shape)
        if self.kind == "centered-exponential":
            return rng.standard_exponential(shape) - 1.0
        return rng.standard_t(self.nu, size=shape) * math.sqrt((self.nu - 2.0) / self.nu)

    def to_dict(self):
        d = {"kind": self.kind}
        if self.nu is not None:
            d["nu"] = self.nu
        return d


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    steps: int

    def __post_init__(self):
        if not (math.isfinite(self.t0) and math.isfinite(self.T)) or not self.t0 < self.T:
            raise ValueError(f"need finite t0 < T, got t0={self.t0}, T={self.T}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.steps

    @property
    def points(self) -> np.ndarray:
        # t0 + j*dt, with the last point pinned to T
        pts = self.t0 + self.dt * np.arange(self.steps + 1, dtype=np.float64)
        pts[-1] = self.T
        return pts


def constant(c: float) -> Callable[[np.ndarray], np.ndarray]:
    """A vectorized constant curve ``t -> c``."""

    def curve(t):
        return np.full(np.shape(t), float(c))

    curve.__name__ = f"constant({c!r})"
    return curve


def linear(c0: float, slope: float) -> Callable[[np.ndarray], np.ndarray]:
    def curve(t):
        return c0 + slope * np.asarray(t, dtype=np.float64)

    curve.__name__ = f"linear({c0!r}, {slope!r})"
    return curve


@dataclass(frozen=True)
class ProcessSpec:
    mean_fn: Callable = field(default_factory=lambda: constant(0.0))
    vol_fn: Callable = field(default_factory=lambda: constant(1.0))
    noise: NoiseLaw = field(default_factory=NoiseLaw)
    mode: str = "marginal"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    def curves(self, t):
        t = np.asarray(t, dtype=np.float64)
        mean = np.broadcast_to(np.asarray(self.mean_fn(t), dtype=np.float64), t.shape)
        vol = np.broadcast_to(np.asarray(self.vol_fn(t), dtype=np.float64), t.shape)
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean_fn is not finite on the grid")
        if not np.all(np.isfinite(vol)) or np.any(vol <= 0):
            raise ValueError("vol_fn must be finite and > 0 on the grid")
        return mean, vol


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    grid: TimeGrid
    values: np.ndarray
    seed: int
    mode: str
    noise: str = "standard-normal"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] != self.grid.steps + 1:
            raise ValueError(f"values must be N x {self.grid.steps + 1} with N >= 1, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.grid.points

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=1)

    def to_csv(self, path) -> None:
        write_paths_csv(path, self.times, self.values)


def write_paths_csv(path, times, values) -> None:
    """``t,path_0,...`` with one row per grid point, 17 significant digits."""
    values = np.asarray(values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"path_{k}" for k in range(values.shape[0])])
        for j, t in enumerate(times):
            w.writerow([f"{t:.17g}"] + [f"{x:.17g}" for x in values[:, j]])


def read_paths_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:].T.copy()


def block_rng(seed: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, tag: int) -> int:
    """An independent 64-bit seed for a named sub-stream of ``seed``."""
    _check_seed(seed)
    state = np.random.SeedSequence(entropy=[int(seed), int(tag)]).generate_state(1, np.uint64)
    return int(state[0])


def _check_seed(seed):
    if int(seed) != seed or seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")


def map_blocks(fn, seed: int, n: int, workers: int = 1):
    """Call ``fn(rng, start, stop)`` for each path block and return the results in order.

    ``fn`` sees a generator for the whole block; it must draw for all
    ``BLOCK_PATHS`` rows and then slice ``[:stop - start]`` so that path
    values never depend on ``n``.
    """
    _check_seed(seed)
    if n < 1:
        raise ValueError(f"need at least one path, got {n}")
    blocks = range((n + BLOCK_PATHS - 1) // BLOCK_PATHS)

    def run(b):
        start = b * BLOCK_PATHS
        return fn(block_rng(seed, b), start, min(n, start + BLOCK_PATHS))

    if workers <= 1 or len(blocks) == 1:
        return [run(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, blocks))


def noise_panel(law: NoiseLaw, n: int, cols: int, seed: int, workers: int = 1) -> np.ndarray:
    """An ``(n, cols)`` panel of standardized draws; row k depends only on (seed, k, cols)."""

    def fn(rng, start, stop):
        return law.draw(rng, (BLOCK_PATHS, cols))[: stop - start]

    return np.concatenate(map_blocks(fn, seed, n, workers), axis=0)


def sample_noise(law: NoiseLaw, n: int, seed: int) -> np.ndarray:
    """``n`` iid standardized draws, deterministic per (law, n, seed)."""
    return noise_panel(law, n, 1, seed)[:, 0]


def coarsen(z: np.ndarray, factor: int) -> np.ndarray:
    """Sum ``factor`` consecutive standardized increments and restandardize.

    Gives the driving noise of a grid ``factor`` times coarser on the same
    Brownian path.
    """
    n, m = z.shape
    if factor < 1 or m % factor:
        raise ValueError(f"cannot coarsen {m} steps by {factor}")
    return z.reshape(n, m // factor, factor).sum(axis=2) / math.sqrt(factor)


def generate_ensemble(spec: ProcessSpec, grid: TimeGrid, n_paths: int, seed: int, workers: int = 1) -> PathEnsemble:
    """Sample ``n_paths`` paths of ``spec`` on ``grid``.

    Marginal mode draws one eta per path, ``xi_k(t) = mean(t) + vol(t) * eta_k``.
    Increment mode is a standardized random walk started at ``mean(t0)``:
    ``xi(t_{j+1}) = xi(t_j) + [mean(t_{j+1}) - mean(t_j)] + vol(t_j) sqrt(dt) eta_kj``.
    """
    t = grid.points
    mean, vol = spec.curves(t)
    if spec.mode == "marginal":
        eta = noise_panel(spec.noise, n_paths, 1, seed, workers)
        values = mean[None, :] + vol[None, :] * eta
    else:
        m = grid.steps
        zero = np.zeros(m)
        alpha = np.diff(mean)
        gamma = vol[:-1] * math.sqrt(grid.dt)

        def fn(rng, start, stop):
            z = spec.noise.draw(rng, (BLOCK_PATHS, m))[: stop - start]
            return kernels.affine_euler(np.full(stop - start, mean[0]), alpha, zero, gamma, zero, z)

        values = np.concatenate(map_blocks(fn, seed, n_paths, workers), axis=0)
    return PathEnsemble(grid, values, int(seed), spec.mode, spec.noise.kind)


def simulate_affine(x0: float, drift_const, drift_lin, vol_const, vol_lin, grid: TimeGrid,
                    n_paths: int, seed: int, *, z: np.ndarray | None = None, full: bool = True,
                    workers: int = 1):
    """Euler-Maruyama for ``dX = (a + b X) dt + (c + d X) dW`` with standard normal dW.

    Coefficients may be scalars or per-step arrays. Returns the path matrix
    (``full=True``) or the terminal values. A precomputed standardized panel
    ``z`` of shape ``(n_paths, steps)`` overrides the seeded draws.
    """
    m, dt = grid.steps, grid.dt
    sq = math.sqrt(dt)
    alpha = np.broadcast_to(np.asarray(drift_const, dtype=np.float64) * dt, (m,))
    beta = np.broadcast_to(np.asarray(drift_lin, dtype=np.float64) * dt, (m,))
    gamma = np.broadcast_to(np.asarray(vol_const, dtype=np.float64) * sq, (m,))
    kappa = np.broadcast_to(np.asarray(vol_lin, dtype=np.float64) * sq, (m,))
    if z is not None:
        if z.shape != (n_paths, m):
            raise ValueError(f"noise panel must be {(n_paths, m)}, got {z.shape}")
        return kernels.affine_euler(np.full(n_paths, float(x0)), alpha, beta, gamma, kappa, z, full)
    law = NoiseLaw()

    def fn(rng, start, stop):
        zb = law.draw(rng, (BLOCK_PATHS, m))[: stop - start]
        return kernels.affine_euler(np.full(stop - start, float(x0)), alpha, beta, gamma, kappa, zb, full)

    return np.concatenate(map_blocks(fn, seed, n_paths, workers), axis=0)


def gbm_ensemble(x0: float, mu: float, sigma: float, grid: TimeGrid, n_paths: int, seed: int,
                 workers: int = 1) -> PathEnsemble:
    """Euler-Maruyama paths of ``dX = mu X dt + sigma X dW``."""
    values = simulate_affine(x0, 0.0, mu, 0.0, sigma, grid, n_paths, seed, workers=workers)
    return PathEnsemble(grid, values, int(seed), "increment", "standard-normal")
