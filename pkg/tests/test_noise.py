import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from taylorsde.noise import (
    BLOCK_PATHS,
    NOISE_KINDS,
    NoiseLaw,
    PathEnsemble,
    ProcessSpec,
    TimeGrid,
    coarsen,
    constant,
    derive_seed,
    generate_ensemble,
    linear,
    noise_panel,
    read_paths_csv,
    sample_noise,
    write_paths_csv,
)


def _law(kind):
    return NoiseLaw(kind, 5.0 if kind == "student-t" else None)


def test_bernoulli_support():
    z = sample_noise(NoiseLaw("symmetric-bernoulli"), 4, seed=7)
    assert set(np.unique(z)) <= {-1.0, 1.0}


def test_uniform_mean_within_bound():
    z = sample_noise(NoiseLaw("centered-uniform"), 10**6, seed=3)
    assert abs(z.mean()) <= 4 / math.sqrt(10**6)
    assert np.all(np.abs(z) <= math.sqrt(3))


def test_student_t_needs_finite_variance():
    NoiseLaw("student-t", 5.0)
    for nu in (2.0, 1.5, None):
        with pytest.raises(ValueError):
            NoiseLaw("student-t", nu)
    with pytest.raises(ValueError):
        NoiseLaw("standard-normal", 3.0)
    with pytest.raises(ValueError):
        NoiseLaw("cauchy")


@pytest.mark.parametrize("kind", NOISE_KINDS)
def test_every_law_is_standardized(kind):
    z = sample_noise(_law(kind), 400_000, seed=11)
    n = z.size
    assert abs(z.mean()) <= 5 * z.std() / math.sqrt(n)
    sq = z**2
    assert abs(sq.mean() - 1.0) <= 5 * sq.std() / math.sqrt(n)


def test_atoms_only_for_discrete():
    atoms, w = NoiseLaw("symmetric-bernoulli").atoms()
    assert np.dot(w, atoms) == 0 and np.dot(w, atoms**2) == 1
    with pytest.raises(ValueError):
        NoiseLaw().atoms()


def test_time_grid_invariants():
    g = TimeGrid(0.0, 1.0, 7)
    pts = g.points
    assert pts.size == 8 and pts[0] == 0.0 and pts[-1] == 1.0
    assert np.all(np.diff(pts) > 0)
    for bad in ((1.0, 1.0, 3), (0.0, 1.0, 0), (0.0, 1.0, 2.5), (0.0, float("inf"), 3)):
        with pytest.raises(ValueError):
            TimeGrid(*bad)


def test_process_spec_rejects_nonpositive_vol():
    spec = ProcessSpec(constant(0.0), linear(1.0, -1.0), NoiseLaw(), "marginal")
    with pytest.raises(ValueError):
        generate_ensemble(spec, TimeGrid(0.0, 2.0, 4), 3, seed=0)
    with pytest.raises(ValueError):
        ProcessSpec(constant(0.0), constant(1.0), NoiseLaw(), "sideways")


def test_marginal_bernoulli_paths_are_constant():
    spec = ProcessSpec(constant(0.0), constant(1.0), NoiseLaw("symmetric-bernoulli"), "marginal")
    ens = generate_ensemble(spec, TimeGrid(0.0, 1.0, 10), 50, seed=5)
    v = ens.values
    assert np.all(v == v[:, :1])
    assert set(np.unique(v)) == {-1.0, 1.0}


def test_increment_variance_grows_linearly():
    grid = TimeGrid(0.5, 1.5, 20)
    spec = ProcessSpec(constant(0.0), constant(1.0), NoiseLaw(), "increment")
    ens = generate_ensemble(spec, grid, 50_000, seed=9)
    for j in (5, 10, 20):
        x = ens.values[:, j]
        sq = x**2
        target = grid.points[j] - grid.t0
        assert abs(sq.mean() - target) <= 5 * sq.std() / math.sqrt(x.size)
    assert np.all(ens.values[:, 0] == 0.0)


def test_increment_mode_follows_mean_curve():
    grid = TimeGrid(0.0, 2.0, 8)
    spec = ProcessSpec(linear(1.0, 0.5), constant(1e-300), NoiseLaw(), "increment")
    ens = generate_ensemble(spec, grid, 3, seed=1)
    np.testing.assert_allclose(ens.values, np.broadcast_to(1.0 + 0.5 * grid.points, (3, 9)), atol=1e-12)


def test_single_path_deterministic():
    spec = ProcessSpec(constant(0.3), constant(2.0), NoiseLaw("centered-exponential"), "increment")
    grid = TimeGrid(0.0, 1.0, 16)
    a = generate_ensemble(spec, grid, 1, seed=42).values
    b = generate_ensemble(spec, grid, 1, seed=42).values
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, generate_ensemble(spec, grid, 1, seed=43).values)


@settings(max_examples=15, deadline=None)
@given(n=st.integers(1, 3 * BLOCK_PATHS), seed=st.integers(0, 2**64 - 1), workers=st.integers(2, 5),
       kind=st.sampled_from(NOISE_KINDS), mode=st.sampled_from(["marginal", "increment"]))
def test_parallel_invariance_and_prefix(n, seed, workers, kind, mode):
    spec = ProcessSpec(constant(0.0), constant(1.0), _law(kind), mode)
    grid = TimeGrid(0.0, 1.0, 3)
    serial = generate_ensemble(spec, grid, n, seed, workers=1).values
    parallel = generate_ensemble(spec, grid, n, seed, workers=workers).values
    np.testing.assert_array_equal(serial, parallel)
    # path k depends only on (seed, k): a larger ensemble extends a smaller one
    bigger = generate_ensemble(spec, grid, n + 5, seed).values
    np.testing.assert_array_equal(bigger[:n], serial)


def test_seed_range_checked():
    for bad in (-1, 2**64, 1.5):
        with pytest.raises(ValueError):
            noise_panel(NoiseLaw(), 3, 2, bad)
    assert derive_seed(0, 1) != derive_seed(0, 2)
    assert derive_seed(5, 1) == derive_seed(5, 1)


def test_coarsen_sums_brownian_increments(rng):
    z = rng.normal(size=(4, 12))
    c = coarsen(z, 3)
    np.testing.assert_allclose(c * math.sqrt(3), z.reshape(4, 4, 3).sum(axis=2))
    np.testing.assert_allclose(coarsen(z, 12)[:, 0] * math.sqrt(12), z.sum(axis=1))
    with pytest.raises(ValueError):
        coarsen(z, 5)


def test_paths_csv_roundtrip(tmp_path, rng):
    grid = TimeGrid(0.0, 1.0, 6)
    values = rng.normal(size=(5, 7)) * 10.0 ** rng.integers(-20, 20, size=(5, 7))
    ens = PathEnsemble(grid, values, 0, "marginal")
    path = tmp_path / "paths.csv"
    ens.to_csv(path)
    assert path.read_text().splitlines()[0] == "t,path_0,path_1,path_2,path_3,path_4"
    t, back = read_paths_csv(path)
    np.testing.assert_array_equal(t, grid.points)
    np.testing.assert_array_equal(back, values)


def test_ensemble_values_read_only():
    ens = PathEnsemble(TimeGrid(0.0, 1.0, 2), np.zeros((2, 3)), 0, "marginal")
    with pytest.raises(ValueError):
        ens.values[0, 0] = 1.0
    with pytest.raises(ValueError):
        PathEnsemble(TimeGrid(0.0, 1.0, 2), np.zeros((2, 4)), 0, "marginal")


def test_write_paths_csv_uses_17_digits(tmp_path):
    write_paths_csv(tmp_path / "p.csv", [0.0, 1.0], np.array([[0.1, 1 / 3]]))
    assert (tmp_path / "p.csv").read_text().splitlines()[2] == "1,0.33333333333333331"
