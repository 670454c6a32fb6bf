import json
import math

import numpy as np
import pytest

from taylorsde.errors import NumericalError
from taylorsde.noise import TimeGrid
from taylorsde.portfolio import (
    CSV_KEYS,
    PortfolioProblem,
    ReportConfig,
    UtilitySpec,
    estimate_constants,
    feynman_kac_residual,
    fk_quadratic,
    merton_oracle,
    paper_pi_star,
    policy_grid_search,
    portfolio_report,
    report_csv_row,
    simulate_wealth,
    terminal_wealth,
    value_field,
    value_function,
)
from taylorsde.estimation import grid_argmax
from taylorsde.taylor import ExpansionPoint

P = PortfolioProblem()


def test_zero_policy_keeps_wealth():
    ens = simulate_wealth(P, 0.0, P.grid(), 50, seed=1)
    assert np.all(ens.values == P.x0)


def test_wealth_moments():
    pi = 1.5
    x = simulate_wealth(P, pi, P.grid(), 100_000, seed=2).values[:, -1]
    se = x.std() / math.sqrt(x.size)
    assert abs(x.mean() - (P.x0 + P.mu * pi * P.T)) <= 5 * se
    d2 = (x - P.x0 - P.mu * pi * P.T) ** 2
    assert abs(d2.mean() - (pi * P.sigma) ** 2 * P.T) <= 5 * d2.std() / math.sqrt(x.size)


def test_problem_validation():
    for kw in ({"sigma": 0.0}, {"s": 1.0}, {"x0": math.inf}, {"steps": 0}):
        with pytest.raises(ValueError):
            PortfolioProblem(**kw)
    with pytest.raises(ValueError):
        UtilitySpec("power", None)
    with pytest.raises(ValueError):
        UtilitySpec("quadratic")
    with pytest.raises(ValueError):
        simulate_wealth(P, 1.0, TimeGrid(0.0, 2.0, 4), 3, 0)


def test_zero_policy_value_is_utility():
    est = value_function(P, 0.0, 0.3, 0.7, 1000, seed=0)
    assert est.value == P.utility(0.7) and est.std_error == 0.0


def test_value_function_deterministic():
    a = value_function(P, 1.0, 0.0, 1.0, 5000, seed=4)
    assert a == value_function(P, 1.0, 0.0, 1.0, 5000, seed=4)
    assert a != value_function(P, 1.0, 0.0, 1.0, 5000, seed=5)


def test_exponential_separability():
    # U = -exp(-g x) and additive wealth: J(t, x) = exp(-g (x - y)) J(t, y) on one panel
    g = P.utility.gamma
    for t in (0.0, 0.4):
        j1 = value_function(P, 1.3, t, 1.0, 4000, seed=3).value
        j2 = value_function(P, 1.3, t, -0.5, 4000, seed=3).value
        assert j1 / j2 == pytest.approx(math.exp(-g * 1.5), rel=1e-12)


def test_wealth_frozen_after_horizon():
    np.testing.assert_array_equal(terminal_wealth(P, 2.0, P.T, 0.3, 5, 0), np.full(5, 0.3))


def test_value_field_matches_value_function():
    J = value_field(P, 0.8, 3000, seed=7)
    assert J(0.2, 1.1) == pytest.approx(value_function(P, 0.8, 0.2, 1.1, 3000, seed=7).value, rel=1e-12)


def test_constants_zero_policy():
    psi = ExpansionPoint(0.5, 0.0)
    est = estimate_constants(P, 0.0, psi, 2000, seed=0)
    for k in ("c1", "c2", "c3"):
        assert est.value(k) == 0.0
    g = P.utility.gamma
    assert est.value("c4") == pytest.approx(-g * g * math.exp(-g * psi.b), rel=1e-6)


def test_constants_standard_error_scaling():
    psi = ExpansionPoint(0.5, 0.0)
    small = estimate_constants(P, 1.0, psi, 20_000, seed=1)
    big = estimate_constants(P, 1.0, psi, 80_000, seed=1)
    for k in ("c1", "c3", "c4"):
        ratio = big.std_error(k) / small.std_error(k)
        assert 0.4 <= ratio <= 0.6, (k, ratio)


def test_constants_stencil_inside_horizon():
    with pytest.raises(ValueError):
        estimate_constants(P, 1.0, ExpansionPoint(P.T, 0.0), 100, 0)


def test_closed_form_policy_examples():
    assert paper_pi_star(0.5, -1.25, 0.2) == pytest.approx(1.0)
    assert -0.5 / -1.25 == pytest.approx(0.4)
    assert paper_pi_star(0.0, -1.0, 0.3) == 0.0
    with pytest.raises(ZeroDivisionError):
        paper_pi_star(0.5, 0.0, 0.2)
    with pytest.raises(ValueError):
        paper_pi_star(0.5, -1.0, 0.0)


def test_fk_residual_constructed_zero():
    c2, c3, c4, a_hat, s, x = 0.3, 0.5, -1.25, 0.1, 0.0, 1.0
    _, sup = grid_argmax(fk_quadratic(c3, c4, P.mu, P.sigma), *P.policy_grid)
    c1 = -(c3 * x + sup) - c2 * (s - a_hat)
    res = feynman_kac_residual((c1, c2, c3, c4), a_hat, s, x, P)
    assert res.value == pytest.approx(0.0, abs=1e-15)
    assert res.pi_sup == pytest.approx(1.0) and res.std_error is None


def test_fk_residual_without_policy_terms():
    res = feynman_kac_residual((0.7, 2.0, 0.0, 0.0), 0.25, 0.0, 1.0, P)
    assert res.value == pytest.approx(0.7 + 2.0 * (0.0 - 0.25))


def test_fk_residual_from_estimates_has_error():
    est = estimate_constants(P, 1.0, ExpansionPoint(0.5, 0.0), 5000, seed=2)
    res = feynman_kac_residual(est, 0.5, 0.0, 1.0, P)
    assert math.isfinite(res.value) and res.std_error > 0


def test_merton_examples():
    assert merton_oracle(P) == pytest.approx(1.0)
    double = PortfolioProblem(utility=UtilitySpec("exponential", 4.0))
    assert merton_oracle(double) == pytest.approx(0.5 * merton_oracle(P))
    assert merton_oracle(PortfolioProblem(mu=0.0)) == 0.0
    with pytest.raises(NotImplementedError):
        merton_oracle(PortfolioProblem(utility=UtilitySpec("log", None)))


def test_grid_search_zero_premium():
    res = policy_grid_search(PortfolioProblem(mu=0.0), 20_000, seed=0)
    assert res.pi_hat <= 0.05 + 1e-12


def test_grid_search_refinement_stable():
    coarse = policy_grid_search(P, 20_000, seed=3)
    fine = policy_grid_search(PortfolioProblem(policy_grid=(0.0, 3.0, 0.025)), 20_000, seed=3)
    assert abs(fine.pi_hat - coarse.pi_hat) <= 0.05 + 1e-12


def test_grid_search_common_panel_and_workers():
    a = policy_grid_search(P, 3000, seed=5, workers=1)
    b = policy_grid_search(P, 3000, seed=5, workers=4)
    assert a.table == b.table and a.pi_hat == b.pi_hat
    assert len(a.table) == 61 and a.table[0][0] == 0.0 and a.table[-1][0] == pytest.approx(3.0)


def test_oracle_agreement():
    res = policy_grid_search(P, 40_000, seed=6)
    assert abs(res.pi_hat - merton_oracle(P)) <= 0.1


def test_undefined_utility_reported():
    p = PortfolioProblem(utility=UtilitySpec("log", None), x0=0.1)
    with pytest.raises(NumericalError, match="paths"):
        value_function(p, 3.0, 0.0, 0.1, 5000, seed=0)


SMALL = ReportConfig(n_paths=5000, seed=1, n_fit=2000, n_outer=64, n_inner=500, j_steps=10)


def test_report_fields_and_json_roundtrip():
    rec = portfolio_report(P, SMALL)
    assert all(v == "ok" for v in rec["status"].values()), rec["status"]
    for k in ("pi_paper", "pi_merton", "pi_grid", "fk_residual", "delta_stein", "delta_ensemble"):
        assert rec[k] is not None
    for k in ("pi_paper", "fk_residual", "delta_stein", "delta_ensemble", "dj_drift_literal",
              "dj_drift_consistent"):
        assert rec[f"{k}_std_error"] >= 0
    assert set(rec["constants"]) == {"c1", "c2", "c3", "c4"}
    text = json.dumps(rec)
    assert json.loads(text) == rec
    assert json.dumps(json.loads(text)) == text


def test_report_deterministic_across_workers():
    a = portfolio_report(P, SMALL)
    b = portfolio_report(P, ReportConfig(**{**SMALL.__dict__, "workers": 3}))
    assert json.dumps(a) == json.dumps(b)


def test_report_stage_failure_isolated():
    # wealth far from zero keeps power utility defined; only the closed-form oracle is unavailable
    rec = portfolio_report(PortfolioProblem(x0=10.0, utility=UtilitySpec("power", 2.0)), SMALL)
    assert rec["status"]["pi_merton"].startswith("error")
    assert rec["pi_merton"] is None and rec["pi_grid"] is not None
    assert rec["status"]["pi_grid"] == "ok"


def test_report_records_undefined_utility():
    rec = portfolio_report(PortfolioProblem(utility=UtilitySpec("log", None)), SMALL)
    assert "paths" in rec["status"]["pi_grid"] and rec["pi_grid"] is None


def test_csv_row_order():
    rec = portfolio_report(P, SMALL)
    row = report_csv_row(rec, P, SMALL)
    assert len(row) == len(CSV_KEYS)
    assert row[:6] == [P.mu, P.sigma, 2.0, P.T, SMALL.n_paths, SMALL.seed]
    assert row[6:] == [rec[k] for k in CSV_KEYS[6:]]
