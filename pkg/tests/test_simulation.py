from fractions import Fraction

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import trapezoid

from pdfmidas.density import DensityGrid, Grid, normal_pdf
from pdfmidas.estimation import FitConfig
from pdfmidas.simulation import (
    MonteCarloReport,
    RegressorLaw,
    SimDesign,
    exact_series,
    exact_training_set,
    generate_truth,
    lag_order_data,
    replication_rng,
    run_study,
    sample_accept_reject,
    simulate_data,
)


def test_design_defaults_and_validation():
    d = SimDesign.univariate(T=10, M=5, p=12)
    assert d.period == 4 and d.K == 1 and d.param_names() == ("theta_1",)
    assert d.target_time(3) == Fraction(12)
    m = SimDesign.multivariate(T=10, M=5, p=12)
    assert m.param_names() == ("a_1", "a_2", "theta_1_1", "theta_2_1", "theta_2_2")
    np.testing.assert_allclose(m.true_params(), [0.4, 0.6, -0.05, 0.2, -0.03])
    with pytest.raises(ValueError):
        SimDesign((RegressorLaw(),), (0.5,))
    with pytest.raises(ValueError):
        SimDesign.univariate(T=5, holdout=5)
    with pytest.raises(ValueError):
        SimDesign.univariate(p=12, period=2)
    with pytest.raises(ValueError):
        SimDesign.univariate(h=Fraction(1, 2))


def test_regressor_truth_is_normal():
    d = SimDesign.univariate(T=5, p=3)
    g = Grid(-6, 6, 61)
    f = generate_truth(d, 0, lag=1, grid=g)
    np.testing.assert_allclose(f.values, normal_pdf(g, 1 / 3, 1.0), atol=1e-15)


def test_target_truth_mass_and_uniform_average():
    d = SimDesign.univariate(T=5, p=3, theta=(0.0,))
    g = Grid(-8, 10, 400)
    f = generate_truth(d, 2, grid=g)
    assert f.mass() == pytest.approx(1.0, abs=1e-6)
    avg = np.mean([generate_truth(d, 2, lag=i, grid=g).values for i in (1, 2, 3)], axis=0)
    np.testing.assert_allclose(f.values, avg, atol=1e-15)


def test_exact_series_matches_training_set():
    d = SimDesign.multivariate(T=6, p=3)
    targets, series = exact_series(d)
    ts = exact_training_set(d)
    assert list(targets) == list(ts.times)
    r = d.model_spec().regressors[1]
    key = r.lag_times(ts.times[2])[1]
    np.testing.assert_array_equal(series["g2"][key].values, ts.lags[1][2, 1])


def test_accept_reject_normal_ks():
    g = Grid(-6, 6, 2001)
    target = DensityGrid(g, normal_pdf(g, 0, 1))
    x = sample_accept_reject(target, 100_000, np.random.default_rng(0))
    assert x.size == 100_000
    assert stats.kstest(x, "norm").statistic <= 0.02


def test_accept_reject_rate_and_determinism():
    g = Grid(0, 1, 50)
    flat = DensityGrid(g, np.ones(50))
    info = {}
    sample_accept_reject(flat, 50_000, np.random.default_rng(1), info)
    assert info["accepted"] / info["proposed"] == pytest.approx(1 / 1.01, abs=0.005)
    a = sample_accept_reject(flat, 100, np.random.default_rng(9))
    b = sample_accept_reject(flat, 100, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)


def test_replication_streams_independent_and_reproducible():
    d = SimDesign.univariate(T=3, M=10, p=3, seed=4)
    a = simulate_data(d, replication_rng(d, 0)).target_samples
    b = simulate_data(d, replication_rng(d, 0)).target_samples
    c = simulate_data(d, replication_rng(d, 1)).target_samples
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_single_replication_report():
    d = SimDesign.univariate(T=20, M=100, p=3, R=1, seed=2)
    rep = run_study(d, FitConfig(restarts=0))
    assert rep.R_effective == 1
    assert rep.sd[0] == 0.0
    assert rep.rmse[0] == pytest.approx(abs(rep.bias[0]))
    lines = rep.to_csv().splitlines()
    assert lines[0] == "T,M,p,statistic,theta_1"
    assert [ln.split(",")[3] for ln in lines[1:]] == ["Bias", "SD", "RMSE"]
    assert lines[2].endswith(",0.0")


def test_report_identity_and_determinism():
    d = SimDesign.univariate(T=20, M=80, p=3, R=4, seed=8)
    r1 = run_study(d, FitConfig(restarts=0))
    r2 = run_study(d, FitConfig(restarts=0))
    assert r1.to_csv() == r2.to_csv()
    np.testing.assert_allclose(r1.rmse ** 2, r1.bias ** 2 + r1.sd ** 2, atol=1e-10)


def test_report_identity_random():
    rng = np.random.default_rng(0)
    d = SimDesign.multivariate(T=2, M=2, p=3)
    for _ in range(20):
        est = rng.normal(size=(int(rng.integers(1, 30)), 5))
        r = MonteCarloReport(d, d.param_names(), d.true_params(), est)
        np.testing.assert_allclose(r.rmse ** 2, r.bias ** 2 + r.sd ** 2, atol=1e-10)


def test_lag_order_data_layout():
    targets, series = lag_order_data(0, T=5, M=50, p=12, max_lag=18)
    assert len(targets) == 5 and series.m == 3
    first = min(targets)
    assert first - Fraction(1, 3) - Fraction(18, 3) in series
    assert all(trapezoid(f.values, dx=f.grid.spacing) == pytest.approx(1, abs=0.02) for f in targets.values())
