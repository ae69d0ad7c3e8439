import numpy as np
import pytest
from scipy import stats

import pdfmidas.inference as inference
from pdfmidas.estimation import FitConfig, fit
from pdfmidas.inference import (
    BootstrapConfig,
    bootstrap_p_value,
    bootstrap_test,
    resample_residuals,
    with_sidedness,
)
from pdfmidas.simulation import signal_noise_data


@pytest.fixture(scope="module")
def small_problem():
    spec, data = signal_noise_data(11, T=25, M=150, p=2)
    model = fit(spec, data, FitConfig(restarts=0))
    return spec, data, model


def test_config_minimum():
    with pytest.raises(ValueError):
        BootstrapConfig(n_bootstrap=99)
    assert BootstrapConfig().n_bootstrap == 1000 and not BootstrapConfig().two_sided


def test_p_value_edges():
    assert bootstrap_p_value(0.5, np.full(100, 0.4)) == 0.0
    assert bootstrap_p_value(0.5, np.full(100, 0.5)) == 1.0
    reps = np.linspace(0, 1, 101)
    assert bootstrap_p_value(0.5, reps) == pytest.approx(51 / 101)
    with pytest.raises(ValueError):
        bootstrap_p_value(0.5, [])


def test_two_sided_recentred():
    rng = np.random.default_rng(0)
    far = 0.8 + 0.01 * rng.normal(size=500)
    assert bootstrap_p_value(0.8, far, two_sided=True) == 0.0
    near = 0.01 + 0.05 * rng.normal(size=500)
    p = bootstrap_p_value(0.01, near, two_sided=True)
    assert 0.5 < p <= 1.0
    r = near - 0.01
    q = np.mean(r >= 0.01)
    assert p == pytest.approx(2 * min(q, 1 - q))


def test_resampling_stays_within_rows():
    rng = np.random.default_rng(1)
    resid = rng.normal(size=(6, 30))
    draw = resample_residuals(resid, np.random.default_rng(2))
    for row, new in zip(resid, draw):
        assert set(new) <= set(row)


def test_resampled_row_means_converge():
    rng = np.random.default_rng(3)
    resid = rng.normal(size=(4, 30)) + np.arange(4)[:, None]
    means = np.mean([resample_residuals(resid, rng).mean(axis=1) for _ in range(4000)], axis=0)
    np.testing.assert_allclose(means, resid.mean(axis=1), atol=0.02)


def test_bootstrap_shapes_and_determinism(small_problem):
    spec, data, model = small_problem
    cfg = BootstrapConfig(n_bootstrap=100, seed=5)
    res = bootstrap_test(model, data, cfg)
    assert [r.coefficient_id for r in res] == ["g1", "g2"]
    for r in res:
        assert r.replicates.shape == (100,) and r.n_effective == 100
        assert 0.0 <= r.p_value <= 1.0
        assert r.estimate == model.a[[x.series_id for x in spec.regressors].index(r.coefficient_id)]
    again = bootstrap_test(model, data, cfg)
    for a, b in zip(res, again):
        np.testing.assert_array_equal(a.replicates, b.replicates)
    flipped = with_sidedness(res, True)
    assert all(r.two_sided for r in flipped)


def test_bootstrap_failures_are_dropped_and_flagged(small_problem, monkeypatch):
    spec, data, model = small_problem
    real_fit = inference.fit
    calls = {"n": 0}

    def flaky(*args, **kw):
        calls["n"] += 1
        if calls["n"] % 10 == 0:
            raise np.linalg.LinAlgError("synthetic failure")
        return real_fit(*args, **kw)

    monkeypatch.setattr(inference, "fit", flaky)
    res = bootstrap_test(model, data, BootstrapConfig(n_bootstrap=100, seed=1))
    assert res[0].n_effective == 90 and res[0].n_failed == 10
    assert "replicate_failures" in res[0].flags


def test_reseeded_batches_are_exchangeable(small_problem):
    _, data, model = small_problem
    a = bootstrap_test(model, data, BootstrapConfig(n_bootstrap=1000, seed=1))[0].replicates
    b = bootstrap_test(model, data, BootstrapConfig(n_bootstrap=1000, seed=2))[0].replicates
    assert not np.array_equal(a, b)
    assert stats.ks_2samp(a, b).statistic < 0.2


def test_ave_model_rejected(small_problem):
    from pdfmidas.model import FittedModel, ModelSpec

    _, data, _ = small_problem
    with pytest.raises(ValueError):
        bootstrap_test(FittedModel(ModelSpec((), "ave"), data.grid), data, BootstrapConfig(100))
