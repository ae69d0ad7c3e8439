from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import trapezoid

from pdfmidas.density import DensityGrid, Grid, normal_pdf
from pdfmidas.errors import EmptyHistory, GridMismatch, MissingLag
from pdfmidas.model import (
    FittedModel,
    MixedSeries,
    ModelSpec,
    RegressorSpec,
    as_time,
    predict,
    predict_ave,
    resolve_lags,
)

GRID = Grid(-6, 8, 30)


def dens(mu, sd=1.0, grid=GRID):
    return DensityGrid(grid, normal_pdf(grid, mu, sd), check_mass=False)


def series(m, keys, shift=0.0):
    return MixedSeries(m, {k: dens(float(k) * 0.1 + shift) for k in keys})


def test_as_time_forms():
    assert as_time("4/3") == Fraction(4, 3)
    assert as_time((4, 3)) == Fraction(4, 3)
    assert as_time(5) == Fraction(5)
    assert as_time(2.0) == Fraction(2)
    with pytest.raises(TypeError):
        as_time(1 / 3)
    with pytest.raises(ValueError):
        as_time((1, 0))


def test_mixed_series_validation():
    with pytest.raises(ValueError):
        MixedSeries(3, {Fraction(1, 2): dens(0)})
    with pytest.raises(GridMismatch):
        MixedSeries(1, {1: dens(0), 2: dens(0, grid=Grid(0, 1, 30))})
    s = MixedSeries(3, {Fraction(2, 3): dens(0), Fraction(1, 3): dens(1)})
    assert s.times == [Fraction(1, 3), Fraction(2, 3)]
    assert "2/3" in s and len(s) == 2


def test_lag_keys_examples():
    r = RegressorSpec("g", m=3, p=3, h=Fraction(1, 3))
    assert r.lag_times(2) == [Fraction(4, 3), Fraction(1), Fraction(2, 3)]
    assert RegressorSpec("a", m=1, p=1, h=0).lag_times(5) == [Fraction(4)]


def test_resolve_lags_and_missing():
    r = RegressorSpec("g", m=3, p=3, h=Fraction(1, 3))
    s = series(3, [Fraction(k, 3) for k in range(0, 9)])
    got = resolve_lags(r, s, 2)
    assert [d is s[k] for d, k in zip(got, ["4/3", "1", "2/3"])] == [True] * 3
    gapped = MixedSeries(3, {k: v for k, v in s.entries.items() if k != Fraction(1)})
    with pytest.raises(MissingLag) as info:
        resolve_lags(r, gapped, 2)
    assert info.value.lag == 2 and info.value.key == Fraction(1) and info.value.t == Fraction(2)


@given(st.integers(1, 10_000))
def test_exact_keys_no_drift(t):
    r = RegressorSpec("g", m=3, p=12, h=Fraction(1, 3))
    keys = r.lag_times(t)
    assert keys == [Fraction(3 * t - 1 - i, 3) for i in range(1, 13)]
    assert all((k * 3).denominator == 1 for k in keys)


def test_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec((), "midas")
    with pytest.raises(ValueError):
        ModelSpec((RegressorSpec("g"),), "ave")
    with pytest.raises(ValueError):
        ModelSpec((RegressorSpec("g", p=3, q=None),), "midas")
    with pytest.raises(ValueError):
        ModelSpec((RegressorSpec("g"), RegressorSpec("g")), "midas")
    spec = ModelSpec((RegressorSpec("g", 3, 12, Fraction(1, 3), 2), RegressorSpec("y", 1, 1, 0, None)))
    assert spec.n_params == 2 + 2
    assert ModelSpec((RegressorSpec("g", 3, 4, q=None),), "umidas").n_params == 4
    assert spec.with_lags(6).regressors[0].p == 6 and spec.with_lags(6).regressors[1].p == 1


def test_fitted_model_invariants():
    spec = ModelSpec((RegressorSpec("a"), RegressorSpec("b")))
    with pytest.raises(ValueError):
        FittedModel(spec, GRID, ([0.0], [0.0]), [0.7, 0.7])
    with pytest.raises(ValueError):
        FittedModel(spec, GRID, ([0.0], [0.0]), [1.2, -0.2])
    uspec = ModelSpec((RegressorSpec("a", p=2, q=None),), "umidas")
    FittedModel(uspec, GRID, (), [1.0], [1.5, -0.5])
    with pytest.raises(ValueError):
        FittedModel(uspec, GRID, (), [1.0], [1.5, 0.5])


def test_predict_single_lag_is_identity():
    spec = ModelSpec((RegressorSpec("g", m=1, p=1, h=0),))
    model = FittedModel(spec, GRID, ([0.3],), [1.0])
    s = series(1, range(0, 5))
    pred = predict(model, {"g": s}, 3)
    np.testing.assert_array_equal(pred.density.values, s[2].values)
    assert not pred.clipped


def test_predict_combination_weights():
    spec = ModelSpec((RegressorSpec("g1", 1, 1, 0), RegressorSpec("g2", 1, 1, 0)))
    model = FittedModel(spec, GRID, ([0.0], [0.0]), [0.4, 0.6])
    s1, s2 = series(1, range(4)), series(1, range(4), shift=2.0)
    pred = predict(model, {"g1": s1, "g2": s2}, 2)
    np.testing.assert_allclose(pred.density.values, 0.4 * s1[1].values + 0.6 * s2[1].values, atol=1e-15)


@given(st.integers(0, 10_000))
def test_midas_prediction_unit_mass_and_permutation(seed):
    rng = np.random.default_rng(seed)
    g = Grid(0, 1, 30)

    def unit():
        v = rng.uniform(0, 1, 30)
        return DensityGrid(g, v / trapezoid(v, dx=g.spacing))

    regs = (RegressorSpec("x", 2, 3, Fraction(1, 2), 1), RegressorSpec("y", 1, 2, 0, 2))
    data = {
        "x": MixedSeries(2, {Fraction(k, 2): unit() for k in range(0, 12)}),
        "y": MixedSeries(1, {k: unit() for k in range(0, 6)}),
    }
    a = rng.dirichlet([1, 1])
    th = (rng.uniform(-1, 1, 1), rng.uniform(-0.5, 0.5, 2))
    model = FittedModel(ModelSpec(regs), g, th, a)
    pred = predict(model, data, 5)
    assert pred.density.mass() == pytest.approx(1.0, abs=1e-10)
    assert not pred.clipped and np.all(pred.density.values >= 0)
    swapped = FittedModel(ModelSpec(regs[::-1]), g, th[::-1], a[::-1])
    np.testing.assert_allclose(predict(swapped, data, 5).density.values, pred.density.values, atol=1e-14)
    relabeled = FittedModel(ModelSpec((RegressorSpec("u", 2, 3, Fraction(1, 2), 1), RegressorSpec("v", 1, 2, 0, 2))),
                            g, th, a)
    np.testing.assert_array_equal(
        predict(relabeled, {"u": data["x"], "v": data["y"]}, 5).density.values, pred.density.values)


def test_umidas_prediction_clips_and_flags():
    spec = ModelSpec((RegressorSpec("g", m=1, p=2, h=0, q=None),), "umidas")
    model = FittedModel(spec, GRID, (), [1.0], [2.0, -1.0])
    s = MixedSeries(1, {0: dens(3.0), 1: dens(0.0)})
    pred = predict(model, {"g": s}, 2)
    assert pred.clipped
    assert np.all(pred.density.values >= 0)
    assert pred.density.mass() == pytest.approx(1.0)
    assert pred.raw.min() < 0


def test_predict_grid_mismatch():
    spec = ModelSpec((RegressorSpec("g"),))
    model = FittedModel(spec, Grid(0, 1, 30), ([0.0],), [1.0])
    with pytest.raises(GridMismatch):
        predict(model, {"g": series(1, range(3))}, 2)


def test_predict_ave():
    f = dens(0.0)
    assert predict_ave({1: f}, 2).values.tolist() == f.values.tolist()
    np.testing.assert_allclose(predict_ave({1: f, 2: f}, 3).values, f.values)
    g = Grid(-8, 8, 200)
    a, b = DensityGrid(g, normal_pdf(g, -1, 1)), DensityGrid(g, normal_pdf(g, 2, 0.5))
    assert predict_ave({0: a, 1: b, 5: b}, 3).mass() == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_allclose(predict_ave({0: a, 1: b, 5: b}, 3).values, (a.values + b.values) / 2)
    with pytest.raises(EmptyHistory):
        predict_ave({3: f}, 3)
