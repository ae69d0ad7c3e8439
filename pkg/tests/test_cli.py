import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from pdfmidas import io as fio
from pdfmidas.cli import main


def write(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


def panel(path: Path, n_targets=8, m=3, seed=0, target_times=None) -> Path:
    """Small hand-made panel: regressor 'x' every 1/m, target at integers."""
    rng = np.random.default_rng(seed)
    times = target_times if target_times is not None else range(3, 3 + n_targets)
    samples = {"target": {Fraction(t): rng.normal(size=40) for t in times},
               "x": {Fraction(k, m): rng.normal(size=40) for k in range(0, m * (max(times) + 1))}}
    return write(path, fio.panel_text(samples))


MODEL = """
[model]
kind = "{kind}"
[[model.regressors]]
series_id = "x"
m = 3
p = {p}
h = "1/3"
{extra}
"""


def config(path: Path, kind="midas", p=3, extra="", tail="") -> Path:
    return write(path, MODEL.format(kind=kind, p=p, extra=extra) + tail)


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    cfg = write(d / "sim.toml", """
seed = 3
[simulate]
variant = "univariate"
T = 30
M = 150
R = 1
p = 3
holdout = 3
""")
    assert main(["simulate", "--config", str(cfg), "--out", str(d), "--emit-panel"]) == 0
    return d


def test_simulate_outputs(simulated):
    d = simulated
    for name in ("report.csv", "panel.csv", "panel.grid.json", "exact.csv", "exact.grid.json",
                 "design.json", "fit.toml"):
        assert (d / name).exists(), name
    assert (d / "report.csv").read_text().splitlines()[0] == "T,M,p,statistic,theta_1"
    assert (d / "panel.csv").read_text().splitlines()[0] == "series_id,time_num,time_den,value"
    info = json.loads((d / "design.json").read_text())
    assert info["params"] == {"theta_1": -0.05} and len(info["holdout_times"]) == 3


def test_noiseless_fit_recovers_theta(simulated, tmp_path):
    d = simulated
    assert main(["fit", "--config", str(d / "fit.toml"), "--out", str(tmp_path), str(d / "exact.csv")]) == 0
    model = json.loads((tmp_path / "model.json").read_text())
    assert model["format"] == "pdfmidas-model"
    assert model["theta"][0][0] == pytest.approx(-0.05, abs=1e-4)
    assert model["a"] == [1.0]
    diag = (tmp_path / "diagnostics.csv").read_text().splitlines()
    assert diag[0] == "iteration,objective"
    for name in ("fitted.csv", "fitted.grid.json", "fitted_curves.csv"):
        assert (tmp_path / name).exists()


def test_fit_predict_round_trip(simulated, tmp_path):
    d = simulated
    info = json.loads((d / "design.json").read_text())
    at = info["holdout_times"][0]
    assert main(["fit", "--config", str(d / "fit.toml"), "--out", str(tmp_path), str(d / "panel.csv")]) == 0
    assert main(["predict", str(tmp_path / "model.json"), str(d / "panel.csv"), "--at", at,
                 "--truth", str(d / "exact.csv"), "--out", str(tmp_path)]) == 0
    rows = dict(ln.split(",") for ln in (tmp_path / "metrics.csv").read_text().splitlines()[1:])
    assert float(rows["mse"]) < 0.05
    mom = (tmp_path / "moments.csv").read_text().splitlines()
    assert mom[0] == "statistic,value" and mom[-1] == "clipped,false"
    pred = fio.read_grid_file(tmp_path / "prediction.csv")
    assert list(pred) == ["prediction"]


def test_predict_against_itself(simulated, tmp_path):
    d = simulated
    assert main(["fit", "--config", str(d / "fit.toml"), "--out", str(tmp_path), str(d / "exact.csv")]) == 0
    at = json.loads((d / "design.json").read_text())["holdout_times"][0]
    assert main(["predict", str(tmp_path / "model.json"), str(d / "exact.csv"), "--at", at,
                 "--out", str(tmp_path)]) == 0
    truth = tmp_path / "truth.csv"
    pred = fio.read_grid_file(tmp_path / "prediction.csv")["prediction"]
    grid = next(iter(pred.values())).grid
    fio.write_densities(truth, {"target": pred}, grid)
    assert main(["predict", str(tmp_path / "model.json"), str(d / "exact.csv"), "--at", at,
                 "--truth", str(truth), "--out", str(tmp_path)]) == 0
    rows = dict(ln.split(",") for ln in (tmp_path / "metrics.csv").read_text().splitlines()[1:])
    assert float(rows["mse"]) == 0.0


def test_ave_baseline(simulated, tmp_path):
    d = simulated
    cfg = write(tmp_path / "ave.toml", '[model]\nkind = "ave"\n')
    assert main(["fit", "--config", str(cfg), "--out", str(tmp_path), str(d / "panel.csv")]) == 0
    at = json.loads((d / "design.json").read_text())["holdout_times"][0]
    assert main(["predict", str(tmp_path / "model.json"), str(d / "panel.csv"), "--at", at,
                 "--truth", str(d / "exact.csv"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "metrics.csv").exists()


def test_malformed_header_names_column(tmp_path, capsys):
    data = write(tmp_path / "bad.csv", "series_id,time,time_den,value\nx,1,1,0.5\n")
    cfg = config(tmp_path / "c.toml")
    assert main(["fit", "--config", str(cfg), str(data)]) == 2
    err = capsys.readouterr().err
    assert "time_num" in err and "'time'" in err


def test_bad_value_names_column(tmp_path, capsys):
    data = write(tmp_path / "bad.csv", "series_id,time_num,time_den,value\nx,1,1,abc\n")
    assert main(["fit", "--config", str(config(tmp_path / "c.toml")), str(data)]) == 2
    assert "'value'" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    cfg = config(tmp_path / "c.toml", tail="[fit]\nmax_iters = 3\n")
    data = panel(tmp_path / "p.csv")
    assert main(["fit", "--config", str(cfg), str(data)]) == 2
    assert "max_iters" in capsys.readouterr().err


def test_missing_model_section(tmp_path):
    data = panel(tmp_path / "p.csv")
    assert main(["fit", str(data)]) == 2


def test_no_usable_times_exit_4(tmp_path, capsys):
    # targets at t=0 need regressor lags before the first observation
    data = panel(tmp_path / "p.csv", target_times=[0])
    cfg = config(tmp_path / "c.toml")
    assert main(["fit", "--config", str(cfg), "--out", str(tmp_path), str(data)]) == 4
    assert "skipped" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_not_identifiable_exit_3(tmp_path):
    data = panel(tmp_path / "p.csv", target_times=[4])
    cfg = config(tmp_path / "c.toml", kind="umidas", p=6, tail="[grid]\nn_points = 5\n")
    assert main(["fit", "--config", str(cfg), "--out", str(tmp_path), str(data)]) == 3


def test_umidas_and_unrestricted(tmp_path):
    data = panel(tmp_path / "p.csv")
    cfg = config(tmp_path / "u.toml", kind="umidas")
    assert main(["fit", "--config", str(cfg), "--out", str(tmp_path / "u"), str(data)]) == 0
    m = json.loads((tmp_path / "u" / "model.json").read_text())
    assert m["spec"]["kind"] == "umidas" and len(m["coef"]) == 3
    cfg = config(tmp_path / "w.toml", kind="umidas", extra='weights = "unrestricted"')
    assert main(["fit", "--config", str(cfg), "--out", str(tmp_path / "w"), str(data)]) == 0
    m = json.loads((tmp_path / "w" / "model.json").read_text())
    assert m["spec"]["regressors"][0]["weights"] == "unrestricted"
    # unrestricted lag weights inside an Almon-combined model are rejected
    cfg = config(tmp_path / "x.toml", p=3, extra='weights = "unrestricted"')
    assert main(["fit", "--config", str(cfg), str(data)]) == 2


def test_single_lag_model_uses_lag_one(tmp_path):
    data = panel(tmp_path / "p.csv")
    cfg = config(tmp_path / "c.toml", p=1, extra='weights = "unrestricted"')
    assert main(["fit", "--config", str(cfg), "--out", str(tmp_path), str(data)]) == 0
    assert main(["predict", str(tmp_path / "model.json"), str(data), "--at", "11/1",
                 "--out", str(tmp_path)]) == 0
    pred = next(iter(fio.read_grid_file(tmp_path / "prediction.csv")["prediction"].values()))
    x = fio.smooth_panel(fio.read_panel(data), pred.grid)["x"][Fraction(11) - Fraction(2, 3)]
    np.testing.assert_allclose(pred.values, x.values, atol=1e-12)


def test_grid_flag_and_sidecar(tmp_path):
    data = panel(tmp_path / "p.csv")
    cfg = config(tmp_path / "c.toml")
    assert main(["fit", "--config", str(cfg), "--grid=-6,6,40", "--out", str(tmp_path), str(data)]) == 0
    m = json.loads((tmp_path / "model.json").read_text())
    assert m["grid"] == {"lo": -6.0, "hi": 6.0, "n_points": 40}
    assert main(["fit", "--config", str(cfg), "--grid", "4,-4,20", str(data)]) == 2


def test_select_order_and_bootstrap(tmp_path):
    data = panel(tmp_path / "p.csv", n_targets=12)
    cfg = config(tmp_path / "c.toml", tail="[fit]\nrestarts = 0\n[bootstrap]\nn_bootstrap = 100\n")
    assert main(["select-order", "--config", str(cfg), "--p-grid", "2:4", "--out", str(tmp_path), str(data)]) == 0
    lines = (tmp_path / "aic.csv").read_text().splitlines()
    assert lines[0] == "p,aic,objective,n_params,T,status"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["2", "3", "4"]
    assert json.loads((tmp_path / "selection.json").read_text())["chosen_p"] in (2, 3, 4)
    assert main(["bootstrap-test", "--config", str(cfg), "--out", str(tmp_path), str(data)]) == 0
    lines = (tmp_path / "bootstrap.csv").read_text().splitlines()
    assert lines[0] == "coefficient_id,estimate,p_value,two_sided,n_bootstrap,n_effective,n_failed,flags"
    assert lines[1].startswith("x,1.0,")
    assert len((tmp_path / "bootstrap_replicates.csv").read_text().splitlines()) == 101
    assert main(["select-order", "--config", str(cfg), "--p-grid", "4:2", str(data)]) == 2
