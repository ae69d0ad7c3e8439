"""Command-line entry point: ``pdfmidas {fit,predict,simulate,select-order,bootstrap-test}``.

Exit codes: 0 success, 2 bad input or config, 3 model not identifiable,
4 missing lag (or no history to average), 5 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import io as fio
from .density import DensityGrid, Grid, distance, moments, wasserstein1
from .errors import ConfigError, EmptyHistory, GridMismatch, MissingLag, NotIdentifiable
from .estimation import aic_select, build_training_set, fit, fitted_values
from .inference import bootstrap_test
from .model import FitDiagnostics, FittedModel, MixedSeries, ModelSpec, as_time, predict, predict_ave
from .simulation import exact_series, replication_rng, run_study, simulate_data

log = logging.getLogger("pdfmidas")

EXIT_OK, EXIT_SCHEMA, EXIT_IDENT, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4, 5


# ---------------------------------------------------------------------------
# shared plumbing


def _out_dir(args, cfg) -> Path:
    return Path(args.out or cfg.out or ".")


def _need_model(cfg) -> ModelSpec:
    if cfg.model is None:
        raise ConfigError("config has no [model] section")
    return cfg.model


def _load_densities(path, cfg, flag_grid: str | None, forced: Grid | None = None):
    """Read a panel or grid file and return ``(grid, series_id -> time -> DensityGrid)``.

    Panels are smoothed on the first grid found among: ``forced``, ``--grid``,
    the config's [grid], a ``<panel>.grid.json`` sidecar, and finally a grid
    pooled over every sample in the file.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such data file: {path}")
    wanted = forced or (fio.parse_grid_flag(flag_grid) if flag_grid else None) or cfg.grid
    if fio.is_grid_file(path):
        dens = fio.read_grid_file(path)
        grid = fio.read_grid_sidecar(fio.sidecar_path(path))
        if wanted is not None and wanted != grid:
            raise GridMismatch(f"{path} is on {grid}, expected {wanted}")
        return grid, dens
    panel = fio.read_panel(path)
    if not panel:
        raise ConfigError(f"{path} has no observations")
    grid = wanted
    if grid is None and fio.sidecar_path(path).exists():
        grid = fio.read_grid_sidecar(fio.sidecar_path(path))
    if grid is None:
        grid = fio.default_grid(panel, cfg.n_points)
    return grid, fio.smooth_panel(panel, grid)


def _targets(dens) -> dict:
    if fio.TARGET_ID not in dens:
        raise ConfigError(f"data has no {fio.TARGET_ID!r} series")
    return dens[fio.TARGET_ID]


def _series(spec: ModelSpec, dens) -> dict[str, MixedSeries]:
    out = {}
    for r in spec.regressors:
        if r.series_id not in dens:
            raise ConfigError(f"data has no series {r.series_id!r} required by the model")
        out[r.series_id] = MixedSeries(r.m, dens[r.series_id])
    return out


def _times(ts) -> list[str]:
    return [fio.time_str(as_time(t)) for t in ts]


def _parse_at(text: str) -> Fraction:
    try:
        return as_time(text)
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise ConfigError(f"--at expects NUM/DEN, got {text!r}") from exc


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args, cfg) -> int:
    spec = _need_model(cfg)
    grid, dens = _load_densities(args.data, cfg, args.grid)
    targets = _targets(dens)
    out = _out_dir(args, cfg)
    if spec.kind == "ave":
        model = FittedModel(spec, grid, config=cfg.fit, diagnostics=FitDiagnostics(float("nan"), 0, True))
        extra = {"usable_times": _times(targets), "skipped": [], "run": cfg.echo()}
        fio.atomic_write(out / "model.json", fio.model_to_json(model, extra))
        print(f"AVE baseline over {len(targets)} target densities written to {out / 'model.json'}")
        return EXIT_OK
    data = build_training_set(spec, targets, _series(spec, dens))
    model = fit(spec, data, cfg.fit)
    extra = {
        "usable_times": _times(data.times),
        "skipped": [{"t": fio.time_str(e.t), "series_id": e.series_id, "lag": e.lag,
                     "missing": fio.time_str(e.key)} for e in data.skipped],
        "run": cfg.echo(),
    }
    fio.atomic_write(out / "model.json", fio.model_to_json(model, extra))
    fio.atomic_write(out / "diagnostics.csv", fio.csv_text(
        ["iteration", "objective"], [[i, fio.fmt(q)] for i, q in enumerate(model.diagnostics.trace)]))
    fitted = fitted_values(model, data)
    curves = {t: DensityGrid(grid, f, check_mass=False) for t, f in zip(data.times, np.clip(fitted, 0, None))}
    fio.write_densities(out / "fitted.csv", {"fitted": curves}, grid)
    fio.atomic_write(out / "fitted_curves.csv", fio.curves_text(curves, grid))
    d = model.diagnostics
    print(f"fitted {spec.kind} on {data.T} target times (skipped {len(data.skipped)}): "
          f"Q={d.objective:.6g} converged={d.converged}")
    for k, r in enumerate(spec.regressors):
        th = "" if model.theta[k] is None else " theta=" + ",".join(f"{x:.6g}" for x in model.theta[k])
        print(f"  {r.series_id}: a={model.a[k]:.6g}{th}")
    return EXIT_OK


def cmd_predict(args, cfg) -> int:
    model = fio.load_model(args.model)
    grid = model.grid
    _, dens = _load_densities(args.data, cfg, None, forced=grid)
    t = _parse_at(args.at)
    if model.spec.kind == "ave":
        density, clipped = predict_ave(_targets(dens), t), False
    else:
        pred = predict(model, _series(model.spec, dens), t)
        density, clipped = pred.density, pred.clipped
    out = _out_dir(args, cfg)
    fio.write_densities(out / "prediction.csv", {"prediction": {t: density}}, grid)
    summary = moments(density)
    rows = [[k, fio.fmt(v)] for k, v in summary._asdict().items()] + [["clipped", str(clipped).lower()]]
    fio.atomic_write(out / "moments.csv", fio.csv_text(["statistic", "value"], rows))
    print(f"prediction at {fio.time_str(t)}: " + " ".join(f"{k}={v:.6g}" for k, v in summary._asdict().items()))
    if args.truth:
        truth_all = fio.read_grid_file(args.truth)
        truth = truth_all.get(fio.TARGET_ID, {}).get(t)
        if truth is None:
            raise ConfigError(f"{args.truth} has no {fio.TARGET_ID!r} density at {fio.time_str(t)}")
        if truth.grid != grid:
            raise GridMismatch(f"truth is on {truth.grid}, model on {grid}")
        mse = distance(density, truth, "L2") ** 2
        w1 = wasserstein1(density, truth)
        fio.atomic_write(out / "metrics.csv", fio.csv_text(["metric", "value"], [["mse", fio.fmt(mse)], ["w1", fio.fmt(w1)]]))
        print(f"  vs truth: MSE={mse:.6g} W1={w1:.6g}")
    return EXIT_OK


def _fit_toml(design, grid: Grid) -> str:
    lines = ["# model matching the simulated design", "[model]", 'kind = "midas"', ""]
    for sid, r in zip(design.series_ids, design.regressors):
        lines += ["[[model.regressors]]", f'series_id = "{sid}"', f"m = {r.m}", f"p = {r.p}",
                  f'h = "{fio.time_str(design.h)}"', f"q = {r.q}", ""]
    lines += ["[grid]", f"lo = {grid.lo!r}", f"hi = {grid.hi!r}", f"n_points = {grid.n_points}", ""]
    return "\n".join(lines)


def cmd_simulate(args, cfg) -> int:
    design = cfg.simulate
    if design is None:
        raise ConfigError("config has no [simulate] section")
    out = _out_dir(args, cfg)
    report = run_study(design, cfg.fit)
    fio.atomic_write(out / "report.csv", report.to_csv())
    print(report.to_csv(), end="")
    if report.failures:
        print(f"{len(report.failures)} of {design.R} replications failed", file=sys.stderr)
    if args.emit_panel:
        _emit_panel(design, out)
    return EXIT_OK if report.R_effective else EXIT_NUMERIC


def _emit_panel(design, out: Path):
    grid = design.grid()
    sim = simulate_data(design, replication_rng(design, 0))
    n_train = design.T - design.holdout
    samples = {fio.TARGET_ID: {design.target_time(t): sim.target_samples[t - 1] for t in range(1, n_train + 1)}}
    for k, sid in enumerate(design.series_ids):
        by_t = {}
        for t in range(1, design.T + 1):
            for i in range(1, design.regressors[k].p + 1):
                by_t[sim.regressor_time(k, t, i)] = sim.regressor_samples[k][t - 1, i - 1]
        samples[sid] = dict(sorted(by_t.items()))
    fio.atomic_write(out / "panel.csv", fio.panel_text(samples))
    fio.atomic_write(fio.sidecar_path(out / "panel.csv"), fio.grid_json(grid))
    targets, series = exact_series(design, grid)
    exact = {fio.TARGET_ID: targets, **{sid: s.entries for sid, s in series.items()}}
    fio.write_densities(out / "exact.csv", exact, grid)
    info = {
        "params": dict(zip(design.param_names(), (float(x) for x in design.true_params()))),
        "train_times": _times(design.target_time(t) for t in range(1, n_train + 1)),
        "holdout_times": _times(design.target_time(t) for t in range(n_train + 1, design.T + 1)),
        "grid": grid.to_dict(),
    }
    fio.atomic_write(out / "design.json", json.dumps(info, indent=2) + "\n")
    fio.atomic_write(out / "fit.toml", _fit_toml(design, grid))
    print(f"panel written to {out / 'panel.csv'}")


def _parse_p_grid(text: str) -> range:
    try:
        lo, hi = (int(x) for x in text.split(":"))
    except ValueError:
        raise ConfigError(f"--p-grid expects LO:HI, got {text!r}") from None
    if lo < 1 or hi < lo:
        raise ConfigError(f"--p-grid needs 1 <= LO <= HI, got {text!r}")
    return range(lo, hi + 1)


def cmd_select_order(args, cfg) -> int:
    spec = _need_model(cfg)
    if spec.kind != "midas":
        raise ConfigError("lag order selection needs kind = 'midas'")
    _, dens = _load_densities(args.data, cfg, args.grid)
    res = aic_select(spec, _targets(dens), _series(spec, dens), _parse_p_grid(args.p_grid), cfg.fit)
    out = _out_dir(args, cfg)
    rows = [[pt.p, fio.fmt(pt.aic), fio.fmt(pt.objective), pt.n_params, pt.T, pt.status] for pt in res.curve]
    fio.atomic_write(out / "aic.csv", fio.csv_text(["p", "aic", "objective", "n_params", "T", "status"], rows))
    fio.atomic_write(out / "selection.json", json.dumps({"chosen_p": res.chosen_p}, indent=2) + "\n")
    print(f"chosen p = {res.chosen_p}")
    return EXIT_OK


def cmd_bootstrap(args, cfg) -> int:
    spec = _need_model(cfg)
    if spec.kind == "ave":
        raise ConfigError("the AVE baseline has no coefficients to test")
    _, dens = _load_densities(args.data, cfg, args.grid)
    data = build_training_set(spec, _targets(dens), _series(spec, dens))
    model = fit(spec, data, cfg.fit)
    results = bootstrap_test(model, data, cfg.bootstrap, cfg.fit)
    out = _out_dir(args, cfg)
    B = cfg.bootstrap.n_bootstrap
    rows = [[r.coefficient_id, fio.fmt(r.estimate), fio.fmt(r.p_value), str(r.two_sided).lower(),
             B, r.n_effective, r.n_failed, ";".join(r.flags)] for r in results]
    header = ["coefficient_id", "estimate", "p_value", "two_sided", "n_bootstrap", "n_effective", "n_failed", "flags"]
    fio.atomic_write(out / "bootstrap.csv", fio.csv_text(header, rows))
    reps = np.column_stack([r.replicates for r in results])
    fio.atomic_write(out / "bootstrap_replicates.csv", fio.csv_text(
        ["replicate", *(r.coefficient_id for r in results)],
        [[b, *(fio.fmt(v) for v in row)] for b, row in enumerate(reps)]))
    for r in results:
        print(f"{r.coefficient_id}: a={r.estimate:.6g} p={r.p_value:.4g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdfmidas", description="Mixed-frequency density forecasting.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True, grid=True):
        p.add_argument("--config", help="TOML run configuration")
        p.add_argument("--seed", type=int, help="override every seed in the config")
        p.add_argument("--out", help="output directory (default: config 'out' or .)")
        if grid:
            p.add_argument("--grid", help="smoothing grid as lo,hi,N")
        if data:
            p.add_argument("data", help="panel CSV (raw samples) or grid CSV (density heights)")

    p = sub.add_parser("fit", help="estimate a model")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="forecast the target density at one time")
    common(p, data=False, grid=False)
    p.add_argument("model", help="model JSON written by fit")
    p.add_argument("data", help="panel or grid CSV holding the regressor (or target) history")
    p.add_argument("--at", required=True, help="forecast time as NUM/DEN")
    p.add_argument("--truth", help="grid CSV with the true target density")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="run a Monte Carlo study")
    common(p, data=False, grid=False)
    p.add_argument("--emit-panel", action="store_true", help="also write one replication's raw samples")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("select-order", help="choose the lag order by AIC")
    common(p)
    p.add_argument("--p-grid", required=True, help="candidate lag orders LO:HI")
    p.set_defaults(func=cmd_select_order)

    p = sub.add_parser("bootstrap-test", help="bootstrap p-values of the combination weights")
    common(p)
    p.set_defaults(func=cmd_bootstrap)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = fio.load_config(args.config, args.seed)
        return args.func(args, cfg)
    except MissingLag as exc:
        skipped = getattr(exc, "skipped", (exc,))
        print(f"error: no usable target time; {len(skipped)} skipped:", file=sys.stderr)
        for e in skipped:
            print(f"  {e}", file=sys.stderr)
        return EXIT_MISSING
    except EmptyHistory as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NotIdentifiable as exc:
        print(f"error: model not identifiable: {exc}", file=sys.stderr)
        return EXIT_IDENT
    except (np.linalg.LinAlgError, ArithmeticError, RuntimeError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
