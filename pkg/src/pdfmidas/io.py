"""File formats: sample panels, gridded densities, run configs and model JSON.

Times are stored as exact ``time_num,time_den`` pairs. Floats are written
with ``repr`` so that repeated runs produce byte-identical files, and every
write goes through a temporary file that is renamed into place.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import tempfile
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Mapping

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .density import DensityGrid, Grid, kde
from .errors import ConfigError
from .estimation import FitConfig
from .inference import BootstrapConfig
from .model import FitDiagnostics, FittedModel, MixedSeries, ModelSpec, RegressorSpec, as_time
from .simulation import RegressorLaw, SimDesign

TARGET_ID = "target"
PANEL_HEADER = ("series_id", "time_num", "time_den", "value")
MODEL_FORMAT = "pdfmidas-model"


# ---------------------------------------------------------------------------
# atomic output


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def time_str(t: Fraction) -> str:
    return f"{t.numerator}/{t.denominator}"


# ---------------------------------------------------------------------------
# panels of raw samples


def _rows(path, expected_prefix):
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ConfigError(f"{path} is empty")
        header = [h.strip() for h in header]
        for i, want in enumerate(expected_prefix):
            got = header[i] if i < len(header) else "<missing>"
            if got != want:
                raise ConfigError(f"{path}: column {i + 1} should be {want!r}, found {got!r}")
        for lineno, row in enumerate(reader, start=2):
            if row:
                yield lineno, header, row


def _parse_key(path, lineno, sid, num, den) -> tuple[str, Fraction]:
    if not sid:
        raise ConfigError(f"{path}:{lineno}: empty series_id")
    try:
        n, d = int(num), int(den)
    except ValueError:
        raise ConfigError(f"{path}:{lineno}: time_num/time_den must be integers") from None
    if d <= 0:
        raise ConfigError(f"{path}:{lineno}: time_den must be positive, got {d}")
    return sid, Fraction(n, d)


def read_panel(path) -> dict[str, dict[Fraction, np.ndarray]]:
    """``series_id -> time -> samples`` from a panel CSV."""
    groups: dict[str, dict[Fraction, list]] = defaultdict(lambda: defaultdict(list))
    for lineno, header, row in _rows(path, PANEL_HEADER):
        if len(row) != len(PANEL_HEADER):
            raise ConfigError(f"{path}:{lineno}: expected {len(PANEL_HEADER)} fields, got {len(row)}")
        sid, t = _parse_key(path, lineno, row[0].strip(), row[1], row[2])
        try:
            v = float(row[3])
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: column 'value' is not a number: {row[3]!r}") from None
        if not math.isfinite(v):
            raise ConfigError(f"{path}:{lineno}: column 'value' must be finite")
        groups[sid][t].append(v)
    return {sid: {t: np.array(v) for t, v in sorted(by_t.items())} for sid, by_t in sorted(groups.items())}


def panel_text(samples: Mapping[str, Mapping[Fraction, np.ndarray]]) -> str:
    rows = []
    for sid, by_t in samples.items():
        for t, values in by_t.items():
            t = as_time(t)
            rows.extend([sid, t.numerator, t.denominator, repr(float(v))] for v in np.ravel(values))
    return csv_text(PANEL_HEADER, rows)


def default_grid(panel, n_points: int = 30) -> Grid:
    """Grid over every pooled sample, padded by three times the widest bandwidth."""
    return Grid.covering((x for by_t in panel.values() for x in by_t.values()), n_points)


def smooth_panel(panel, grid: Grid) -> dict[str, dict[Fraction, DensityGrid]]:
    return {sid: {t: kde(x, grid) for t, x in by_t.items()} for sid, by_t in panel.items()}


# ---------------------------------------------------------------------------
# gridded densities


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".grid.json")


def read_grid_sidecar(path) -> Grid:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return Grid(float(d["lo"]), float(d["hi"]), int(d["n_points"]))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad grid sidecar {path}: {exc}") from exc


def grid_json(grid: Grid) -> str:
    return json.dumps(grid.to_dict(), indent=2) + "\n"


def read_grid_file(path) -> dict[str, dict[Fraction, DensityGrid]]:
    """``series_id -> time -> DensityGrid`` from a grid CSV and its sidecar."""
    grid = read_grid_sidecar(sidecar_path(path))
    nodes = [f"s_{i}" for i in range(1, grid.n_points + 1)]
    out: dict[str, dict[Fraction, DensityGrid]] = defaultdict(dict)
    for lineno, header, row in _rows(path, ("series_id", "time_num", "time_den", *nodes)):
        if len(header) != grid.n_points + 3:
            raise ConfigError(f"{path}: header has {len(header) - 3} height columns, sidecar says {grid.n_points}")
        if len(row) != grid.n_points + 3:
            raise ConfigError(f"{path}:{lineno}: expected {grid.n_points + 3} fields, got {len(row)}")
        sid, t = _parse_key(path, lineno, row[0].strip(), row[1], row[2])
        try:
            v = np.array([float(x) for x in row[3:]])
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: density heights must be numbers") from None
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ConfigError(f"{path}:{lineno}: density heights must be finite and nonnegative")
        if t in out[sid]:
            raise ConfigError(f"{path}:{lineno}: duplicate entry for {sid} at {t}")
        out[sid][t] = DensityGrid(grid, v, check_mass=False)
    return {sid: dict(sorted(d.items())) for sid, d in sorted(out.items())}


def grid_text(densities: Mapping[str, Mapping[Fraction, DensityGrid]], grid: Grid) -> str:
    rows = []
    for sid, by_t in densities.items():
        for t, d in by_t.items():
            t = as_time(t)
            vals = d.values if isinstance(d, DensityGrid) else np.asarray(d)
            rows.append([sid, t.numerator, t.denominator, *(repr(float(v)) for v in vals)])
    header = ["series_id", "time_num", "time_den", *(f"s_{i}" for i in range(1, grid.n_points + 1))]
    return csv_text(header, rows)


def curves_text(densities: Mapping[Fraction, DensityGrid], grid: Grid) -> str:
    """Plot data: one row per grid node, one column per time point."""
    times = list(densities)
    header = ["s", *(f"t={time_str(as_time(t))}" for t in times)]
    rows = [[repr(float(s)), *(repr(float(densities[t].values[i])) for t in times)]
            for i, s in enumerate(grid.points)]
    return csv_text(header, rows)


def write_densities(path, densities, grid: Grid):
    atomic_write(path, grid_text(densities, grid))
    atomic_write(sidecar_path(path), grid_json(grid))


def is_grid_file(path) -> bool:
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), [])
    return len(header) > 3 and header[3].strip() == "s_1"


# ---------------------------------------------------------------------------
# run configuration


def _check_keys(section: str, given: Mapping, allowed) -> None:
    extra = sorted(set(given) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(extra)}")


def _build(cls, section: str, raw: Mapping, **extra):
    names = {f.name for f in fields(cls)}
    _check_keys(section, raw, names)
    try:
        return cls(**{**raw, **extra})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


def _regressor(i: int, raw: Mapping) -> RegressorSpec:
    where = f"model.regressors[{i}]"
    _check_keys(where, raw, ("series_id", "m", "p", "h", "q", "weights"))
    if "series_id" not in raw:
        raise ConfigError(f"[{where}]: series_id is required")
    weights = raw.get("weights", "almon")
    if weights not in ("almon", "unrestricted"):
        raise ConfigError(f"[{where}]: weights must be 'almon' or 'unrestricted'")
    q = None if weights == "unrestricted" else raw.get("q", 1)
    try:
        return RegressorSpec(str(raw["series_id"]), int(raw.get("m", 1)), int(raw.get("p", 1)),
                             as_time(raw.get("h", 0)), q)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def regressor_dict(r: RegressorSpec) -> dict:
    d = {"series_id": r.series_id, "m": r.m, "p": r.p, "h": time_str(r.h)}
    if r.q is None:
        d["weights"] = "unrestricted"
    else:
        d["q"] = r.q
    return d


def _design(raw: Mapping, seed: int) -> SimDesign:
    allowed = ("variant", "T", "M", "R", "p", "theta", "h", "holdout", "n_points", "period",
               "fine_points", "regressors", "a")
    _check_keys("simulate", raw, allowed)
    raw = dict(raw)
    variant = raw.pop("variant", "univariate")
    common = {k: raw.pop(k) for k in ("T", "M", "R", "holdout", "n_points", "period", "fine_points") if k in raw}
    if "h" in raw:
        common["h"] = as_time(raw.pop("h"))
    try:
        if "regressors" in raw:
            laws = []
            for i, r in enumerate(raw.pop("regressors")):
                _check_keys(f"simulate.regressors[{i}]", r, ("theta", "m", "p", "drift", "variance"))
                laws.append(RegressorLaw(**r))
            if raw.keys() - {"a"}:
                raise ConfigError("[simulate]: p/theta go inside [[simulate.regressors]] when that is given")
            a = raw.pop("a", None)
            return SimDesign(tuple(laws), None if a is None else tuple(a), seed=seed, **common)
        if "a" in raw:
            raise ConfigError("[simulate]: 'a' needs explicit [[simulate.regressors]]")
        if variant == "univariate":
            return SimDesign.univariate(p=raw.pop("p", 12), theta=tuple(raw.pop("theta", (-0.05,))),
                                        seed=seed, **common)
        if variant == "multivariate":
            if "theta" in raw:
                raise ConfigError("[simulate]: theta is fixed for the multivariate variant")
            return SimDesign.multivariate(p=raw.pop("p", 12), seed=seed, **common)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[simulate]: {exc}") from exc
    raise ConfigError(f"[simulate]: variant must be 'univariate' or 'multivariate', got {variant!r}")


@dataclass
class RunConfig:
    """Everything a CLI command needs, validated before any computation."""

    seed: int = 0
    out: str | None = None
    model: ModelSpec | None = None
    fit: FitConfig = field(default_factory=FitConfig)
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    simulate: SimDesign | None = None
    grid: Grid | None = None
    n_points: int = 30
    raw: dict = field(default_factory=dict, repr=False)

    def echo(self) -> dict:
        d = {"seed": self.seed, "fit": asdict(self.fit), "bootstrap": asdict(self.bootstrap)}
        if self.model is not None:
            d["model"] = model_spec_dict(self.model)
        if self.grid is not None:
            d["grid"] = self.grid.to_dict()
        return d


SECTIONS = ("seed", "out", "model", "fit", "bootstrap", "simulate", "grid")


def parse_config(raw: Mapping, seed_override: int | None = None) -> RunConfig:
    _check_keys("top level", raw, SECTIONS)
    seed = raw.get("seed", 0) if seed_override is None else seed_override
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")
    cfg = RunConfig(seed=seed, out=raw.get("out"), raw=dict(raw))

    for name in ("model", "fit", "bootstrap", "simulate", "grid"):
        if name in raw and not isinstance(raw[name], Mapping):
            raise ConfigError(f"[{name}] must be a table")

    if "grid" in raw:
        g = raw["grid"]
        _check_keys("grid", g, ("lo", "hi", "n_points"))
        cfg.n_points = int(g.get("n_points", 30))
        if "lo" in g or "hi" in g:
            if not {"lo", "hi"} <= set(g):
                raise ConfigError("[grid]: give both lo and hi, or neither")
            try:
                cfg.grid = Grid(float(g["lo"]), float(g["hi"]), cfg.n_points)
            except ValueError as exc:
                raise ConfigError(f"[grid]: {exc}") from exc

    if "model" in raw:
        m = raw["model"]
        _check_keys("model", m, ("kind", "regressors"))
        regs = tuple(_regressor(i, r) for i, r in enumerate(m.get("regressors", ())))
        try:
            cfg.model = ModelSpec(regs, m.get("kind", "midas"))
        except ValueError as exc:
            raise ConfigError(f"[model]: {exc}") from exc

    fit_raw = dict(raw.get("fit", {}))
    if seed_override is not None or "seed" not in fit_raw:
        fit_raw["seed"] = seed
    cfg.fit = _build(FitConfig, "fit", fit_raw)

    boot_raw = dict(raw.get("bootstrap", {}))
    if seed_override is not None or "seed" not in boot_raw:
        boot_raw["seed"] = seed
    cfg.bootstrap = _build(BootstrapConfig, "bootstrap", boot_raw)

    if "simulate" in raw:
        cfg.simulate = _design(raw["simulate"], seed)
    return cfg


def load_config(path, seed_override: int | None = None) -> RunConfig:
    if path is None:
        return parse_config({}, seed_override)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(raw, seed_override)


def parse_grid_flag(text: str) -> Grid:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"--grid expects lo,hi,N, got {text!r}")
    try:
        return Grid(float(parts[0]), float(parts[1]), int(parts[2]))
    except ValueError as exc:
        raise ConfigError(f"--grid: {exc}") from exc


# ---------------------------------------------------------------------------
# fitted models


def model_spec_dict(spec: ModelSpec) -> dict:
    return {"kind": spec.kind, "regressors": [regressor_dict(r) for r in spec.regressors]}


def model_to_json(model: FittedModel, extra: Mapping | None = None) -> str:
    diag = model.diagnostics
    d = {
        "format": MODEL_FORMAT,
        "version": 1,
        "spec": model_spec_dict(model.spec),
        "grid": model.grid.to_dict(),
        "theta": [None if t is None else [float(x) for x in t] for t in model.theta],
        "a": [float(x) for x in model.a],
        "coef": None if model.coef is None else [float(x) for x in model.coef],
        "diagnostics": None if diag is None else {
            "objective": diag.objective, "iterations": diag.iterations, "converged": diag.converged,
            "trace": list(diag.trace), "flags": list(diag.flags), "best_start": diag.best_start,
        },
        "config": asdict(model.config) if isinstance(model.config, FitConfig) else None,
    }
    if extra:
        d.update(extra)
    return json.dumps(d, indent=2) + "\n"


def model_from_json(text: str) -> FittedModel:
    try:
        d = json.loads(text)
        if d.get("format") != MODEL_FORMAT:
            raise ConfigError("not a fitted-model file")
        spec_d = d["spec"]
        regs = tuple(_regressor(i, r) for i, r in enumerate(spec_d["regressors"]))
        spec = ModelSpec(regs, spec_d["kind"])
        g = d["grid"]
        grid = Grid(g["lo"], g["hi"], g["n_points"])
        diag = None if d.get("diagnostics") is None else FitDiagnostics(
            d["diagnostics"]["objective"], d["diagnostics"]["iterations"], d["diagnostics"]["converged"],
            tuple(d["diagnostics"]["trace"]), tuple(d["diagnostics"]["flags"]), d["diagnostics"]["best_start"])
        config = FitConfig(**d["config"]) if d.get("config") else None
        theta = tuple(d["theta"]) if spec.kind == "midas" else ()
        return FittedModel(spec, grid, theta, d["a"], d.get("coef"), diag, config)
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad model file: {exc}") from exc


def load_model(path) -> FittedModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read model {path}: {exc}") from exc
    return model_from_json(text)
