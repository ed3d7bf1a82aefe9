"""Experiment configuration, ingestion, runs, sweeps and result files.

A run forecasts each observation causally, emits the two-sided interval
from the current lower/upper radii, then feeds the signed score pair to
two one-sided trackers that each target ``alpha / 2``.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cdf import CdfKind
from .datagen import CHANGEPOINTS, Setting, SynthConfig, generate
from .errors import ConfigError, CopError, IngestError
from .metrics import RunRecord, make_record, recovery_time, rolling_coverage, summarize
from .predictors import ForecastState, PredictorKind
from .theory import check_boundedness, check_coverage_bound
from .trackers import Schedule, TrackerConfig, Variant, make_tracker, track

ETA_GRIDS = {
    Variant.COP: (1.0, 0.5, 0.1, 0.05),
    Variant.COP_GATED: (1.0, 0.5, 0.1, 0.05),
    Variant.OGD: (10.0, 5.0, 1.0, 0.5, 0.1, 0.05, 0.01, 0.005),
    Variant.SF_OGD: (1000.0, 500.0, 100.0, 50.0, 10.0, 5.0, 1.0, 0.5, 0.1, 0.05),
    Variant.DECAY_OGD: (2000.0, 1000.0, 200.0, 100.0, 20.0, 10.0, 2.0, 1.0, 0.2, 0.1),
    Variant.ACI: (0.1, 0.05, 0.01, 0.005),
}
GAMMA_GRID = (1.0, 0.9, 0.5, 0.1, 0.0)
LAMBDA_GRID = (0.1, 0.5, 1.0)
ROLLING_WINDOW = 50
SUMMARY_FIELDS = (
    "dataset",
    "predictor",
    "method",
    "seed",
    "eta",
    "lambda",
    "gamma",
    "coverage",
    "avg_width",
    "median_width",
    "recovery_time",
    "per_step_ns",
)
TRAJECTORY_FIELDS = ("t", "y", "y_hat", "lower", "upper", "covered", "rolling_coverage")
BOUND_FIELDS = ("side", "name", "lhs", "rhs", "slack", "satisfied", "prefixes")
SELECTION_RULES = ("tolerance", "coverage")

_CONFIG_TYPES = {
    "dataset": str,
    "predictor": str,
    "method": str,
    "alpha": float,
    "etas": list,
    "schedule": (str, type(None)),
    "lambdas": list,
    "window": int,
    "cdf_kind": str,
    "gamma": float,
    "seeds": list,
    "initial_radius": float,
    "n": int,
    "fit_window": int,
    "log_transform": bool,
    "epsilon_gate": float,
    "selection": str,
    "coverage_tol": float,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run or sweep needs.

    ``dataset`` is a synthetic setting name or a path to a ``t,value`` CSV.
    An empty ``etas`` means the default grid for ``method``. ``alpha`` is
    the two-sided level; each tracker targets ``alpha / 2``.
    """

    dataset: str = Setting.CHANGEPOINT.value
    predictor: str = PredictorKind.AR3.value
    method: str = Variant.COP.value
    alpha: float = 0.1
    etas: tuple[float, ...] = ()
    schedule: str | None = None
    lambdas: tuple[float, ...] = (0.5,)
    window: int = 100
    cdf_kind: str = CdfKind.ECDF.value
    gamma: float = 1.0
    seeds: tuple[int, ...] = (0,)
    initial_radius: float = 0.0
    n: int = 2000
    fit_window: int = 200
    log_transform: bool = False
    epsilon_gate: float = 0.0
    selection: str = "tolerance"
    coverage_tol: float = 0.01

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)
        try:
            set_("predictor", PredictorKind(self.predictor).value)
            set_("method", Variant(self.method).value)
            set_("cdf_kind", CdfKind(self.cdf_kind).value)
            if self.schedule is not None:
                set_("schedule", Schedule(self.schedule).value)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        set_("etas", tuple(float(e) for e in self.etas))
        set_("lambdas", tuple(float(x) for x in self.lambdas))
        set_("seeds", tuple(int(s) for s in self.seeds))
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if any(not (e >= 0.0 and math.isfinite(e)) for e in self.etas):
            raise ConfigError(f"etas must be finite and non-negative, got {self.etas}")
        if not self.lambdas or any(not 0.0 <= x <= 1.0 for x in self.lambdas):
            raise ConfigError(f"lambdas must be a non-empty subset of [0, 1], got {self.lambdas}")
        if not self.seeds or any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be a non-empty list of non-negative integers")
        if self.selection not in SELECTION_RULES:
            raise ConfigError(f"selection must be one of {SELECTION_RULES}, got {self.selection!r}")
        if not self.coverage_tol >= 0.0:
            raise ConfigError("coverage_tol must be >= 0")
        if self.fit_window < 2:
            raise ConfigError("fit_window must be >= 2")
        if not self.is_synthetic and not Path(self.dataset).is_file():
            raise ConfigError(f"dataset {self.dataset!r} is neither a synthetic setting nor a file")
        if self.is_synthetic:
            SynthConfig(Setting(self.dataset), self.n, 0)
        # validates window, gamma, epsilon_gate, initial_radius
        self.tracker_config(self.eta_grid[0] if self.eta_grid else 0.0, self.lambdas[0])

    @property
    def is_synthetic(self) -> bool:
        return self.dataset in {s.value for s in Setting}

    @property
    def variant(self) -> Variant:
        return Variant(self.method)

    @property
    def eta_grid(self) -> tuple[float, ...]:
        return self.etas or ETA_GRIDS[self.variant]

    def tracker_config(self, eta: float, lam: float, gamma: float | None = None) -> TrackerConfig:
        return TrackerConfig(
            variant=self.variant,
            alpha=self.alpha / 2.0,
            eta=eta,
            schedule=self.schedule,
            scale=lam,
            window=self.window,
            initial_radius=self.initial_radius,
            epsilon_gate=self.epsilon_gate,
            cdf_kind=self.cdf_kind,
            gamma=self.gamma if gamma is None else gamma,
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("etas", "lambdas", "seeds"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        unknown = set(raw) - set(_CONFIG_TYPES)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key, value in raw.items():
            want = _CONFIG_TYPES[key]
            ok = isinstance(value, want)
            if want is float and isinstance(value, int) and not isinstance(value, bool):
                ok = True
            if want is int and isinstance(value, bool):
                ok = False
            if not ok:
                raise ConfigError(f"config key {key!r} has wrong type {type(value).__name__}")
        return cls(**raw)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(raw)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def ingest_csv(path: str | Path, log_transform: bool = False) -> np.ndarray:
    """Read a ``t,value`` CSV into an array, keeping file order.

    Malformed rows raise :class:`IngestError` naming the line; a
    timestamp that does not increase only warns. With ``log_transform``
    values must be positive and are returned as logs.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header is None or [h.strip() for h in header] != ["t", "value"]:
        raise IngestError(f"{path}:1: expected header 't,value', got {header}")
    values: list[float] = []
    prev_t = None
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise IngestError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
        try:
            t = float(row[0])
            v = float(row[1])
        except ValueError as exc:
            raise IngestError(f"{path}:{lineno}: {exc}") from exc
        if not math.isfinite(v):
            raise IngestError(f"{path}:{lineno}: non-finite value {row[1]!r}")
        if log_transform:
            if v <= 0.0:
                raise IngestError(f"{path}:{lineno}: log transform needs positive values, got {v}")
            v = math.log(v)
        if prev_t is not None and t <= prev_t:
            warnings.warn(f"{path}:{lineno}: timestamp {row[0]} does not increase; keeping file order", stacklevel=2)
        prev_t = t
        values.append(v)
    if not values:
        raise IngestError(f"{path}: no data rows")
    return np.asarray(values)


def load_series(config: ExperimentConfig, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """``(y, z)``: observations on the original scale and the modelling scale."""
    if config.is_synthetic:
        _, y = generate(SynthConfig(Setting(config.dataset), config.n, seed))
        return y, y
    z = ingest_csv(config.dataset, config.log_transform)
    return (np.exp(z) if config.log_transform else z), z


def _forecast_all(z: np.ndarray, kind: str, fit_window: int) -> np.ndarray:
    state = ForecastState(PredictorKind(kind), fit_window=fit_window)
    out = np.empty(len(z))
    for i, zi in enumerate(z):
        try:
            f = state.forecast()
        except Exception as exc:  # noqa: BLE001 - any predictor failure aborts the run
            raise CopError(f"predictor {kind} failed at step {i + 1}: {exc}") from exc
        if not math.isfinite(f):
            raise CopError(f"predictor {kind} produced a non-finite forecast at step {i + 1}")
        out[i] = f
        state.observe(zi)
    return out


@lru_cache(maxsize=64)
def _cached_inputs(dataset: str, n: int, seed: int, log_transform: bool, predictor: str, fit_window: int):
    cfg = ExperimentConfig(dataset=dataset, n=n, seeds=(seed,), log_transform=log_transform)
    y, z = load_series(cfg, seed)
    f = _forecast_all(z, predictor, fit_window)
    for a in (y, z, f):
        a.setflags(write=False)
    return y, z, f


def inputs_for(config: ExperimentConfig, seed: int):
    """Series and forecasts, cached because every grid point reuses them."""
    if not config.is_synthetic:
        seed = 0  # CSV inputs do not depend on the seed
    return _cached_inputs(config.dataset, config.n, seed, config.log_transform, config.predictor, config.fit_window)


def _side_rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    return np.random.default_rng([seed, 0]), np.random.default_rng([seed, 1])


def run_experiment(
    config: ExperimentConfig,
    eta: float | None = None,
    lam: float | None = None,
    seed: int | None = None,
    gamma: float | None = None,
) -> RunRecord:
    """One online pass; unspecified knobs take the first config value."""
    eta = config.eta_grid[0] if eta is None else eta
    lam = config.lambdas[0] if lam is None else lam
    seed = config.seeds[0] if seed is None else seed
    tcfg = config.tracker_config(eta, lam, gamma)
    y, z, f = inputs_for(config, seed)
    rng_lo, rng_up = _side_rngs(seed)
    lower = make_tracker(tcfg, rng_lo)
    upper = make_tracker(tcfg, rng_up)
    records = []
    step_ns = []
    clock = time.perf_counter_ns
    for i in range(len(z)):
        yh, zt = float(f[i]), float(z[i])
        records.append(make_record(i + 1, float(y[i]), yh, lower.q, upper.q, config.log_transform))
        t0 = clock()
        lower.update(yh - zt)
        upper.update(zt - yh)
        step_ns.append(clock() - t0)
    meta = {"eta": eta, "lambda": lam, "seed": seed, "gamma": tcfg.gamma}
    return RunRecord(records, {**config.to_dict(), **meta}, step_ns)


def side_scores(config: ExperimentConfig, seed: int) -> tuple[np.ndarray, np.ndarray]:
    _, z, f = inputs_for(config, seed)
    return f - z, z - f


def _changepoints(config: ExperimentConfig) -> tuple[int, ...]:
    if config.dataset in (Setting.CHANGEPOINT.value, Setting.VAR_CHANGEPOINT.value):
        return tuple(cp for cp in CHANGEPOINTS if cp < config.n)
    return ()


def recovery_times(run: RunRecord, config: ExperimentConfig) -> list[int | None]:
    out = []
    for cp in _changepoints(config):
        try:
            out.append(recovery_time(run, cp, alpha=config.alpha))
        except ValueError:
            out.append(None)
    return out


def summary_row(run: RunRecord, config: ExperimentConfig) -> dict:
    """One row in the ``SUMMARY_FIELDS`` schema.

    ``recovery_time`` holds one entry per changepoint joined by ``;``
    (``na`` when coverage never settles, empty for shift-free data).
    """
    s = summarize(run)
    rec = recovery_times(run, config)
    return {
        "dataset": config.dataset,
        "predictor": config.predictor,
        "method": config.method,
        "seed": run.config.get("seed"),
        "eta": run.config.get("eta"),
        "lambda": run.config.get("lambda"),
        "gamma": run.config.get("gamma"),
        "coverage": s["coverage"],
        "avg_width": s["avg_width"],
        "median_width": s["median_width"],
        "recovery_time": ";".join("na" if r is None else str(r) for r in rec),
        "per_step_ns": run.mean_step_ns(),
    }


@dataclass
class GridPoint:
    eta: float
    coverage: float
    avg_width: float
    median_width: float
    rows: list[dict] = field(default_factory=list)


def _mean_width(values: Sequence[float]) -> float:
    return math.inf if any(math.isinf(v) for v in values) else float(np.mean(values))


def evaluate_grid(config: ExperimentConfig, lam: float | None = None) -> list[GridPoint]:
    """Seed-averaged summaries for every eta in the grid."""
    out = []
    for eta in config.eta_grid:
        rows = [summary_row(run_experiment(config, eta, lam, seed), config) for seed in config.seeds]
        out.append(
            GridPoint(
                eta,
                float(np.mean([r["coverage"] for r in rows])),
                _mean_width([r["avg_width"] for r in rows]),
                float(np.mean([r["median_width"] for r in rows])),
                rows,
            )
        )
    return out


def select_eta(points: Sequence[GridPoint], alpha: float, rule: str = "tolerance", tol: float = 0.01) -> GridPoint:
    """Pick the best grid point.

    ``coverage``: closest mean coverage to ``1 - alpha``, ties to the
    smaller average width. ``tolerance``: smallest average width among
    points whose coverage is within ``tol`` of ``1 - alpha`` (ties and
    all-infinite widths to the closer coverage); if none qualifies, fall
    back to ``coverage``.
    """
    if not points:
        raise ValueError("empty grid")
    target = 1.0 - alpha
    gap = lambda p: abs(p.coverage - target)
    if rule == "tolerance":
        ok = [p for p in points if gap(p) <= tol + 1e-12]
        if ok:
            return min(ok, key=lambda p: (p.avg_width, gap(p), p.median_width))
    elif rule != "coverage":
        raise ValueError(f"unknown selection rule {rule!r}")
    return min(points, key=lambda p: (gap(p), p.avg_width, p.median_width))


def best_eta(config: ExperimentConfig, lam: float | None = None) -> tuple[GridPoint, list[GridPoint]]:
    points = evaluate_grid(config, lam)
    return select_eta(points, config.alpha, config.selection, config.coverage_tol), points


def seed_stats(rows: Sequence[dict], keys=("coverage", "avg_width", "median_width", "per_step_ns")) -> tuple[dict, dict]:
    """Mean and standard deviation rows over per-seed summaries."""
    first = rows[0]
    mean = {k: first[k] for k in ("dataset", "predictor", "method", "eta", "lambda", "gamma")}
    std = dict(mean)
    mean["seed"], std["seed"] = "mean", "std"
    for k in keys:
        vals = np.asarray([r[k] for r in rows], dtype=float)
        if np.isinf(vals).any():
            mean[k], std[k] = math.inf, math.nan
        else:
            mean[k], std[k] = float(vals.mean()), float(vals.std())
    mean["recovery_time"] = std["recovery_time"] = ""
    return mean, std


def sweep(config: ExperimentConfig, axis: str, values: Iterable | None = None) -> list[dict]:
    """Summaries along one axis.

    ``seed``: one row per seed at the selected eta, then mean and std
    rows. ``eta``/``lambda``/``gamma``: one seed-averaged row per value;
    the other knobs take the selected eta and the first lambda.
    """
    if axis not in ("seed", "eta", "lambda", "gamma"):
        raise ConfigError(f"unknown sweep axis {axis!r}")
    defaults = {
        "seed": config.seeds,
        "eta": config.eta_grid,
        "lambda": config.lambdas if len(config.lambdas) > 1 else LAMBDA_GRID,
        "gamma": GAMMA_GRID,
    }
    values = tuple(defaults[axis] if values is None else values)
    if not values:
        raise ConfigError(f"sweep over {axis!r} needs at least one value")
    if axis == "eta":
        points = evaluate_grid(dataclasses.replace(config, etas=tuple(float(v) for v in values)))
        return [_average_row(p.rows) for p in points]
    eta = config.eta_grid[0] if len(config.eta_grid) == 1 else best_eta(config)[0].eta
    if axis == "seed":
        rows = [summary_row(run_experiment(config, eta, seed=int(s)), config) for s in values]
        return rows + list(seed_stats(rows))
    out = []
    for v in values:
        kw = {"lam": float(v)} if axis == "lambda" else {"gamma": float(v)}
        rows = [summary_row(run_experiment(config, eta, seed=s, **kw), config) for s in config.seeds]
        out.append(_average_row(rows))
    return out


def _average_row(rows: Sequence[dict]) -> dict:
    if len(rows) == 1:
        return dict(rows[0])
    mean, _ = seed_stats(rows)
    return mean


def _fmt(v) -> str:
    if v is None:
        return "na"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "na"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return _fmt(v)
    if isinstance(v, (np.floating, np.integer)):
        return _jsonable(v.item())
    return v


def write_rows(rows: Sequence[dict], path: str | Path, fields: Sequence[str], fmt: str = "csv") -> Path:
    """Write rows as CSV or JSON lines; non-finite floats become ``inf``/``na`` tokens."""
    path = Path(path)
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(fields)
            for r in rows:
                w.writerow([_fmt(r.get(k)) for k in fields])
    elif fmt == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for r in rows:
                fh.write(json.dumps({k: _jsonable(r.get(k)) for k in fields}) + "\n")
    else:
        raise ConfigError(f"unknown format {fmt!r}")
    return path


def trajectory_rows(run: RunRecord) -> list[dict]:
    covered = run.covered
    roll = rolling_coverage(covered, ROLLING_WINDOW) if len(covered) >= ROLLING_WINDOW else np.array([])
    rows = []
    for i, r in enumerate(run.records):
        j = i + 1 - ROLLING_WINDOW
        rows.append(
            {
                "t": r.t,
                "y": r.y,
                "y_hat": r.y_hat,
                "lower": r.lower,
                "upper": r.upper,
                "covered": r.covered,
                "rolling_coverage": float(roll[j]) if j >= 0 else None,
            }
        )
    return rows


def bound_rows(config: ExperimentConfig, eta: float, lam: float, seed: int) -> list[dict]:
    """Coverage and boundedness certificates for both sides of one run."""
    if config.variant is Variant.ACI:
        return []
    tcfg = config.tracker_config(eta, lam)
    rng_lo, rng_up = _side_rngs(seed)
    rows = []
    for side, scores, rng in zip(("lower", "upper"), side_scores(config, seed), (rng_lo, rng_up)):
        traj = track(scores, tcfg, rng)
        for rep in (check_coverage_bound(traj), check_boundedness(traj)):
            rows.append({"side": side, **rep.row()})
    return rows


def emit_results(
    out_dir: str | Path,
    summary: Sequence[dict],
    trajectory: Sequence[dict] = (),
    bounds: Sequence[dict] = (),
    fmt: str = "csv",
    timing: bool = False,
) -> list[Path]:
    """Write summary, trajectory and bound files into ``out_dir``.

    Timing is wall-clock and so not reproducible; unless ``timing`` is
    set the ``per_step_ns`` column is written as ``na`` so identical
    configs give byte-identical files.
    """
    if not summary:
        raise ValueError("no summary rows to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = "csv" if fmt == "csv" else "jsonl"
    rows = [dict(r) for r in summary]
    if not timing:
        for r in rows:
            r["per_step_ns"] = None
    paths = [write_rows(rows, out / f"summary.{ext}", SUMMARY_FIELDS, fmt)]
    if trajectory:
        paths.append(write_rows(trajectory, out / f"trajectory.{ext}", TRAJECTORY_FIELDS, fmt))
    if bounds:
        paths.append(write_rows(bounds, out / f"bounds.{ext}", BOUND_FIELDS, fmt))
    return paths
