"""Monte-Carlo experiments: presets, config files, MSE reports and CSV output."""

from __future__ import annotations

import csv
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .filters import FILTER_KINDS, run_filter
from .kalman import lambda_scheme_of, riccati_sequence
from .model import ModelValidationError, RngStream, StateSpaceModel, simulate, validate_model
from .quantizer import QuantizationScheme, TWO_BIT_THRESHOLDS

__all__ = [
    "FilterSpec",
    "ExperimentConfig",
    "MseReport",
    "preset",
    "example1_model",
    "example2_model",
    "load_config",
    "dump_config",
    "config_from_dict",
    "config_to_dict",
    "run_experiment",
    "divergence_flag",
    "emit_csv",
    "read_csv",
    "CSV_COLUMNS",
    "PARTICLE_KINDS",
]

CSV_COLUMNS = ("filter", "n", "mse", "riccati_trace", "trials_ok", "runtime_ms")
DIVERGENCE_FACTOR = 10.0
DIVERGENCE_RUN = 20
SETTLE = 20  # first step of the time-averaged window

PARTICLE_KINDS = ("alg1", "alg2", "klpf")

# (SOI, 2-bit) particle counts per example
_TABLE_COUNTS = {
    "example1": {"alg1": (2500, 10000), "klpf": (500, 90)},
    "example2": {"alg1": (500, 750), "klpf": (25, 3)},
}


@dataclass(frozen=True)
class FilterSpec:
    kind: str
    particles: int | None = None

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.kind in PARTICLE_KINDS and (self.particles is None or self.particles < 1):
            raise ValueError(f"{self.kind} needs a particle count >= 1")

    @property
    def name(self) -> str:
        if self.kind in PARTICLE_KINDS:
            return f"{self.kind}[N={self.particles}]"
        return self.kind


@dataclass
class ExperimentConfig:
    model: StateSpaceModel
    scheme: QuantizationScheme
    filters: list[FilterSpec]
    horizon: int = 100
    trials: int = 500
    seed: int = 0
    out: str | None = None
    innovation_scale: str = "riccati"
    resampling: str = "systematic"
    name: str = ""

    def __post_init__(self):
        if self.trials < 1 or self.horizon < 1:
            raise ValueError("trials and horizon must be at least 1")
        problems = validate_model(self.model)
        if problems:
            raise ModelValidationError(problems)


def example1_model() -> StateSpaceModel:
    return StateSpaceModel(
        A=[[0.95, 1.0, 0.0], [0.0, 0.9, 10.0], [0.0, 0.0, 0.95]],
        h=[1.0, 0.0, 2.0],
        W=2.0 * np.eye(3),
        sigma_v2=2.5,
        P0=0.01 * np.eye(3),
    )


def example2_model(tau: float = 0.1) -> StateSpaceModel:
    # P0 is 2x2: the state is two-dimensional
    return StateSpaceModel(
        A=[[1.0, tau], [0.0, 1.0]],
        h=[1.0, 0.0],
        W=[[tau**4 / 4, tau**3 / 2], [tau**3 / 2, tau**2]],
        sigma_v2=0.81,
        P0=0.01 * np.eye(2),
    )


def preset(name: str, variant: str = "soi") -> ExperimentConfig:
    """Configurations of the two worked examples.

    ``variant`` is ``"soi"`` (sign quantizer) or ``"two_bit"``.  The filter
    list holds the linear quantized filter, Alg 1 and the KLPF with the
    particle counts reported for that example, plus the full-information
    Kalman filter as a floor.
    """
    models = {"example1": example1_model, "example2": example2_model}
    if name not in models:
        raise ValueError(f"unknown preset {name!r}; expected one of {sorted(models)}")
    if variant == "soi":
        scheme, linear, col = QuantizationScheme((0.0,)), "soi_kf", 0
    elif variant == "two_bit":
        scheme, linear, col = QuantizationScheme(TWO_BIT_THRESHOLDS), "mlq_kf", 1
    else:
        raise ValueError(f"unknown variant {variant!r}; expected 'soi' or 'two_bit'")
    counts = _TABLE_COUNTS[name]
    filters = [
        FilterSpec(linear),
        FilterSpec("alg1", counts["alg1"][col]),
        FilterSpec("klpf", counts["klpf"][col]),
        FilterSpec("full_kf"),
    ]
    return ExperimentConfig(models[name](), scheme, filters, name=f"{name}/{variant}")


# ---------------------------------------------------------------- config files

def _model_to_dict(model: StateSpaceModel) -> dict:
    return {
        "A": model.A.tolist(),
        "h": model.h.tolist(),
        "W": model.W.tolist(),
        "sigma_v2": model.sigma_v2.tolist(),
        "P0": model.P0.tolist(),
        "m0": model.m0.tolist(),
    }


def _model_from_dict(d: dict, base: Path) -> StateSpaceModel:
    if "file" in d:
        with open(base / d["file"], "rb") as fh:
            inner = tomllib.load(fh)
        return _model_from_dict(inner.get("model", inner), (base / d["file"]).parent)
    missing = {"A", "h", "W", "sigma_v2", "P0"} - set(d)
    if missing:
        raise ValueError(f"model is missing {sorted(missing)}")
    return StateSpaceModel(
        A=d["A"], h=d["h"], W=d["W"], sigma_v2=d["sigma_v2"], P0=d["P0"], m0=d.get("m0"),
    )


def config_to_dict(cfg: ExperimentConfig) -> dict:
    exp = {
        "horizon": cfg.horizon,
        "trials": cfg.trials,
        "seed": cfg.seed,
        "innovation_scale": cfg.innovation_scale,
        "resampling": cfg.resampling,
    }
    if cfg.out:
        exp["out"] = cfg.out
    filters = []
    for f in cfg.filters:
        entry = {"kind": f.kind}
        if f.particles is not None:
            entry["particles"] = f.particles
        filters.append(entry)
    return {
        "name": cfg.name,
        "model": _model_to_dict(cfg.model),
        "quantizer": {"thresholds": list(cfg.scheme.thresholds)},
        "experiment": exp,
        "filters": filters,
    }


def config_from_dict(d: dict, base: Path | str = ".") -> ExperimentConfig:
    base = Path(base)
    if "model" not in d:
        raise ValueError("config has no [model] table")
    model = d["model"]
    if isinstance(model, str):
        model = {"file": model}
    exp = d.get("experiment", {})
    filters = [FilterSpec(f["kind"], f.get("particles")) for f in d.get("filters", [])]
    return ExperimentConfig(
        model=_model_from_dict(model, base),
        scheme=QuantizationScheme(tuple(d.get("quantizer", {}).get("thresholds", (0.0,)))),
        filters=filters,
        horizon=int(exp.get("horizon", 100)),
        trials=int(exp.get("trials", 500)),
        seed=int(exp.get("seed", 0)),
        out=exp.get("out"),
        innovation_scale=exp.get("innovation_scale", "riccati"),
        resampling=exp.get("resampling", "systematic"),
        name=d.get("name", ""),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    with open(path, "rb") as fh:
        return config_from_dict(tomllib.load(fh), path.parent)


def dump_config(cfg: ExperimentConfig, path=None) -> str:
    text = tomli_w.dumps(config_to_dict(cfg))
    if path is not None:
        Path(path).write_text(text)
    return text


# ---------------------------------------------------------------- experiments

@dataclass
class MseReport:
    """Per-filter, per-step mean squared error of ``xhat(n|n)``.

    ``reference[name]`` is the trace of the filtered covariance of the
    modified Riccati recursion that the filter should track: ``lam`` of the
    quantizer for quantized filters, 1 for the full-information filter.
    """

    filters: list[str]
    mse: dict[str, np.ndarray]
    reference: dict[str, np.ndarray]
    trials_ok: dict[str, int]
    runtime_ms: dict[str, float] = field(default_factory=dict)
    diverged: dict[str, bool] = field(default_factory=dict)
    lam: float = 1.0

    def time_averaged(self, start: int = SETTLE) -> dict[str, float]:
        return {f: float(np.mean(self.mse[f][start:])) for f in self.filters}

    def tracking_ratio(self, start: int = SETTLE) -> dict[str, float]:
        """Time-averaged MSE over the time-averaged reference trace."""
        return {
            f: float(np.mean(self.mse[f][start:]) / np.mean(self.reference[f][start:]))
            for f in self.filters
        }

    def summary(self, start: int = SETTLE) -> str:
        ratio = self.tracking_ratio(start)
        avg = self.time_averaged(start)
        lines = [f"{'filter':<18}{'mse':>14}{'ratio':>9}{'ok':>6}{'diverged':>10}{'ms':>10}"]
        for f in self.filters:
            lines.append(
                f"{f:<18}{avg[f]:>14.6g}{ratio[f]:>9.3f}{self.trials_ok[f]:>6}"
                f"{str(self.diverged.get(f, False)):>10}{self.runtime_ms.get(f, math.nan):>10.0f}"
            )
        return "\n".join(lines)


def divergence_flag(mse, reference, factor: float = DIVERGENCE_FACTOR,
                    run: int = DIVERGENCE_RUN) -> bool:
    """True when ``mse > factor * reference`` for ``run`` consecutive steps."""
    streak = 0
    for m, r in zip(mse, reference):
        streak = streak + 1 if m > factor * r else 0
        if streak >= run:
            return True
    return False


def _trial(cfg: ExperimentConfig, trial: int):
    stream = RngStream(cfg.seed, (trial,))
    traj = simulate(cfg.model, cfg.horizon, stream.child(0))
    errors, elapsed = [], []
    for j, spec in enumerate(cfg.filters):
        opts = {}
        if spec.kind in PARTICLE_KINDS:
            opts = {"innovation_scale": cfg.innovation_scale, "resampling": cfg.resampling}
        t0 = time.perf_counter()
        try:
            out = run_filter(spec.kind, cfg.model, cfg.scheme, traj, spec.particles,
                             stream.child(1, j), **opts)
            err = np.sum((out.estimates - traj.states) ** 2, axis=1)
            if not np.all(np.isfinite(err)):
                err = None
        except (ArithmeticError, ValueError, np.linalg.LinAlgError):
            err = None
        elapsed.append(1e3 * (time.perf_counter() - t0))
        errors.append(err)
    return errors, elapsed


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> MseReport:
    """Monte-Carlo MSE of every configured filter.

    Trial ``k`` simulates its trajectory from substream ``(seed, k, 0)`` and
    runs filter ``j`` on substream ``(seed, k, 1, j)``, so results do not
    depend on ``threads``.  A filter that fails on a trial has that trial
    skipped and not counted in ``trials_ok``.
    """
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda k: _trial(cfg, k), range(cfg.trials)))
    else:
        results = [_trial(cfg, k) for k in range(cfg.trials)]

    lam = lambda_scheme_of(cfg.scheme).lam
    _, filt = riccati_sequence(cfg.model, cfg.horizon, lam)
    _, full = riccati_sequence(cfg.model, cfg.horizon, 1.0)
    mod_trace = np.trace(filt, axis1=1, axis2=2)
    full_trace = np.trace(full, axis1=1, axis2=2)

    names = [s.name for s in cfg.filters]
    report = MseReport(names, {}, {}, {}, lam=lam)
    for j, (spec, name) in enumerate(zip(cfg.filters, names)):
        total = np.zeros(cfg.horizon + 1)
        ok = 0
        runtime = 0.0
        for errors, elapsed in results:
            runtime += elapsed[j]
            if errors[j] is not None:
                total += errors[j]
                ok += 1
        report.mse[name] = total / ok if ok else np.full(cfg.horizon + 1, np.nan)
        report.reference[name] = full_trace if spec.kind == "full_kf" else mod_trace
        report.trials_ok[name] = ok
        report.runtime_ms[name] = runtime
        report.diverged[name] = ok == 0 or divergence_flag(report.mse[name], report.reference[name])
    return report


# ---------------------------------------------------------------- CSV

def _fmt(v) -> str:
    return f"{v:.12g}"


def _write_rows(fh, report: MseReport, timing: bool) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for name in report.filters:
        rt = _fmt(report.runtime_ms.get(name, math.nan)) if timing else ""
        for n, (m, r) in enumerate(zip(report.mse[name], report.reference[name])):
            w.writerow([name, n, _fmt(m), _fmt(r), report.trials_ok[name], rt])


def emit_csv(report: MseReport, path, timing: bool = False) -> None:
    """Write one row per (filter, step) to ``path`` or an open text stream.

    ``runtime_ms`` is wall-clock time and therefore not reproducible; it is
    left empty unless ``timing`` is set so that equal seeds give
    byte-identical files.
    """
    if hasattr(path, "write"):
        _write_rows(path, report, timing)
        return
    try:
        with open(path, "w", newline="") as fh:
            _write_rows(fh, report, timing)
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc


def read_csv(path) -> MseReport:
    rows: dict[str, list] = {}
    meta: dict[str, tuple] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            name = row["filter"]
            rows.setdefault(name, []).append(
                (int(row["n"]), float(row["mse"]), float(row["riccati_trace"]))
            )
            rt = float(row["runtime_ms"]) if row["runtime_ms"] else math.nan
            meta[name] = (int(row["trials_ok"]), rt)
    report = MseReport(list(rows), {}, {}, {})
    for name, items in rows.items():
        items.sort()
        report.mse[name] = np.array([m for _, m, _ in items])
        report.reference[name] = np.array([r for _, _, r in items])
        report.trials_ok[name], report.runtime_ms[name] = meta[name]
        report.diverged[name] = divergence_flag(report.mse[name], report.reference[name])
    return report
