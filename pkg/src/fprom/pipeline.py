"""Run configuration, orchestration, and artifact persistence.

The workflow mirrors a train/test split: ingest an ensemble or a
density list, split it at a configured time, calibrate coefficients on
the training part (moment regression or loss minimization), persist
the calibrated bundle, then propagate and score against the held-out
part.

Everything written to disk is deterministic: floats are serialized
with their shortest round-trip representation, key order is fixed,
and no timestamps or host details leak into outputs. Identical
config + inputs + seed reproduce byte-identical files.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._version import __version__
from .calibrate import CalibrationProblem, calibrate, loss
from .coefficients import MAX_DEGREE, CoefficientModel
from .density import (
    DensityField,
    kde_estimate,
    kl_divergence,
    l1_distance,
    moments,
    read_density_csv,
    tikhonov_smooth,
    write_density_csv,
)
from .errors import InfeasibleConfigError, InputDataError, SolverDivergenceError
from .estimation import (
    MomentSeries,
    TrajectoryEnsemble,
    moment_series,
    regress_time_only_coefficients,
)
from .grid import Grid
from .langevin import _read_ensemble_arrays, ensemble_to_densities
from .sampling import TransformSpec, pushforward_density
from .solver import SolverConfig, solve

__all__ = [
    "ENV_OUTPUT_DIR",
    "SolverSettings",
    "RunConfig",
    "RomArtifact",
    "save_artifact",
    "load_artifact",
    "ingest",
    "split",
    "run_train",
    "run_predict",
    "run_validate",
    "resolve_output_dir",
]

ENV_OUTPUT_DIR = "FPROM_OUTPUT_DIR"

INPUT_MODES = ("ensemble", "densities")
METHODS = ("moment_regression", "loss_minimization")

_ARTIFACT_FORMAT = "fprom-artifact-v1"

# search box used when the config gives no bounds: one pair per drift
# coefficient, then one per diffusion coefficient
_DEFAULT_DRIFT_BOUND = (-2.0, 2.0)
_DEFAULT_DIFF_BOUND = (1e-5, 2.0)

_PUSHFORWARD_SAMPLES = 100_000

_TIME_TOL = 1e-9

logger = logging.getLogger("fprom.pipeline")


def _fmt(value) -> str:
    """Deterministic text for report values (shortest float form)."""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)


def resolve_output_dir(explicit=None, configured=None) -> Path:
    """Explicit argument, then config, then the environment default,
    then the working directory."""
    for candidate in (explicit, configured, os.environ.get(ENV_OUTPUT_DIR)):
        if candidate:
            return Path(candidate)
    return Path(".")


@dataclass(frozen=True)
class SolverSettings:
    """Integrator choice shared by training, prediction, validation."""

    dt: float
    integrator: str = "crank_nicolson"
    boundary: str = "zero_flux"
    accuracy_order: int = 2

    def __post_init__(self) -> None:
        # delegate range checks to SolverConfig with a throwaway record time
        self.to_config((float(self.dt),))

    def to_config(self, record_times) -> SolverConfig:
        return SolverConfig(
            integrator=self.integrator,
            dt=self.dt,
            record_times=tuple(record_times),
            boundary=self.boundary,
            accuracy_order=self.accuracy_order,
        )


def _require_keys(section: dict, allowed: tuple[str, ...], where: str) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise InputDataError(f"unknown {where} key(s): {', '.join(unknown)}")


@dataclass(frozen=True)
class RunConfig:
    """Validated run description.

    defaulted lists the dotted config keys that were absent from the
    source file and filled from defaults; run reports echo it so every
    effective setting is on the record.
    """

    input_mode: str
    input_path: str
    grid: Grid
    train_end: float
    solver: SolverSettings
    transform: TransformSpec = TransformSpec("identity")
    method: str = "loss_minimization"
    drift_degree: int = 0
    diff_degree: int = 0
    smoothing_lambda: float = 1e-6
    truncate_start: float | None = None
    bounds: tuple[tuple[float, float], ...] | None = None
    weights: tuple[float, ...] | None = None
    distance: str = "kl"
    optimizer: str = "random_multistart_nelder_mead"
    budget: int = 500
    fit_window: tuple[float, float] | None = None
    output_dir: str | None = None
    seed: int = 0
    defaulted: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.input_mode not in INPUT_MODES:
            raise InfeasibleConfigError(
                f"input mode must be one of {INPUT_MODES}, got {self.input_mode!r}"
            )
        if self.method not in METHODS:
            raise InfeasibleConfigError(
                f"method must be one of {METHODS}, got {self.method!r}"
            )
        for label, degree in (
            ("drift_degree", self.drift_degree),
            ("diff_degree", self.diff_degree),
        ):
            if not (0 <= degree <= MAX_DEGREE):
                raise InfeasibleConfigError(f"{label} must be in 0..{MAX_DEGREE}")
        if not np.isfinite(self.train_end):
            raise InfeasibleConfigError("split.train_end must be finite")
        if self.truncate_start is not None:
            if not np.isfinite(self.truncate_start):
                raise InfeasibleConfigError("split.truncate_start must be finite")
            if self.truncate_start >= self.train_end:
                raise InfeasibleConfigError(
                    "split.truncate_start must precede split.train_end"
                )
        if not (np.isfinite(self.smoothing_lambda) and self.smoothing_lambda >= 0.0):
            raise InfeasibleConfigError("smoothing_lambda must be finite and >= 0")
        if self.budget < 50:
            raise InfeasibleConfigError("budget must be >= 50")
        if self.fit_window is not None:
            lo, hi = self.fit_window
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise InfeasibleConfigError("fit_window must be a finite (lo, hi)")
            object.__setattr__(self, "fit_window", (float(lo), float(hi)))
        if self.input_mode == "densities" and self.transform.kind != "identity":
            raise InfeasibleConfigError(
                "density-list inputs are taken as already being in model "
                "coordinates; transform must be identity"
            )
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "budget", int(self.budget))

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "RunConfig":
        if not isinstance(raw, dict):
            raise InputDataError("run config must be a JSON object")
        top_allowed = (
            "input",
            "grid",
            "split",
            "solver",
            "transform",
            "method",
            "drift_degree",
            "diff_degree",
            "smoothing_lambda",
            "bounds",
            "weights",
            "distance",
            "optimizer",
            "budget",
            "fit_window",
            "output_dir",
            "seed",
        )
        _require_keys(raw, top_allowed, "config")
        for key in ("input", "grid", "split", "solver"):
            if key not in raw:
                raise InputDataError(f"run config is missing the {key!r} section")
            if not isinstance(raw[key], dict):
                raise InputDataError(f"config section {key!r} must be an object")

        _require_keys(raw["input"], ("mode", "path"), "input")
        if "mode" not in raw["input"] or "path" not in raw["input"]:
            raise InputDataError("input section needs both mode and path")
        input_mode = raw["input"]["mode"]
        input_path = str(raw["input"]["path"])
        if base_dir is not None and not os.path.isabs(input_path):
            input_path = str(Path(base_dir) / input_path)

        _require_keys(raw["grid"], ("x_min", "x_max", "n_points"), "grid")
        try:
            grid = Grid(
                x_min=float(raw["grid"].get("x_min", np.nan)),
                x_max=float(raw["grid"].get("x_max", np.nan)),
                n_points=int(raw["grid"].get("n_points", 0)),
            )
        except (TypeError, ValueError) as exc:
            raise InputDataError(f"grid section: {exc}") from exc

        _require_keys(raw["split"], ("train_end", "truncate_start"), "split")
        if "train_end" not in raw["split"]:
            raise InputDataError("split section needs train_end")
        train_end = float(raw["split"]["train_end"])
        truncate_start = raw["split"].get("truncate_start")
        if truncate_start is not None:
            truncate_start = float(truncate_start)

        _require_keys(
            raw["solver"], ("dt", "integrator", "boundary", "accuracy_order"), "solver"
        )
        if "dt" not in raw["solver"]:
            raise InputDataError("solver section needs dt")
        defaulted = []
        solver_kwargs = {"dt": float(raw["solver"]["dt"])}
        for key in ("integrator", "boundary", "accuracy_order"):
            if key in raw["solver"]:
                solver_kwargs[key] = raw["solver"][key]
            else:
                defaulted.append(f"solver.{key}")
        solver = SolverSettings(**solver_kwargs)

        if "truncate_start" not in raw["split"]:
            defaulted.append("split.truncate_start")

        kwargs = {}
        optional = {
            "transform": "identity",
            "method": "loss_minimization",
            "drift_degree": 0,
            "diff_degree": 0,
            "smoothing_lambda": 1e-6,
            "bounds": None,
            "weights": None,
            "distance": "kl",
            "optimizer": "random_multistart_nelder_mead",
            "budget": 500,
            "fit_window": None,
            "output_dir": None,
            "seed": 0,
        }
        for key, default in optional.items():
            if key in raw:
                kwargs[key] = raw[key]
            else:
                kwargs[key] = default
                defaulted.append(key)
        kwargs["transform"] = TransformSpec(str(kwargs["transform"]))
        if kwargs["bounds"] is not None:
            try:
                kwargs["bounds"] = tuple(
                    (float(a), float(b)) for a, b in kwargs["bounds"]
                )
            except (TypeError, ValueError) as exc:
                raise InputDataError(
                    "bounds must be a list of [lower, upper] pairs"
                ) from exc
        if kwargs["weights"] is not None:
            kwargs["weights"] = tuple(float(w) for w in kwargs["weights"])
        if kwargs["fit_window"] is not None:
            window = kwargs["fit_window"]
            if not isinstance(window, (list, tuple)) or len(window) != 2:
                raise InputDataError("fit_window must be a [lo, hi] pair")
            kwargs["fit_window"] = (float(window[0]), float(window[1]))

        return cls(
            input_mode=input_mode,
            input_path=input_path,
            grid=grid,
            train_end=train_end,
            solver=solver,
            truncate_start=truncate_start,
            defaulted=tuple(defaulted),
            **kwargs,
        )

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        """Load a JSON run config; relative input paths resolve against
        the config file's directory."""
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputDataError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(raw, base_dir=Path(path).parent)

    def report_items(self) -> list[tuple[str, str]]:
        """Effective settings as ordered key=value material."""
        items = [
            ("input_mode", self.input_mode),
            ("input_path", self.input_path),
            ("grid_x_min", self.grid.x_min),
            ("grid_x_max", self.grid.x_max),
            ("grid_n_points", self.grid.n_points),
            ("transform", self.transform.kind),
            ("method", self.method),
            ("drift_degree", self.drift_degree),
            ("diff_degree", self.diff_degree),
            ("solver_integrator", self.solver.integrator),
            ("solver_dt", self.solver.dt),
            ("solver_boundary", self.solver.boundary),
            ("solver_accuracy_order", self.solver.accuracy_order),
            ("smoothing_lambda", self.smoothing_lambda),
            ("split_train_end", self.train_end),
            ("split_truncate_start", self.truncate_start),
            ("bounds", self.bounds),
            ("weights", self.weights),
            ("distance", self.distance),
            ("optimizer", self.optimizer),
            ("budget", self.budget),
            ("fit_window", self.fit_window),
            ("seed", self.seed),
            ("defaulted", ",".join(self.defaulted) if self.defaulted else "none"),
        ]
        return [(k, _fmt(v)) for k, v in items]


@dataclass(frozen=True)
class RomArtifact:
    """Calibrated model bundle: everything needed to propagate."""

    grid: Grid
    model: CoefficientModel
    transform: TransformSpec
    initial_density: DensityField
    train_window: tuple[float, float]
    method: str
    loss: float
    seed: int
    tool_version: str = __version__

    def __post_init__(self) -> None:
        first, last = (float(t) for t in self.train_window)
        if not (np.isfinite(first) and np.isfinite(last) and first <= last):
            raise InfeasibleConfigError(
                f"training window [{first}, {last}] is empty or not finite"
            )
        if self.initial_density.grid != self.grid:
            raise InfeasibleConfigError(
                "initial density grid differs from the artifact grid"
            )
        if self.method not in METHODS:
            raise InfeasibleConfigError(f"unknown calibration method {self.method!r}")
        object.__setattr__(self, "train_window", (first, last))
        object.__setattr__(self, "loss", float(self.loss))
        object.__setattr__(self, "seed", int(self.seed))


def save_artifact(artifact: RomArtifact, path) -> None:
    """Canonical JSON with fixed key order and exact float round-trip."""
    payload = {
        "format": _ARTIFACT_FORMAT,
        "tool_version": artifact.tool_version,
        "grid": {
            "x_min": artifact.grid.x_min,
            "x_max": artifact.grid.x_max,
            "n_points": artifact.grid.n_points,
        },
        "model": {
            "drift_poly": list(artifact.model.drift_poly),
            "diff_poly": list(artifact.model.diff_poly),
        },
        "transform": artifact.transform.kind,
        "train_window": list(artifact.train_window),
        "initial_density": {
            "time_stamp": artifact.initial_density.time_stamp,
            "values": artifact.initial_density.values.tolist(),
        },
        "metadata": {
            "method": artifact.method,
            "loss": artifact.loss,
            "seed": artifact.seed,
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_artifact(path) -> RomArtifact:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputDataError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(payload, dict) or payload.get("format") != _ARTIFACT_FORMAT:
        raise InputDataError(f"{path}: not a {_ARTIFACT_FORMAT} file")
    _require_keys(
        payload,
        (
            "format",
            "tool_version",
            "grid",
            "model",
            "transform",
            "train_window",
            "initial_density",
            "metadata",
        ),
        "artifact",
    )
    try:
        grid = Grid(**payload["grid"])
        model = CoefficientModel(
            drift_poly=tuple(payload["model"]["drift_poly"]),
            diff_poly=tuple(payload["model"]["diff_poly"]),
        )
        dens = payload["initial_density"]
        f0 = DensityField(
            grid=grid,
            values=np.asarray(dens["values"], dtype=float),
            time_stamp=float(dens["time_stamp"]),
        )
        meta = payload["metadata"]
        return RomArtifact(
            grid=grid,
            model=model,
            transform=TransformSpec(payload["transform"]),
            initial_density=f0,
            train_window=tuple(payload["train_window"]),
            method=meta["method"],
            loss=meta["loss"],
            seed=meta["seed"],
            tool_version=payload["tool_version"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputDataError(f"{path}: malformed artifact ({exc})") from exc


def _read_manifest(path) -> list[tuple[float, str]]:
    """Parse `time,path` lines; a literal time,path header is tolerated."""
    entries: list[tuple[float, str]] = []
    base = Path(path).parent
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or (lineno == 1 and line == "time,path"):
                    continue
                parts = line.split(",", 1)
                if len(parts) != 2:
                    raise InputDataError(
                        f"{path}:{lineno}: expected 'time,path'"
                    )
                try:
                    t = float(parts[0])
                except ValueError as exc:
                    raise InputDataError(f"{path}:{lineno}: {exc}") from exc
                if not np.isfinite(t):
                    raise InputDataError(f"{path}:{lineno}: non-finite time")
                target = parts[1].strip()
                if not os.path.isabs(target):
                    target = str(base / target)
                entries.append((t, target))
    except OSError as exc:
        raise InputDataError(f"{path}: {exc}") from exc
    if not entries:
        raise InputDataError(f"{path}: empty manifest")
    entries.sort(key=lambda item: item[0])
    times = [t for t, _ in entries]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise InputDataError(f"{path}: duplicate times in manifest")
    return entries


def ingest(config: RunConfig):
    """Load and validate the configured dataset.

    Ensemble mode returns a TrajectoryEnsemble with the configured
    transform already applied (log transforms require positive raw
    values, and the transformed time axis must come out uniform).
    Density mode returns DensityFields in time order, each on the
    configured grid.
    """
    if config.input_mode == "ensemble":
        times, samples = _read_ensemble_arrays(config.input_path)
        tf = config.transform
        times = tf.forward_t(times)
        samples = tf.forward_x(samples)
        try:
            return TrajectoryEnsemble(
                times=times, samples=samples, transform=tf.kind
            )
        except ValueError as exc:
            raise InputDataError(f"{config.input_path}: {exc}") from exc

    fields = []
    for t, file_path in _read_manifest(config.input_path):
        field = read_density_csv(file_path, time_stamp=t)
        if field.grid != config.grid:
            raise InfeasibleConfigError(
                f"{file_path}: density grid ({field.grid.x_min}, "
                f"{field.grid.x_max}, {field.grid.n_points}) differs from the "
                "configured grid; density inputs are not re-gridded at ingest"
            )
        fields.append(field)
    return fields


def _level_index(times: np.ndarray, value: float, label: str) -> int:
    span = max(1.0, float(np.max(np.abs(times))))
    hits = np.nonzero(np.abs(times - value) <= _TIME_TOL * span)[0]
    if hits.size == 0:
        raise InfeasibleConfigError(f"{label} {value} is not on the time axis")
    return int(hits[0])


def split(dataset, train_end: float, truncate_start: float | None = None):
    """Partition by time: training takes [truncate_start or t0,
    train_end], testing takes everything after. Both sides must be
    non-empty (ensembles additionally need two levels per side)."""
    if isinstance(dataset, TrajectoryEnsemble):
        times = dataset.times
    else:
        times = np.asarray([f.time_stamp for f in dataset], dtype=float)
        if times.size == 0:
            raise InfeasibleConfigError("cannot split an empty density list")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InfeasibleConfigError("density list must be in time order")
    end = _level_index(times, float(train_end), "split.train_end")
    start = 0
    if truncate_start is not None:
        start = _level_index(times, float(truncate_start), "split.truncate_start")
    if start > end:
        raise InfeasibleConfigError("truncate_start lies after train_end")
    if end + 1 >= times.size:
        raise InfeasibleConfigError(
            f"train_end {train_end} leaves an empty testing side"
        )
    if isinstance(dataset, TrajectoryEnsemble):
        if end + 1 - start < 2 or times.size - (end + 1) < 2:
            raise InfeasibleConfigError(
                "ensemble splits need at least two time levels per side; "
                f"got {end + 1 - start} training and "
                f"{times.size - (end + 1)} testing"
            )
        make = lambda lo, hi: TrajectoryEnsemble(
            times=dataset.times[lo:hi],
            samples=dataset.samples[:, lo:hi],
            transform=dataset.transform,
        )
        return make(start, end + 1), make(end + 1, times.size)
    return list(dataset[start : end + 1]), list(dataset[end + 1 :])


def _training_densities(config: RunConfig, training) -> list[DensityField]:
    """KDE per training level for ensembles; pass-through for lists."""
    if isinstance(training, TrajectoryEnsemble):
        return ensemble_to_densities(training, config.grid, training.times)
    return training


def _train_moment_series(training) -> MomentSeries:
    if isinstance(training, TrajectoryEnsemble):
        return moment_series(training)
    stamps = []
    means = []
    variances = []
    for field in training:
        m = moments(field)
        stamps.append(field.time_stamp)
        means.append(m.mean)
        variances.append(m.variance)
    return MomentSeries(
        times=np.asarray(stamps), mean=np.asarray(means), variance=np.asarray(variances)
    )


def _default_bounds(config: RunConfig) -> tuple[tuple[float, float], ...]:
    return (_DEFAULT_DRIFT_BOUND,) * (config.drift_degree + 1) + (
        _DEFAULT_DIFF_BOUND,
    ) * (config.diff_degree + 1)


def run_train(config: RunConfig, output_dir=None):
    """Calibrate on the training side and persist the result.

    Returns (artifact, report text). When an output directory is
    resolved, artifact.json and run_report.txt are written there.
    """
    dataset = ingest(config)
    training, _ = split(dataset, config.train_end, config.truncate_start)
    train_fields = _training_densities(config, training)
    if len(train_fields) < 2:
        raise InfeasibleConfigError(
            "training side needs at least two time levels: one initial "
            "density plus one target"
        )
    f0 = tikhonov_smooth(train_fields[0], lam=config.smoothing_lambda)
    targets = tuple((f.time_stamp, f) for f in train_fields[1:])
    solver_config = config.solver.to_config([t for t, _ in targets])
    problem = CalibrationProblem(
        initial_density=f0,
        targets=targets,
        drift_degree=config.drift_degree,
        diff_degree=config.diff_degree,
        bounds=config.bounds if config.bounds is not None else _default_bounds(config),
        solver=solver_config,
        weights=config.weights,
        distance=config.distance,
    )

    extra: list[tuple[str, str]] = []
    if config.method == "loss_minimization":
        result = calibrate(
            problem,
            optimizer=config.optimizer,
            budget=config.budget,
            seed=config.seed,
        )
        model = result.model
        final_loss = result.final_loss
        extra.append(("n_evaluations", _fmt(result.n_evaluations)))
        extra.append(("converged", _fmt(result.converged)))
    else:
        series = _train_moment_series(training)
        window = config.fit_window
        if window is None:
            window = (float(series.times[0]), float(series.times[-1]))
        model = regress_time_only_coefficients(
            series,
            fit_window=window,
            drift_degree=config.drift_degree,
            diff_degree=config.diff_degree,
        )
        # score the regressed model with the same loss for comparability
        final_loss = loss(
            problem, np.asarray(model.drift_poly + model.diff_poly)
        )

    artifact = RomArtifact(
        grid=config.grid,
        model=model,
        transform=config.transform,
        initial_density=f0,
        train_window=(train_fields[0].time_stamp, train_fields[-1].time_stamp),
        method=config.method,
        loss=final_loss,
        seed=config.seed,
    )

    lines = [f"{k}={v}" for k, v in config.report_items()]
    lines.append(f"train_window={_fmt(list(artifact.train_window))}")
    lines.append(f"n_training_times={len(train_fields)}")
    lines.append(f"drift_poly={_fmt(list(model.drift_poly))}")
    lines.append(f"diff_poly={_fmt(list(model.diff_poly))}")
    lines.append(f"loss={_fmt(final_loss)}")
    lines.extend(f"{k}={v}" for k, v in extra)
    lines.append(f"tool_version={__version__}")
    report = "\n".join(lines) + "\n"

    out = resolve_output_dir(output_dir, config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_artifact(artifact, out / "artifact.json")
    (out / "run_report.txt").write_text(report)
    return artifact, report


def run_predict(
    artifact: RomArtifact,
    horizon: float,
    record_times,
    solver: SolverSettings,
    output_dir=None,
    pushforward_samples: int = _PUSHFORWARD_SAMPLES,
):
    """Propagate the artifact forward and export per-time densities.

    record_times must not exceed horizon, which must lie beyond the
    training window. With a non-identity transform each density is
    also mapped back to original units by sampled pushforward and
    exported alongside. Returns (densities, reconstructed densities).
    """
    record_times = tuple(float(t) for t in record_times)
    if not record_times:
        raise InfeasibleConfigError("at least one record time is required")
    if not horizon > artifact.train_window[1]:
        raise InfeasibleConfigError(
            f"prediction horizon {horizon} does not extend beyond the "
            f"training window end {artifact.train_window[1]}"
        )
    if max(record_times) > horizon + _TIME_TOL * max(1.0, abs(horizon)):
        raise InfeasibleConfigError("record times must not exceed the horizon")
    trace = solve(
        artifact.initial_density,
        artifact.model,
        solver.to_config(sorted(record_times)),
    )
    if trace.diverged:
        raise SolverDivergenceError(f"forward solve diverged: {trace.diagnostic}")
    densities = list(trace.snapshots)

    reconstructed: list[DensityField] = []
    if artifact.transform.kind != "identity":
        lo = float(np.exp(artifact.grid.x_min))
        hi = float(np.exp(artifact.grid.x_max))
        target = Grid(x_min=lo, x_max=hi, n_points=artifact.grid.n_points)
        reconstructed = [
            pushforward_density(
                f, artifact.transform, target, pushforward_samples, artifact.seed
            )
            for f in densities
        ]

    if output_dir is not None or os.environ.get(ENV_OUTPUT_DIR):
        out = resolve_output_dir(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_density_set(out, "predicted", densities)
        if reconstructed:
            _write_density_set(out, "reconstructed", reconstructed)
    return densities, reconstructed


def _write_density_set(out: Path, prefix: str, fields: list[DensityField]) -> None:
    with open(out / f"{prefix}_manifest.csv", "w") as fh:
        fh.write("time,path\n")
        for i, field in enumerate(fields):
            name = f"{prefix}_{i:04d}.csv"
            write_density_csv(field, out / name)
            fh.write(f"{field.time_stamp!r},{name}\n")


def _regrid(field: DensityField, grid: Grid) -> DensityField:
    """Linear interpolation onto grid, then renormalization."""
    values = np.interp(grid.nodes, field.grid.nodes, field.values, left=0.0, right=0.0)
    return DensityField.normalized(grid, values, field.time_stamp)


def run_validate(
    artifact: RomArtifact,
    testing,
    solver: SolverSettings,
    output_dir=None,
):
    """Score the artifact against held-out densities.

    testing is a TrajectoryEnsemble (KDE is applied per level on the
    artifact grid) or a list of DensityFields; fields on a different
    grid are re-gridded by linear interpolation plus renormalization,
    which is logged. Returns rows (time, kl, l1); the final row is
    echoed as the summary line of metrics.csv.
    """
    if isinstance(testing, TrajectoryEnsemble):
        fields = ensemble_to_densities(testing, artifact.grid, testing.times)
    else:
        fields = list(testing)
    if not fields:
        raise InfeasibleConfigError("testing set is empty")
    prepared = []
    for field in fields:
        if field.grid != artifact.grid:
            logger.info(
                "re-gridding test density at t=%r onto the artifact grid",
                field.time_stamp,
            )
            field = _regrid(field, artifact.grid)
        prepared.append(field)
    times = [f.time_stamp for f in prepared]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise InfeasibleConfigError("testing densities must be in time order")
    trace = solve(artifact.initial_density, artifact.model, solver.to_config(times))
    if trace.diverged:
        raise SolverDivergenceError(f"forward solve diverged: {trace.diagnostic}")
    rows = []
    for field, predicted in zip(prepared, trace.snapshots):
        rows.append(
            (
                field.time_stamp,
                kl_divergence(field, predicted),
                l1_distance(field, predicted),
            )
        )

    if output_dir is not None or os.environ.get(ENV_OUTPUT_DIR):
        out = resolve_output_dir(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "metrics.csv", "w") as fh:
            fh.write("time,kl,l1\n")
            for t, kl, l1 in rows:
                fh.write(f"{t!r},{kl!r},{l1!r}\n")
            t, kl, l1 = rows[-1]
            fh.write(f"final,{kl!r},{l1!r}\n")
    return rows
