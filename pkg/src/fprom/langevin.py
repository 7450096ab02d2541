"""Euler-Maruyama ensemble simulation of scalar Ito SDEs.

Synthetic ground-truth generator: dx = h(x,t) dt + g(x,t) dW with h
and g picked from small registries. Every trajectory draws from its
own counter-based RNG stream keyed by (seed, trajectory index), so the
ensemble is bit-identical regardless of chunking or scheduling.

Stratonovich-calibrated inputs must be converted with
coefficients.stratonovich_to_ito_drift before simulation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

from .density import DensityField, kde_estimate
from .errors import InfeasibleConfigError, InputDataError, SolverDivergenceError
from .estimation import TrajectoryEnsemble
from .grid import Grid

__all__ = [
    "SdeSpec",
    "SimPlan",
    "simulate",
    "ensemble_to_densities",
    "write_ensemble_csv",
    "read_ensemble_csv",
]

# drift registry: kind -> (parameter names, h(params, x, t))
DRIFT_KINDS = {
    "constant": (("value",), lambda p, x, t: np.full_like(x, p[0])),
    "linear_in_t": (("a", "b"), lambda p, x, t: np.full_like(x, p[0] + p[1] * t)),
    "linear_in_x": (("a", "b"), lambda p, x, t: p[0] + p[1] * x),
    "ornstein_uhlenbeck": (("theta", "mean"), lambda p, x, t: -p[0] * (x - p[1])),
}

# noise registry: kind -> (parameter names, g(params, x, t))
NOISE_KINDS = {
    "constant": (("sigma",), lambda p, x, t: np.full_like(x, p[0])),
    "linear_in_x": (("a", "b"), lambda p, x, t: p[0] + p[1] * x),
}

X0_KINDS = ("point", "normal")

_CHUNK = 8192


@dataclass(frozen=True)
class SdeSpec:
    """Drift/noise selection with positional parameters, Ito reading."""

    drift_kind: str
    drift_params: tuple[float, ...]
    noise_kind: str
    noise_params: tuple[float, ...]

    def __post_init__(self) -> None:
        for kind, params, registry, label in (
            (self.drift_kind, self.drift_params, DRIFT_KINDS, "drift"),
            (self.noise_kind, self.noise_params, NOISE_KINDS, "noise"),
        ):
            if kind not in registry:
                raise InfeasibleConfigError(
                    f"unknown {label} kind {kind!r}; known: {sorted(registry)}"
                )
            names = registry[kind][0]
            vals = tuple(float(v) for v in params)
            if len(vals) != len(names):
                raise InfeasibleConfigError(
                    f"{label} kind {kind!r} takes {len(names)} parameters {names}, "
                    f"got {len(vals)}"
                )
            if not all(np.isfinite(v) for v in vals):
                raise InfeasibleConfigError(f"{label} parameters must be finite")
            object.__setattr__(self, f"{label}_params", vals)

    def drift(self, x: np.ndarray, t: float) -> np.ndarray:
        return DRIFT_KINDS[self.drift_kind][1](self.drift_params, x, t)

    def noise(self, x: np.ndarray, t: float) -> np.ndarray:
        return NOISE_KINDS[self.noise_kind][1](self.noise_params, x, t)


@dataclass(frozen=True)
class SimPlan:
    """How much to simulate and what to keep.

    horizon must be an integer multiple of dt, and the step count a
    multiple of stride, so the final time is always recorded.
    x0_params is (value,) for "point" and (mu, sigma) for "normal".
    """

    n_trajectories: int
    dt: float
    horizon: float
    stride: int = 1
    x0_kind: str = "point"
    x0_params: tuple[float, ...] = (0.0,)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trajectories < 1:
            raise InfeasibleConfigError("n_trajectories must be >= 1")
        if not self.dt > 0.0:
            raise InfeasibleConfigError("dt must be > 0")
        if self.stride < 1 or int(self.stride) != self.stride:
            raise InfeasibleConfigError("stride must be an integer >= 1")
        steps = self.horizon / self.dt
        n_steps = int(round(steps))
        if n_steps < 1 or abs(steps - n_steps) > 1e-9 * max(1.0, steps):
            raise InfeasibleConfigError(
                f"horizon {self.horizon} is not an integer multiple of dt {self.dt}"
            )
        if n_steps % self.stride != 0:
            raise InfeasibleConfigError(
                f"step count {n_steps} not divisible by stride {self.stride}; "
                "the final time would go unrecorded"
            )
        if self.x0_kind not in X0_KINDS:
            raise InfeasibleConfigError(f"unknown x0 kind {self.x0_kind!r}")
        want = 1 if self.x0_kind == "point" else 2
        params = tuple(float(v) for v in self.x0_params)
        if len(params) != want or not all(np.isfinite(v) for v in params):
            raise InfeasibleConfigError(
                f"x0 kind {self.x0_kind!r} takes {want} finite parameter(s)"
            )
        object.__setattr__(self, "x0_params", params)
        object.__setattr__(self, "n_trajectories", int(self.n_trajectories))
        object.__setattr__(self, "stride", int(self.stride))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


def simulate(spec: SdeSpec, plan: SimPlan) -> TrajectoryEnsemble:
    """Euler-Maruyama march x += h dt + g sqrt(dt) xi, recorded at the
    stride lattice. Identical (spec, plan) inputs give bit-identical
    ensembles.

    Raises SolverDivergenceError on non-finite state and
    InfeasibleConfigError if the noise amplitude evaluates negative.
    """
    n_steps = plan.n_steps
    n_rec = n_steps // plan.stride + 1
    out = np.empty((plan.n_trajectories, n_rec))
    times = np.arange(0, n_steps + 1, plan.stride) * plan.dt
    sqrt_dt = np.sqrt(plan.dt)
    normal_x0 = plan.x0_kind == "normal"
    for lo in range(0, plan.n_trajectories, _CHUNK):
        hi = min(lo + _CHUNK, plan.n_trajectories)
        m = hi - lo
        # per-trajectory streams: first draw feeds x0 when x0 is random,
        # the rest are the step increments, so stride never shifts them
        noise = np.empty((m, n_steps))
        x = np.empty(m)
        for r in range(lo, hi):
            gen = Generator(Philox(key=[plan.seed, r]))
            if normal_x0:
                mu0, sigma0 = plan.x0_params
                x[r - lo] = mu0 + sigma0 * gen.standard_normal()
            else:
                x[r - lo] = plan.x0_params[0]
            noise[r - lo, :] = gen.standard_normal(n_steps)
        out[lo:hi, 0] = x
        col = 1
        for k in range(n_steps):
            t = k * plan.dt
            g = spec.noise(x, t)
            if np.any(g < 0.0):
                bad = int(np.argmax(g < 0.0))
                raise InfeasibleConfigError(
                    f"noise amplitude negative ({g[bad]}) at t={t}, x={x[bad]}"
                )
            x = x + spec.drift(x, t) * plan.dt + g * sqrt_dt * noise[:, k]
            if not np.all(np.isfinite(x)):
                bad = int(np.argmax(~np.isfinite(x)))
                raise SolverDivergenceError(
                    f"trajectory {lo + bad} non-finite at step {k + 1} "
                    f"(t={(k + 1) * plan.dt})"
                )
            if (k + 1) % plan.stride == 0:
                out[lo:hi, col] = x
                col += 1
    return TrajectoryEnsemble(times=times, samples=out, transform="identity")


def ensemble_to_densities(
    ens: TrajectoryEnsemble, grid: Grid, times, bandwidth="auto"
) -> list[DensityField]:
    """KDE density per requested time, each normalized on the grid.

    The requested times must already be on the ensemble time axis
    (1e-9 relative); no interpolation happens here.
    """
    axis = ens.times
    span = max(1.0, float(np.max(np.abs(axis))))
    fields = []
    for tau in times:
        hits = np.nonzero(np.abs(axis - tau) <= 1e-9 * span)[0]
        if hits.size == 0:
            raise InfeasibleConfigError(f"time {tau} not on the ensemble axis")
        k = int(hits[0])
        try:
            fields.append(
                kde_estimate(ens.samples[:, k], grid, bandwidth, time_stamp=float(axis[k]))
            )
        except ValueError as exc:
            raise ValueError(f"KDE failed at t={axis[k]}: {exc}") from exc
    return fields


def write_ensemble_csv(ens: TrajectoryEnsemble, path) -> None:
    """Long format `traj_id,t,x`, trajectory-major, shortest round-trip
    decimals. The transform tag is not stored; files carry raw columns."""
    with open(path, "w", newline="") as fh:
        fh.write("traj_id,t,x\n")
        times = [float(t) for t in ens.times]
        for r in range(ens.n_realizations):
            row = ens.samples[r]
            for k in range(ens.n_times):
                fh.write(f"{r},{times[k]!r},{float(row[k])!r}\n")


def _read_ensemble_arrays(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse the long format into (times, samples) without building the
    ensemble, so callers may transform coordinates first.

    All trajectories must share one time axis; rows may arrive in any
    order. Errors name the file and line.
    """
    by_traj: dict[int, list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["traj_id", "t", "x"]:
            raise InputDataError(f"{path}: expected header 'traj_id,t,x'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise InputDataError(f"{path}:{lineno}: expected 3 fields")
            try:
                traj = int(row[0])
                t = float(row[1])
                x = float(row[2])
            except ValueError as exc:
                raise InputDataError(f"{path}:{lineno}: {exc}") from exc
            if not (np.isfinite(t) and np.isfinite(x)):
                raise InputDataError(f"{path}:{lineno}: non-finite value")
            by_traj.setdefault(traj, []).append((t, x))
    if not by_traj:
        raise InputDataError(f"{path}: no data rows")
    ids = sorted(by_traj)
    first = sorted(by_traj[ids[0]])
    axis = np.asarray([t for t, _ in first])
    samples = np.empty((len(ids), axis.size))
    for i, traj in enumerate(ids):
        rows = sorted(by_traj[traj])
        if len(rows) != axis.size or any(t != axis[j] for j, (t, _) in enumerate(rows)):
            raise InputDataError(
                f"{path}: trajectory {traj} does not share the common time axis"
            )
        samples[i, :] = [x for _, x in rows]
    return axis, samples


def read_ensemble_csv(path) -> TrajectoryEnsemble:
    """Parse the long format back into an ensemble (identity transform)."""
    times, samples = _read_ensemble_arrays(path)
    try:
        return TrajectoryEnsemble(times=times, samples=samples, transform="identity")
    except ValueError as exc:
        raise InputDataError(f"{path}: {exc}") from exc
