"""Loss-minimization calibration of drift and diffusion coefficients.

The loss forward-solves the Fokker-Planck equation from the initial
density and sums weighted density distances at the target times.
Infeasible parameter vectors (negative diffusion on the horizon, a
diverged solve) score a large finite penalty instead of raising, so
derivative-free search stays total.

Search is seeded Nelder-Mead, optionally restarted from 8 uniform
draws inside the bounds. Everything is deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox
from scipy.optimize import minimize

from .coefficients import MAX_DEGREE, CoefficientModel
from .density import DensityField, kl_divergence
from .errors import InfeasibleConfigError
from .solver import SolverConfig, solve

__all__ = [
    "CalibrationProblem",
    "CalibrationResult",
    "loss",
    "calibrate",
]

OPTIMIZERS = ("nelder_mead", "random_multistart_nelder_mead")
DISTANCES = ("kl", "l2")

PENALTY_FLOOR = 1e6
N_STARTS = 8

# quadratic charge per unit of excursion outside the bounds box
_EXCURSION_WEIGHT = 1e3

_SIMPLEX_TOL = 1e-6


@dataclass(frozen=True)
class CalibrationProblem:
    """Initial density, weighted targets, and the search box.

    The parameter vector is the drift coefficients (degree low to
    high) followed by the diffusion coefficients; bounds holds one
    (lower, upper) pair per entry. solver.record_times must equal the
    target times.
    """

    initial_density: DensityField
    targets: tuple[tuple[float, DensityField], ...]
    drift_degree: int
    diff_degree: int
    bounds: tuple[tuple[float, float], ...]
    solver: SolverConfig
    weights: tuple[float, ...] | None = None
    distance: str = "kl"

    def __post_init__(self) -> None:
        if not (0 <= self.drift_degree <= MAX_DEGREE):
            raise InfeasibleConfigError(f"drift degree must be in 0..{MAX_DEGREE}")
        if not (0 <= self.diff_degree <= MAX_DEGREE):
            raise InfeasibleConfigError(f"diffusion degree must be in 0..{MAX_DEGREE}")
        if self.distance not in DISTANCES:
            raise InfeasibleConfigError(f"unknown distance {self.distance!r}")
        targets = tuple((float(tau), field) for tau, field in self.targets)
        if not targets:
            raise InfeasibleConfigError("at least one training target is required")
        tau0 = self.initial_density.time_stamp
        taus = [tau0] + [tau for tau, _ in targets]
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise InfeasibleConfigError(
                "target times must be strictly increasing and later than the "
                f"initial time {tau0}"
            )
        for tau, field in targets:
            if field.grid != self.initial_density.grid:
                raise InfeasibleConfigError(
                    f"target at t={tau} lives on a different grid"
                )
            if abs(field.mass - 1.0) > 1e-3:
                raise InfeasibleConfigError(
                    f"target at t={tau} not normalized: mass {field.mass!r}"
                )
        if abs(self.initial_density.mass - 1.0) > 1e-3:
            raise InfeasibleConfigError("initial density not normalized")
        bounds = tuple((float(a), float(b)) for a, b in self.bounds)
        if len(bounds) != self.n_params:
            raise InfeasibleConfigError(
                f"need {self.n_params} bound pairs, got {len(bounds)}"
            )
        for a, b in bounds:
            if not (np.isfinite(a) and np.isfinite(b)):
                raise InfeasibleConfigError("bounds must be finite")
            if not a < b:
                raise InfeasibleConfigError(
                    f"bound ({a}, {b}) has zero or negative measure"
                )
        if self.weights is None:
            weights = (1.0,) * len(targets)
        else:
            weights = tuple(float(w) for w in self.weights)
        if len(weights) != len(targets):
            raise InfeasibleConfigError("one weight per target required")
        if any(not np.isfinite(w) or w < 0.0 for w in weights):
            raise InfeasibleConfigError("weights must be finite and >= 0")
        if sum(weights) <= 0.0:
            raise InfeasibleConfigError("weights must not all vanish")
        rec = self.solver.record_times
        want = tuple(tau for tau, _ in targets)
        if len(rec) != len(want) or any(
            abs(a - b) > 1e-9 * max(1.0, abs(b)) for a, b in zip(rec, want)
        ):
            raise InfeasibleConfigError(
                f"solver record_times {rec} must equal the target times {want}"
            )
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "drift_degree", int(self.drift_degree))
        object.__setattr__(self, "diff_degree", int(self.diff_degree))

    @property
    def n_params(self) -> int:
        return self.drift_degree + 1 + self.diff_degree + 1

    def model_from_params(self, params) -> CoefficientModel:
        p = np.asarray(params, dtype=float)
        if p.shape != (self.n_params,):
            raise InfeasibleConfigError(
                f"parameter vector must have shape ({self.n_params},), got {p.shape}"
            )
        cut = self.drift_degree + 1
        return CoefficientModel(
            drift_poly=tuple(p[:cut]), diff_poly=tuple(p[cut:])
        )

    def horizon(self) -> tuple[float, float]:
        return self.initial_density.time_stamp, self.targets[-1][0]


def _l2(p: DensityField, q: DensityField) -> float:
    diff = p.values - q.values
    return float(np.sqrt(np.trapezoid(diff * diff, p.grid.nodes)))


def loss(problem: CalibrationProblem, params) -> float:
    """Weighted density distance of the forward solve to the targets.

    Negative diffusion anywhere on the horizon returns
    1e6 + |worst violation|; a diverged solve returns 1e6. The value
    is deterministic: repeated calls agree bit for bit.
    """
    model = problem.model_from_params(params)
    t0, t_end = problem.horizon()
    d2_min, _ = model.diffusion_range(t0, t_end)
    if d2_min < 0.0:
        return PENALTY_FLOOR + abs(d2_min)
    trace = solve(problem.initial_density, model, problem.solver)
    if trace.diverged:
        return PENALTY_FLOOR
    total = 0.0
    for w, (_, target), predicted in zip(
        problem.weights, problem.targets, trace.snapshots
    ):
        if w == 0.0:
            continue
        if problem.distance == "kl":
            total += w * kl_divergence(target, predicted)
        else:
            total += w * _l2(target, predicted)
    return total


@dataclass(frozen=True)
class CalibrationResult:
    """Best model found plus bookkeeping.

    history is the best-so-far loss after each evaluation, so it is
    non-increasing; final_loss re-evaluates the returned model and
    matches loss(problem, best params) bit for bit.
    """

    model: CoefficientModel
    final_loss: float
    history: tuple[float, ...]
    n_evaluations: int
    converged: bool


def calibrate(
    problem: CalibrationProblem,
    optimizer: str = "random_multistart_nelder_mead",
    budget: int = 500,
    seed: int = 0,
) -> CalibrationResult:
    """Minimize loss() over the bounds box with seeded Nelder-Mead.

    "nelder_mead" runs once from the box midpoint; the multistart
    variant adds 8 uniform starts drawn inside the box and splits the
    budget evenly. Search iterates on a clipped copy of the point with
    a quadratic charge for leaving the box, so returned coefficients
    always respect the bounds. Ties keep the earliest start.
    """
    if optimizer not in OPTIMIZERS:
        raise InfeasibleConfigError(f"unknown optimizer {optimizer!r}")
    if budget < 50:
        raise InfeasibleConfigError("budget must be >= 50 evaluations")
    lo = np.asarray([a for a, _ in problem.bounds])
    hi = np.asarray([b for _, b in problem.bounds])

    n_evals = 0
    history: list[float] = []

    def objective(p: np.ndarray) -> float:
        nonlocal n_evals
        pc = np.clip(p, lo, hi)
        value = loss(problem, pc) + _EXCURSION_WEIGHT * float(np.sum((p - pc) ** 2))
        n_evals += 1
        best = value if not history else min(history[-1], value)
        history.append(best)
        return value

    if optimizer == "nelder_mead":
        starts = [0.5 * (lo + hi)]
        per_start = budget
    else:
        gen = Generator(Philox(key=[seed, 0]))
        starts = [lo + gen.uniform(size=lo.size) * (hi - lo) for _ in range(N_STARTS)]
        per_start = budget // N_STARTS

    best_x = None
    best_val = np.inf
    converged = False
    for x0 in starts:
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options=dict(xatol=_SIMPLEX_TOL, fatol=1e-14, maxfev=per_start),
        )
        if res.fun < best_val:
            best_val = float(res.fun)
            best_x = np.clip(res.x, lo, hi)
            converged = bool(res.success)

    final_model = problem.model_from_params(best_x)
    final_loss = loss(problem, best_x)
    return CalibrationResult(
        model=final_model,
        final_loss=final_loss,
        history=tuple(history),
        n_evaluations=n_evals,
        converged=converged,
    )
