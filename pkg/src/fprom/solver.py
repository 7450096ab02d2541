"""Forward integration of the 1-D Fokker-Planck equation.

The semi-discrete form is df/dt = A(t) f with
A(t) = -D1(t) * E1 + D2(t) * E2, E1 and E2 the first- and
second-derivative matrices. Two integrators: classical explicit RK4
(with a hard diffusion stability check) and Crank-Nicolson with a
direct sparse solve.

After every step the state is clipped at zero and renormalized; the
pre-renormalization mass of each step is logged so mass conservation
stays observable. Non-finite state or collapsed mass sets the
divergence flag and returns the partial trace instead of raising.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coefficients import CoefficientModel
from .density import DensityField
from .errors import InfeasibleConfigError
from .grid import DerivativeMatrix, Grid, derivative_matrix

__all__ = ["SolverConfig", "SolutionTrace", "step_rhs", "solve", "suggest_dt"]

INTEGRATORS = ("explicit_rk4", "crank_nicolson")
BOUNDARIES = ("zero_flux", "zero_dirichlet")

# explicit diffusion stability: dt <= STABILITY_SAFETY * h^2 / max|D2|
STABILITY_SAFETY = 0.4

# mass below this cannot be renormalized; the solve is declared diverged
MASS_COLLAPSE = 1e-12

_RECORD_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    integrator: str
    dt: float
    record_times: tuple[float, ...]
    boundary: str = "zero_flux"
    accuracy_order: int = 2
    allow_negative_diffusion: bool = False

    def __post_init__(self) -> None:
        if self.integrator not in INTEGRATORS:
            raise InfeasibleConfigError(f"unknown integrator {self.integrator!r}")
        if self.boundary not in BOUNDARIES:
            raise InfeasibleConfigError(f"unknown boundary {self.boundary!r}")
        if not self.dt > 0.0:
            raise InfeasibleConfigError("dt must be > 0")
        rt = tuple(float(t) for t in self.record_times)
        if len(rt) == 0:
            raise InfeasibleConfigError("record_times must be nonempty")
        if any(b <= a for a, b in zip(rt, rt[1:])):
            raise InfeasibleConfigError("record_times must be strictly increasing")
        if self.accuracy_order < 2 or self.accuracy_order % 2 != 0:
            raise InfeasibleConfigError("accuracy_order must be even and >= 2")
        object.__setattr__(self, "record_times", rt)


@dataclass(frozen=True)
class SolutionTrace:
    snapshots: tuple[DensityField, ...]
    mass_log: np.ndarray
    diverged: bool = False
    diagnostic: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "mass_log", np.asarray(self.mass_log, dtype=float))


def step_rhs(
    f: DensityField,
    model: CoefficientModel,
    t: float,
    e1: DerivativeMatrix,
    e2: DerivativeMatrix,
) -> np.ndarray:
    """Right-hand side -E1 (D1 f) + E2 (D2 f) at time t, nodewise.

    With time-only coefficients this equals -D1*(E1 f) + D2*(E2 f);
    the matrix form is applied literally.
    """
    if f.grid != e1.grid or f.grid != e2.grid:
        raise ValueError("density and derivative matrices live on different grids")
    d1, d2 = model.eval(t)
    return -e1.values @ (d1 * f.values) + e2.values @ (d2 * f.values)


def _boundary_closed_operators(
    grid: Grid, accuracy_order: int, boundary: str
) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Sparse E1, E2 with boundary rows replaced per the condition.

    zero_flux uses an even-reflection ghost closure: the wall rows of E1
    vanish and the wall rows of E2 become (-2, +2)/h^2, zeroing the
    diffusive flux. zero_dirichlet zeroes both wall rows so edge values
    stay frozen. Interior rows are untouched.
    """
    e1 = derivative_matrix(grid, 1, accuracy_order).values.copy()
    e2 = derivative_matrix(grid, 2, accuracy_order).values.copy()
    h = grid.spacing
    e1[0, :] = 0.0
    e1[-1, :] = 0.0
    e2[0, :] = 0.0
    e2[-1, :] = 0.0
    if boundary == "zero_flux":
        e2[0, 0] = -2.0 / h**2
        e2[0, 1] = 2.0 / h**2
        e2[-1, -1] = -2.0 / h**2
        e2[-1, -2] = 2.0 / h**2
    return sp.csr_matrix(e1), sp.csr_matrix(e2)


def _record_steps(t0: float, record_times: tuple[float, ...], dt: float) -> list[int]:
    steps = []
    for tau in record_times:
        off = tau - t0
        if off < -_RECORD_TOL:
            raise InfeasibleConfigError(f"record time {tau} precedes initial time {t0}")
        k = int(round(off / dt))
        if abs(k * dt - off) > _RECORD_TOL * max(1.0, abs(off)):
            raise InfeasibleConfigError(
                f"record time {tau} is not an integer multiple of dt={dt} "
                f"past t0={t0}; time interpolation is not performed"
            )
        steps.append(k)
    return steps


def suggest_dt(
    grid: Grid, model: CoefficientModel, t_start: float, t_end: float
) -> float:
    """A dt honoring the explicit diffusion bound and an advection cap.

    Convenience for callers assembling configs; solve() itself only
    enforces the diffusion bound (and only for explicit_rk4).
    """
    h = grid.spacing
    lo, hi = model.diffusion_range(t_start, t_end)
    caps = []
    dmax = max(abs(lo), abs(hi))
    if dmax > 0.0:
        caps.append(STABILITY_SAFETY * h * h / dmax)
    amax = model.max_abs_drift(t_start, t_end)
    if amax > 0.0:
        caps.append(0.5 * h / amax)
    if not caps:
        return t_end - t_start
    return min(caps)


def solve(f0: DensityField, model: CoefficientModel, config: SolverConfig) -> SolutionTrace:
    """March f0 forward, recording snapshots at config.record_times.

    Record times must lie on the step lattice t0 + k*dt (validated);
    each recorded snapshot is the clipped, renormalized state. For
    explicit_rk4 the diffusion stability bound is checked up front and
    violations are errors, not warnings.
    """
    grid = f0.grid
    t0 = f0.time_stamp
    if abs(f0.mass - 1.0) > 1e-3:
        raise InfeasibleConfigError(f"initial density not normalized: mass {f0.mass!r}")
    t_end = config.record_times[-1]
    rec_steps = _record_steps(t0, config.record_times, config.dt)

    d2_min, d2_max = model.diffusion_range(t0, max(t_end, t0))
    if d2_min < 0.0 and not config.allow_negative_diffusion:
        raise InfeasibleConfigError(
            f"diffusion reaches {d2_min} on the solve horizon; negative diffusion "
            "is ill-posed and refused unless allow_negative_diffusion is set"
        )
    if config.integrator == "explicit_rk4":
        dmax = max(abs(d2_min), abs(d2_max))
        if dmax > 0.0:
            dt_bound = STABILITY_SAFETY * grid.spacing**2 / dmax
            if config.dt > dt_bound:
                raise InfeasibleConfigError(
                    f"explicit_rk4 unstable: dt={config.dt} exceeds "
                    f"{STABILITY_SAFETY}*h^2/max|D2| = {dt_bound:.6e}"
                )

    s1, s2 = _boundary_closed_operators(grid, config.accuracy_order, config.boundary)
    x = grid.nodes
    dt = config.dt

    f = np.asarray(f0.values, dtype=float).copy()
    if config.boundary == "zero_dirichlet":
        f[0] = 0.0
        f[-1] = 0.0
        f = f / np.trapezoid(f, x)

    def apply_a(t: float, g: np.ndarray) -> np.ndarray:
        d1, d2 = model.eval(t)
        return -d1 * (s1 @ g) + d2 * (s2 @ g)

    cn_cached = None
    identity = sp.identity(grid.n_points, format="csr")
    if config.integrator == "crank_nicolson" and model.is_constant():
        a_mat = -model.drift(0.0) * s1 + model.diffusion(0.0) * s2
        cn_cached = (
            spla.splu((identity - 0.5 * dt * a_mat).tocsc()),
            (identity + 0.5 * dt * a_mat).tocsr(),
        )

    snapshots: list[DensityField] = []
    mass_log: list[float] = []
    record_lookup = {}
    for k, tau in zip(rec_steps, config.record_times):
        record_lookup.setdefault(k, []).append(tau)

    def record(step: int, state: np.ndarray) -> None:
        for tau in record_lookup.get(step, ()):
            snapshots.append(DensityField(grid=grid, values=state.copy(), time_stamp=tau))

    record(0, f)
    n_total = max(rec_steps)
    for k in range(1, n_total + 1):
        t = t0 + (k - 1) * dt
        if config.integrator == "explicit_rk4":
            k1 = apply_a(t, f)
            k2 = apply_a(t + 0.5 * dt, f + 0.5 * dt * k1)
            k3 = apply_a(t + 0.5 * dt, f + 0.5 * dt * k2)
            k4 = apply_a(t + dt, f + dt * k3)
            f_new = f + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            if cn_cached is not None:
                lu, m_plus = cn_cached
            else:
                d1n, d2n = model.eval(t + dt)
                d1c, d2c = model.eval(t)
                a_next = -d1n * s1 + d2n * s2
                a_curr = -d1c * s1 + d2c * s2
                lu = spla.splu((identity - 0.5 * dt * a_next).tocsc())
                m_plus = (identity + 0.5 * dt * a_curr).tocsr()
            f_new = lu.solve(m_plus @ f)

        if not np.all(np.isfinite(f_new)):
            return SolutionTrace(
                snapshots=tuple(snapshots),
                mass_log=np.asarray(mass_log),
                diverged=True,
                diagnostic=f"non-finite state at step {k} (t={t0 + k * dt})",
            )
        f_new = np.clip(f_new, 0.0, None)
        mass = float(np.trapezoid(f_new, x))
        mass_log.append(mass)
        if mass <= MASS_COLLAPSE:
            return SolutionTrace(
                snapshots=tuple(snapshots),
                mass_log=np.asarray(mass_log),
                diverged=True,
                diagnostic=f"density mass collapsed at step {k} (t={t0 + k * dt})",
            )
        f = f_new / mass
        record(k, f)

    return SolutionTrace(snapshots=tuple(snapshots), mass_log=np.asarray(mass_log))
