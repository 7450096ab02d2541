"""Probability densities on a grid.

Construction from samples (Gaussian-kernel KDE), trapezoidal moments,
KL divergence and L1 distance, Tikhonov smoothing, and the two-column
CSV interchange format.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InputDataError
from .grid import Grid, derivative_matrix

__all__ = [
    "DensityField",
    "MomentSet",
    "kde_estimate",
    "auto_bandwidth",
    "moments",
    "kl_divergence",
    "l1_distance",
    "tikhonov_smooth",
    "write_density_csv",
    "read_density_csv",
]

# floor added to the second argument of KL so log stays finite
KL_FLOOR = 1e-12

_KDE_CHUNK = 2048


@dataclass(frozen=True)
class DensityField:
    """PDF values at grid nodes, frozen at one model time.

    Values are finite, nonnegative, and read-only. Producers in this
    package always normalize to unit trapezoidal mass; ``mass`` lets
    consumers check.
    """

    grid: Grid
    values: np.ndarray
    time_stamp: float

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise ValueError(
                f"values shape {v.shape} does not match grid ({self.grid.n_points},)"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite")
        if np.any(v < 0):
            raise ValueError("density values must be >= 0")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "time_stamp", float(self.time_stamp))

    @property
    def mass(self) -> float:
        return float(np.trapezoid(self.values, self.grid.nodes))

    @classmethod
    def normalized(cls, grid: Grid, values: np.ndarray, time_stamp: float) -> "DensityField":
        """Clip negatives to zero, renormalize to unit mass, construct."""
        v = np.clip(np.asarray(values, dtype=float), 0.0, None)
        m = np.trapezoid(v, grid.nodes)
        if not np.isfinite(m) or m <= 0.0:
            raise ValueError("cannot normalize: nonpositive or non-finite mass")
        return cls(grid=grid, values=v / m, time_stamp=time_stamp)


@dataclass(frozen=True)
class MomentSet:
    """Mean, variance, and central moments of one density.

    central_moments[n] is the n-th central moment; entry 0 is the mass,
    entry 1 is zero by construction, entry 2 equals the variance.
    """

    mean: float
    variance: float
    central_moments: tuple[float, ...]

    def __post_init__(self) -> None:
        assert self.variance >= 0.0
        assert len(self.central_moments) >= 3


def auto_bandwidth(samples: np.ndarray) -> float:
    """Normal-reference bandwidth 1.06 * sigma_hat * m**(-1/5).

    sigma_hat is the robust spread min(sample std, IQR/1.349); the
    sample std uses the unbiased (ddof=1) estimator.
    """
    s = np.asarray(samples, dtype=float)
    sd = float(np.std(s, ddof=1))
    q75, q25 = np.percentile(s, [75.0, 25.0])
    spread = min(sd, (q75 - q25) / 1.349)
    if spread <= 0.0:
        raise ValueError(
            "zero sample spread: auto bandwidth undefined; pass an explicit "
            "bandwidth to build a delta-like density around the sample value"
        )
    return 1.06 * spread * s.size ** (-0.2)


def kde_estimate(
    samples,
    grid: Grid,
    bandwidth="auto",
    time_stamp: float = 0.0,
) -> DensityField:
    """Gaussian-kernel density estimate on the grid, unit mass.

    Parameters
    ----------
    samples : array_like
        Finite sample values. With ``bandwidth="auto"`` at least 10
        samples with nonzero spread are required (the bandwidth rule
        needs them); an explicit positive bandwidth lifts both limits.
    grid : Grid
        Evaluation grid. Should cover the samples out to 3 bandwidths;
        a warning is emitted otherwise.
    bandwidth : "auto" or positive float
    time_stamp : float
        Model time recorded on the result.
    """
    s = np.asarray(samples, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("no samples")
    if not np.all(np.isfinite(s)):
        raise ValueError("samples must be finite")
    if isinstance(bandwidth, str):
        if bandwidth != "auto":
            raise ValueError(f"unknown bandwidth spec {bandwidth!r}")
        if s.size < 10:
            raise ValueError("auto bandwidth needs >= 10 samples")
        bw = auto_bandwidth(s)
    else:
        bw = float(bandwidth)
        if not bw > 0.0:
            raise ValueError("bandwidth must be > 0")
    if grid.x_min > s.min() - 3.0 * bw or grid.x_max < s.max() + 3.0 * bw:
        warnings.warn(
            "grid does not cover samples +- 3 bandwidths; KDE mass will be truncated",
            stacklevel=2,
        )
    x = grid.nodes
    acc = np.zeros(grid.n_points)
    # chunk over samples to bound the (n_points, chunk) work array
    for lo in range(0, s.size, _KDE_CHUNK):
        block = s[lo : lo + _KDE_CHUNK]
        acc += np.exp(-0.5 * ((x[:, None] - block[None, :]) / bw) ** 2).sum(axis=1)
    return DensityField.normalized(grid, acc, time_stamp)


def moments(f: DensityField, max_order: int = 2) -> MomentSet:
    """Trapezoidal mean, variance, and central moments up to max_order.

    The input must be normalized: mass deviating from 1 by more than
    1e-3 is rejected.
    """
    if max_order < 2:
        max_order = 2
    m = f.mass
    if abs(m - 1.0) > 1e-3:
        raise ValueError(f"unnormalized density: mass {m!r}")
    x = f.grid.nodes
    mean = float(np.trapezoid(x * f.values, x))
    cm = [1.0, 0.0]
    d = x - mean
    for order in range(2, max_order + 1):
        cm.append(float(np.trapezoid(d**order * f.values, x)))
    variance = max(cm[2], 0.0)
    cm[2] = variance
    return MomentSet(mean=mean, variance=variance, central_moments=tuple(cm))


def _require_comparable(p: DensityField, q: DensityField) -> None:
    if p.grid != q.grid:
        raise ValueError("density grids differ")


def kl_divergence(p: DensityField, q: DensityField) -> float:
    """KL(p || q) by trapezoidal quadrature, with a 1e-12 floor on q.

    Nodes where p <= 1e-12 contribute zero. Both densities must be on
    the same grid and normalized (mass within 1e-3 of 1). The result is
    clamped at zero so quadrature noise cannot go negative.
    """
    _require_comparable(p, q)
    for f in (p, q):
        if abs(f.mass - 1.0) > 1e-3:
            raise ValueError(f"unnormalized density: mass {f.mass!r}")
    pv = p.values
    qv = q.values + KL_FLOOR
    ratio = np.ones_like(pv)
    np.divide(pv, qv, out=ratio, where=pv > KL_FLOOR)
    integrand = np.where(pv > KL_FLOOR, pv * np.log(ratio), 0.0)
    return max(float(np.trapezoid(integrand, p.grid.nodes)), 0.0)


def l1_distance(p: DensityField, q: DensityField) -> float:
    """Integral of |p - q| over the grid (trapezoidal)."""
    _require_comparable(p, q)
    return float(np.trapezoid(np.abs(p.values - q.values), p.grid.nodes))


def tikhonov_smooth(f: DensityField, lam: float = 1e-6, deriv_degree: int = 2) -> DensityField:
    """Roughness-penalized smoothing: solve (I + lam * E^T E) fhat = f.

    E is the derivative matrix of the given degree (order 2). The system
    is symmetric positive definite for lam > 0, solved by Cholesky
    factorization; the result is clipped at zero and renormalized.
    """
    if not lam > 0.0:
        raise ValueError("lam must be > 0")
    E = derivative_matrix(f.grid, deriv_degree, 2).values
    A = np.eye(f.grid.n_points) + lam * (E.T @ E)
    try:
        c, low = scipy.linalg.cho_factor(A)
    except scipy.linalg.LinAlgError as exc:  # defensive: SPD by construction
        raise ValueError(f"smoothing system not positive definite: {exc}") from exc
    fhat = scipy.linalg.cho_solve((c, low), f.values)
    return DensityField.normalized(f.grid, fhat, f.time_stamp)


def write_density_csv(f: DensityField, path) -> None:
    """Write the `x,f` two-column format; floats as shortest round-trip."""
    with open(path, "w", newline="") as fh:
        fh.write("x,f\n")
        for xi, fi in zip(f.grid.nodes, f.values):
            fh.write(f"{float(xi)!r},{float(fi)!r}\n")


def read_density_csv(path, time_stamp: float = 0.0) -> DensityField:
    """Read the `x,f` format back; the x column must be uniform."""
    xs: list[float] = []
    fs: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["x", "f"]:
            raise InputDataError(f"{path}: expected header 'x,f'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise InputDataError(f"{path}:{lineno}: expected 2 fields")
            try:
                xv, fv = float(row[0]), float(row[1])
            except ValueError as exc:
                raise InputDataError(f"{path}:{lineno}: {exc}") from exc
            if not (np.isfinite(xv) and np.isfinite(fv)):
                raise InputDataError(f"{path}:{lineno}: non-finite value")
            xs.append(xv)
            fs.append(fv)
    if len(xs) < 8:
        raise InputDataError(f"{path}: fewer than 8 rows")
    x = np.asarray(xs)
    steps = np.diff(x)
    if np.any(steps <= 0) or np.max(np.abs(steps - steps.mean())) > 1e-9 * abs(steps.mean()):
        raise InputDataError(f"{path}: x column is not a uniform increasing grid")
    grid = Grid(x[0], x[-1], len(x))
    try:
        return DensityField(grid=grid, values=np.asarray(fs), time_stamp=time_stamp)
    except ValueError as exc:
        raise InputDataError(f"{path}: {exc}") from exc
