"""Coefficient estimation from ensemble time-series.

Two routes to the same coefficients:

* conditional estimates, binned in x per time level, from the scaled
  increment moments mean([x(t+dt) - x(t)]^n) / (n! dt);
* moment regression, fitting polynomials to the ensemble mean and
  variance and differentiating (drift = d mean/dt, diffusion = half
  d variance/dt), valid when the coefficients depend on time only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientModel
from .errors import InfeasibleConfigError

__all__ = [
    "TrajectoryEnsemble",
    "MomentSeries",
    "KmTable",
    "conditional_km_coefficient",
    "moment_series",
    "regress_time_only_coefficients",
]

TRANSFORM_TAGS = ("identity", "log_x", "log_x_log_t")

MIN_REALIZATIONS_KM = 30
MIN_CELL_COUNT = 20


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Realizations of a scalar process on a shared uniform time axis.

    samples[r, k] is realization r at times[k]. The transform tag
    records which variable transform has already been applied to the
    stored samples (and, for log_x_log_t, to the time axis).
    """

    times: np.ndarray
    samples: np.ndarray
    transform: str = "identity"

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.samples, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("need a 1-D time axis with >= 2 levels")
        if x.ndim != 2 or x.shape[1] != t.size:
            raise ValueError(f"samples shape {x.shape} does not match {t.size} times")
        if x.shape[0] < 1:
            raise ValueError("need >= 1 realization")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x))):
            raise ValueError("times and samples must be finite")
        steps = np.diff(t)
        mean_step = float(steps.mean())
        if mean_step <= 0.0 or np.any(steps <= 0.0):
            raise ValueError("time axis must be strictly increasing")
        if np.max(np.abs(steps - mean_step)) > 1e-9 * mean_step:
            raise ValueError("time axis must be uniform to 1e-9 relative")
        if self.transform not in TRANSFORM_TAGS:
            raise ValueError(f"unknown transform tag {self.transform!r}")
        t.flags.writeable = False
        x.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "samples", x)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def n_realizations(self) -> int:
        return int(self.samples.shape[0])

    @property
    def n_times(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True)
class MomentSeries:
    """Cross-realization mean and unbiased variance per time level."""

    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        m = np.asarray(self.mean, dtype=float)
        v = np.asarray(self.variance, dtype=float)
        if not (t.shape == m.shape == v.shape) or t.ndim != 1:
            raise ValueError("times, mean, variance must be 1-D and congruent")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
            raise ValueError("moment series must be finite")
        if np.any(v < 0.0):
            raise ValueError("variance must be >= 0")
        for arr, name in ((t, "times"), (m, "mean"), (v, "variance")):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class KmTable:
    """Binned conditional coefficient estimates D(n)(x, t).

    Rows index the K-1 increment times, columns the x bins at that
    time. Cells with fewer than the minimum sample count hold NaN in
    ``estimates`` and are excluded from every aggregate.
    """

    order: int
    times: np.ndarray
    centers: np.ndarray
    estimates: np.ndarray
    counts: np.ndarray

    @property
    def populated(self) -> np.ndarray:
        return ~np.isnan(self.estimates)

    def pooled_estimate(self) -> float:
        """Count-weighted average over every populated cell."""
        mask = self.populated
        if not mask.any():
            raise ValueError("no populated cells")
        w = self.counts[mask].astype(float)
        return float(np.sum(self.estimates[mask] * w) / np.sum(w))

    def pooled_by_time(self) -> np.ndarray:
        """Count-weighted average over populated cells, per time level.

        Times with no populated cell yield NaN.
        """
        out = np.full(self.times.shape, np.nan)
        for i in range(self.times.size):
            mask = self.populated[i]
            if mask.any():
                w = self.counts[i, mask].astype(float)
                out[i] = np.sum(self.estimates[i, mask] * w) / np.sum(w)
        return out


def conditional_km_coefficient(
    ens: TrajectoryEnsemble, order: int, n_bins: int, min_count: int = MIN_CELL_COUNT
) -> KmTable:
    """Binned conditional estimates of the order-n coefficient.

    At each time level the sample range is cut into n_bins equal-width
    bins; within each bin the estimate is the conditional increment
    moment mean([x(t+dt)-x(t)]^n) / (n! dt). A degenerate range (all
    samples equal) collapses to a single bin. Cells under min_count
    samples are marked empty (NaN).
    """
    if order not in (1, 2, 3, 4):
        raise ValueError("order must be in {1, 2, 3, 4}")
    if n_bins < 4:
        raise ValueError("n_bins must be >= 4")
    if ens.n_realizations < MIN_REALIZATIONS_KM:
        raise ValueError(
            f"too few realizations for conditional estimation: "
            f"{ens.n_realizations} < {MIN_REALIZATIONS_KM}"
        )
    dt = ens.dt
    scale = 1.0 / (math.factorial(order) * dt)
    n_t = ens.n_times - 1
    centers = np.full((n_t, n_bins), np.nan)
    estimates = np.full((n_t, n_bins), np.nan)
    counts = np.zeros((n_t, n_bins), dtype=np.int64)
    for k in range(n_t):
        xk = ens.samples[:, k]
        inc = ens.samples[:, k + 1] - xk
        lo, hi = float(xk.min()), float(xk.max())
        if hi == lo:
            # degenerate range: one bin holding everything
            centers[k, 0] = lo
            counts[k, 0] = xk.size
            if xk.size >= min_count:
                estimates[k, 0] = np.mean(inc**order) * scale
            continue
        edges = np.linspace(lo, hi, n_bins + 1)
        centers[k, :] = 0.5 * (edges[:-1] + edges[1:])
        idx = np.minimum(((xk - lo) / (hi - lo) * n_bins).astype(np.int64), n_bins - 1)
        for b in range(n_bins):
            sel = idx == b
            cnt = int(sel.sum())
            counts[k, b] = cnt
            if cnt >= min_count:
                estimates[k, b] = np.mean(inc[sel] ** order) * scale
    return KmTable(
        order=order,
        times=ens.times[:-1].copy(),
        centers=centers,
        estimates=estimates,
        counts=counts,
    )


def moment_series(ens: TrajectoryEnsemble) -> MomentSeries:
    """Per-time cross-realization mean and unbiased (ddof=1) variance."""
    if ens.n_realizations < 2:
        raise ValueError("unbiased variance needs >= 2 realizations")
    return MomentSeries(
        times=ens.times.copy(),
        mean=ens.samples.mean(axis=0),
        variance=ens.samples.var(axis=0, ddof=1),
    )


def _fit_polynomial_derivative(
    times: np.ndarray, values: np.ndarray, fit_degree: int
) -> np.ndarray:
    """Least-squares polynomial fit, returned as its derivative's
    ascending-power coefficients in raw t.

    The fit runs in a scaled basis for conditioning; the conditioning
    check (> 1e12 rejected) applies to the design matrix actually
    solved.
    """
    lo, hi = float(times.min()), float(times.max())
    scaled = (2.0 * times - (lo + hi)) / (hi - lo)
    design = np.polynomial.polynomial.polyvander(scaled, fit_degree)
    cond = np.linalg.cond(design)
    if cond > 1e12:
        raise InfeasibleConfigError(
            f"ill-conditioned moment fit (condition number {cond:.3e})"
        )
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    poly = np.polynomial.Polynomial(coef, domain=[lo, hi], window=[-1.0, 1.0])
    deriv = poly.deriv().convert(kind=np.polynomial.Polynomial)
    out = np.zeros(fit_degree)
    out[: deriv.coef.size] = deriv.coef
    return out


def regress_time_only_coefficients(
    series: MomentSeries,
    fit_window: tuple[float, float],
    drift_degree: int = 0,
    diff_degree: int = 0,
) -> CoefficientModel:
    """Fit mean(t) and variance(t), differentiate, build the model.

    The drift polynomial of degree d comes from a degree d+1 fit of the
    mean; the diffusion polynomial is half the derivative of the
    variance fit. The window [lo, hi] is inclusive (1e-9 relative
    tolerance) and must hold at least degree+2 points for each fit.
    """
    lo, hi = float(fit_window[0]), float(fit_window[1])
    if not lo < hi:
        raise InfeasibleConfigError(f"empty fit window ({lo}, {hi})")
    span = max(abs(lo), abs(hi), 1.0)
    sel = (series.times >= lo - 1e-9 * span) & (series.times <= hi + 1e-9 * span)
    times = series.times[sel]
    for degree, label in ((drift_degree, "drift"), (diff_degree, "diffusion")):
        if degree < 0 or degree > 3:
            raise InfeasibleConfigError(f"{label} degree must be in 0..3")
        if times.size < degree + 2:
            raise InfeasibleConfigError(
                f"fit window holds {times.size} points; {label} degree "
                f"{degree} needs >= {degree + 2}"
            )
    drift = _fit_polynomial_derivative(times, series.mean[sel], drift_degree + 1)
    dvar = _fit_polynomial_derivative(times, series.variance[sel], diff_degree + 1)
    return CoefficientModel(drift_poly=tuple(drift), diff_poly=tuple(0.5 * dvar))
