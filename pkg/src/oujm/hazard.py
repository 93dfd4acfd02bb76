"""Hazard submodel, per-subject quadrature grids and the trapezoidal survival likelihood.

The hazard is ``h(t) = h0(t) exp(beta . eta(t) + alpha . X)``; the cumulative hazard is
approximated by the trapezoidal sum over a grid running from 0 to the subject's
event/censoring time.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionError, DomainError, RangeError

BASELINES = ("constant", "weibull", "piecewise")
DEFAULT_SEGMENTS = 10
DEFAULT_GRID_WIDTH = 0.8
# Filler points closer than this fraction of the width to a kept time are dropped.
DROP_FRACTION = 0.3

MEASUREMENT, FILLER, TERMINAL = "measurement", "filler", "terminal"


@dataclass(frozen=True)
class HazardSpec:
    """Hazard parameters.

    ``baseline`` selects which of the baseline fields are used: ``beta0`` is the log
    hazard of the constant baseline; ``shape``/``scale`` parameterize the Weibull
    ``h0(t) = shape/scale (t/scale)^(shape-1)``; ``cutpoints`` (``c_0 = 0 < ... < c_B``),
    ``log_levels`` and ``rw_sd`` describe the piecewise-constant baseline.
    """

    baseline: str = "constant"
    beta: np.ndarray = field(default_factory=lambda: np.zeros(2))
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))
    beta0: float = 0.0
    shape: float = 1.0
    scale: float = 1.0
    cutpoints: Optional[np.ndarray] = None
    log_levels: Optional[np.ndarray] = None
    rw_sd: float = 1.0

    def __post_init__(self):
        if self.baseline not in BASELINES:
            raise DomainError(f"unknown baseline {self.baseline!r}; choose from {BASELINES}")
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        object.__setattr__(self, "alpha", np.atleast_1d(np.asarray(self.alpha, dtype=float)))
        if self.baseline == "weibull" and not (self.shape > 0 and self.scale > 0):
            raise DomainError("Weibull shape and scale must be positive")
        if self.baseline == "piecewise":
            cut = np.asarray(self.cutpoints, dtype=float)
            levels = np.asarray(self.log_levels, dtype=float)
            if cut.ndim != 1 or cut.size < 2 or cut[0] != 0 or np.any(np.diff(cut) <= 0):
                raise DomainError("cut-points must start at 0 and increase strictly")
            if levels.shape != (cut.size - 1,):
                raise DimensionError(f"need {cut.size - 1} log-levels, got {levels.shape}")
            object.__setattr__(self, "cutpoints", cut)
            object.__setattr__(self, "log_levels", levels)


@dataclass(frozen=True)
class TimeGrid:
    points: np.ndarray
    role: np.ndarray
    meas_index: np.ndarray

    @property
    def M(self):
        return self.points.size


def equal_cutpoints(max_time, n_segments=DEFAULT_SEGMENTS):
    if not max_time > 0 or n_segments < 1:
        raise DomainError("need max_time > 0 and at least one segment")
    cut = np.linspace(0.0, max_time, n_segments + 1)
    cut[-1] = max_time
    return cut


def segment_index(cutpoints, t):
    """Segment ``b`` (0-based) with ``c_b < t <= c_{b+1}``; ``t = 0`` maps to the first segment."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > cutpoints[-1]):
        raise RangeError(f"time outside the piecewise baseline range [0, {cutpoints[-1]}]")
    return np.searchsorted(cutpoints[1:-1], t, side="left")


def build_grid(meas_times, event_time, width=DEFAULT_GRID_WIDTH):
    """Union of measurement times, 0, the event time and equally spaced filler points.

    Filler candidates ``width, 2 width, ...`` below ``event_time`` are dropped when they lie
    within ``0.3 * width`` of a measurement time or of the event time.  ``width=None``
    adds no filler points.
    """
    meas = np.asarray(meas_times, dtype=float)
    event_time = float(event_time)
    if width is not None and not width > 0:
        raise DomainError(f"grid width must be positive, got {width}")
    if meas.size and (meas.min() < 0 or meas.max() > event_time):
        raise DomainError("measurement times must lie in [0, event_time]")
    anchors = np.union1d(meas, [event_time])
    filler = np.zeros(0)
    if width is not None:
        n = int(np.ceil(event_time / width)) + 1
        cand = np.round(width * np.arange(1, n), 12)
        cand = cand[cand < event_time]
        if cand.size:
            dist = np.min(np.abs(cand[:, None] - anchors[None, :]), axis=1)
            filler = cand[dist > DROP_FRACTION * width]
    points = np.union1d(np.union1d(anchors, filler), [0.0])
    role = np.full(points.size, FILLER, dtype=object)
    meas_index = np.searchsorted(points, meas)
    role[meas_index] = MEASUREMENT
    role[-1] = TERMINAL
    return TimeGrid(points=points, role=role, meas_index=meas_index)


def log_baseline(spec, t):
    t = np.asarray(t, dtype=float)
    if spec.baseline == "constant":
        return np.full(t.shape, spec.beta0)
    if spec.baseline == "weibull":
        with np.errstate(divide="ignore"):
            return np.log(spec.shape / spec.scale) + (spec.shape - 1.0) * np.log(t / spec.scale)
    return spec.log_levels[segment_index(spec.cutpoints, t)]


def _linear_predictor(spec, eta, covariates):
    eta = np.asarray(eta, dtype=float)
    if eta.shape[0] != spec.beta.size:
        raise DimensionError(f"eta must have {spec.beta.size} rows")
    cov = np.zeros(spec.alpha.size) if covariates is None else np.asarray(covariates, dtype=float).ravel()
    if cov.size != spec.alpha.size:
        raise DimensionError(f"expected {spec.alpha.size} covariates, got {cov.size}")
    return spec.beta @ eta + spec.alpha @ cov


def hazard_at(spec, t, eta_t, covariates=None):
    if not t >= 0:
        raise DomainError("t must be >= 0")
    return float(np.exp(log_baseline(spec, t) + _linear_predictor(spec, eta_t, covariates)))


def hazard_eval_times(spec, points):
    """Times at which the hazard is evaluated for each grid point.

    For the Weibull baseline the origin is replaced by the midpoint of the first interval,
    where the baseline is finite for every shape.
    """
    points = np.asarray(points, dtype=float)
    if spec.baseline == "weibull" and points.size > 1 and points[0] == 0.0:
        points = points.copy()
        points[0] = 0.5 * points[1]
    return points


def grid_log_hazard(spec, grid, eta_path, covariates=None):
    eta_path = np.asarray(eta_path, dtype=float)
    if eta_path.ndim != 2 or eta_path.shape[1] != grid.M:
        raise DimensionError(f"eta_path must have {grid.M} columns aligned with the grid")
    return log_baseline(spec, hazard_eval_times(spec, grid.points)) + _linear_predictor(spec, eta_path, covariates)


def trapezoid(h, points):
    return float(np.sum(0.5 * (h[1:] + h[:-1]) * np.diff(points)))


def cum_hazard(spec, grid, eta_path, covariates=None):
    """Trapezoidal cumulative hazard over ``grid``."""
    return trapezoid(np.exp(grid_log_hazard(spec, grid, eta_path, covariates)), grid.points)


def surv_loglik(spec, subject, grid, eta_path):
    if not np.isclose(grid.points[-1], subject.event_time, rtol=0, atol=1e-12):
        raise DomainError(f"grid for subject {subject.id} does not end at its event time")
    log_h = grid_log_hazard(spec, grid, eta_path, subject.covariates)
    return float(subject.event * log_h[-1] - trapezoid(np.exp(log_h), grid.points))
