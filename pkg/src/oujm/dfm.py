"""Dynamic factor measurement model with the subject random intercept integrated out.

Given the latent path, outcome ``k`` of a subject is Gaussian over its observed
occasions with covariance ``sigma_eps_k^2 I + sigma_u_k^2 J`` (compound symmetry), and
outcomes are independent of each other because both variance matrices are diagonal.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, EmptyLikelihoodError, OrderingError, StructuralError

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class LoadingModel:
    mask: np.ndarray
    lam: np.ndarray
    sigma_u: np.ndarray
    sigma_eps: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=int)
        if mask.ndim != 2 or np.any((mask != 0) & (mask != 1)):
            raise StructuralError("mask must be a binary K x p matrix")
        if np.any(mask.sum(axis=1) != 1):
            raise StructuralError("each outcome must load on exactly one factor")
        lam = np.asarray(self.lam, dtype=float)
        if lam.shape != (int(mask.sum()),):
            raise DimensionError(f"expected {int(mask.sum())} free loadings, got {lam.shape}")
        k = mask.shape[0]
        sigma_u = np.asarray(self.sigma_u, dtype=float)
        sigma_eps = np.asarray(self.sigma_eps, dtype=float)
        if sigma_u.shape != (k,) or sigma_eps.shape != (k,):
            raise DimensionError("sigma_u and sigma_eps need one entry per outcome")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "sigma_u", sigma_u)
        object.__setattr__(self, "sigma_eps", sigma_eps)

    @property
    def K(self):
        return self.mask.shape[0]

    @property
    def p(self):
        return self.mask.shape[1]

    @property
    def factor_of_item(self):
        return np.argmax(self.mask, axis=1)

    @property
    def matrix(self):
        out = np.zeros(self.mask.shape)
        out[np.arange(self.K), self.factor_of_item] = self.lam
        return out


@dataclass
class SubjectRecord:
    """One subject: measurement times (days), K x n outcomes (NaN = missing), event data."""

    id: str
    meas_times: np.ndarray
    y: np.ndarray
    event_time: float
    event: int
    covariates: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.meas_times = np.asarray(self.meas_times, dtype=float)
        self.y = np.atleast_2d(np.asarray(self.y, dtype=float))
        self.covariates = np.asarray(self.covariates, dtype=float).ravel()
        self.event_time = float(self.event_time)
        self.event = int(self.event)
        if self.y.shape[1] != self.meas_times.shape[0]:
            raise DimensionError(f"subject {self.id}: y has {self.y.shape[1]} columns for {self.meas_times.size} times")
        if not self.event_time > 0:
            raise DomainError(f"subject {self.id}: event time must be positive")
        if self.event not in (0, 1):
            raise DomainError(f"subject {self.id}: event indicator must be 0 or 1")
        if np.any(np.diff(self.meas_times) <= 0):
            raise OrderingError(f"subject {self.id}: measurement times must be strictly increasing")
        if self.meas_times.size and (self.meas_times[0] < 0 or self.meas_times[-1] > self.event_time):
            raise DomainError(f"subject {self.id}: measurement times must lie in [0, event_time]")
        if not np.any(np.isfinite(self.y)):
            raise EmptyLikelihoodError(f"subject {self.id}: no observed outcome values")


def missing_mask_apply(subject):
    """Per outcome, the sorted occasion indices with an observed value."""
    return [np.flatnonzero(np.isfinite(row)) for row in subject.y]


def predict_mean(model, eta):
    eta = np.asarray(eta, dtype=float)
    if eta.shape[0] != model.p:
        raise DimensionError(f"eta must have {model.p} rows")
    return model.matrix @ eta


def compound_symmetry_loglik(n, s1, s2, var_u, var_eps, xp=np):
    """Log-density of residuals with sum ``s1`` and sum of squares ``s2`` over ``n`` occasions.

    Covariance is ``var_eps I + var_u J``; inverse and determinant are closed-form.
    Vectorized over groups; groups with ``n == 0`` contribute zero.
    """
    tot = var_eps + n * var_u
    quad = (s2 - var_u / tot * s1**2) / var_eps
    logdet = (n - 1) * xp.log(var_eps) + xp.log(tot)
    return xp.where(n > 0, -0.5 * (n * _LOG_2PI + logdet + quad), 0.0)


def marginal_loglik(model, subject, eta_at_meas):
    """Exact log-density of a subject's observed outcomes given the latent path at its occasions."""
    eta = np.asarray(eta_at_meas, dtype=float)
    if subject.y.shape[0] != model.K:
        raise DimensionError(f"subject {subject.id} has {subject.y.shape[0]} outcomes, model has {model.K}")
    if eta.shape != (model.p, subject.meas_times.size):
        raise DimensionError(f"eta must be {model.p} x {subject.meas_times.size}")
    if np.any(model.sigma_u < 0) or np.any(model.sigma_eps <= 0):
        raise DomainError("variance components must be positive")
    observed = missing_mask_apply(subject)
    if not any(idx.size for idx in observed):
        raise EmptyLikelihoodError(f"subject {subject.id}: all outcome values missing")
    mean = model.matrix @ eta
    n = np.array([idx.size for idx in observed], dtype=float)
    s1 = np.zeros(model.K)
    s2 = np.zeros(model.K)
    for k, idx in enumerate(observed):
        r = subject.y[k, idx] - mean[k, idx]
        s1[k] = r.sum()
        s2[k] = r @ r
    ll = compound_symmetry_loglik(n, s1, s2, model.sigma_u**2, model.sigma_eps**2)
    return float(np.sum(ll))
