"""Multivariate Ornstein-Uhlenbeck latent process.

The process ``d eta = -theta eta dt + sigma dW`` is stationary with mean zero and
covariance ``V`` solving ``theta V + V theta^T = sigma sigma^T``.  For identifiability the
model works on the correlation scale (unit-diagonal ``V``), so parameters are carried
either as ``(theta, sigma)`` or as ``(theta, rho)`` with ``rho`` the off-diagonals of ``V``.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import smallmat
from .errors import (
    ConstraintError,
    DecompositionError,
    DimensionError,
    DomainError,
    OrderingError,
    UnsupportedDimensionError,
)

# Diagonal regularization of conditional covariances before factoring.
JITTER = 1e-12
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class OUParams:
    """OU parameters in volatility (``sigma``) or correlation (``rho``) mode.

    ``marginal_sd`` is only used in correlation mode to carry the stationary standard
    deviations of a process that was converted from a non-unit-scale ``sigma``; it is
    ``None`` (unit scale) for the model's identified parameterization.
    """

    theta: np.ndarray
    sigma: Optional[np.ndarray] = None
    rho: Optional[np.ndarray] = None
    marginal_sd: Optional[np.ndarray] = None

    def __post_init__(self):
        theta = smallmat._as_square(self.theta, "theta")
        object.__setattr__(self, "theta", theta)
        if (self.sigma is None) == (self.rho is None):
            raise DomainError("exactly one of sigma or rho must be given")
        p = theta.shape[0]
        if self.sigma is not None:
            sigma = smallmat._as_square(self.sigma, "sigma")
            if sigma.shape != theta.shape:
                raise DimensionError("sigma and theta shapes differ")
            object.__setattr__(self, "sigma", sigma)
        else:
            rho = np.atleast_1d(np.asarray(self.rho, dtype=float))
            if rho.shape != (p * (p - 1) // 2,):
                raise DimensionError(f"rho must have {p * (p - 1) // 2} entries")
            if np.any(np.abs(rho) >= 1.0) or not np.all(np.isfinite(rho)):
                raise DomainError("rho entries must lie in (-1, 1)")
            object.__setattr__(self, "rho", rho)
            if self.marginal_sd is not None:
                object.__setattr__(self, "marginal_sd", np.asarray(self.marginal_sd, dtype=float))

    @property
    def p(self):
        return self.theta.shape[0]

    @property
    def stationary_cov(self):
        if self.sigma is not None:
            return smallmat.lyapunov_solve(self.theta, self.sigma @ self.sigma.T)
        v = corr_from_rho(self.rho, self.p)
        if self.marginal_sd is not None:
            v = v * np.outer(self.marginal_sd, self.marginal_sd)
        return v


@dataclass(frozen=True)
class OUConditional:
    mean_map: np.ndarray
    cond_cov: np.ndarray


def tril_pairs(p):
    """Index pairs (i, j), i > j, in the order used for ``rho``."""
    return [(i, j) for i in range(p) for j in range(i)]


def corr_from_rho(rho, p, xp=np):
    """Unit-diagonal correlation matrix with ``rho`` filling the off-diagonals."""
    pairs = tril_pairs(p)
    rows = []
    for i in range(p):
        row = []
        for j in range(p):
            if i == j:
                row.append(xp.ones_like(rho[..., 0]) if pairs else xp.ones(rho.shape[:-1]))
            else:
                row.append(rho[..., pairs.index((max(i, j), min(i, j)))])
        rows.append(xp.stack(row, axis=-1))
    return xp.stack(rows, axis=-2)


def constraints_ok(theta):
    """Mean-reversion check for a 2x2 ``theta``: trace and determinant both positive.

    Returns ``(v1, v2, ok)``.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (2, 2):
        raise UnsupportedDimensionError("mean-reversion constraints implemented for p = 2 only")
    if not np.all(np.isfinite(theta)):
        raise DomainError("theta has non-finite entries")
    v1 = theta[0, 0] + theta[1, 1]
    v2 = theta[0, 0] * theta[1, 1] - theta[0, 1] * theta[1, 0]
    return float(v1), float(v2), bool(v1 > 0 and v2 > 0)


def _require_constraints(theta):
    v1, v2, ok = constraints_ok(theta)
    if not ok:
        raise ConstraintError(f"theta is not mean-reverting (v1={v1:.4g}, v2={v2:.4g})")


def to_correlation_param(theta, sigma):
    """Convert ``(theta, sigma)`` to ``(theta, rho)``; the implied SDs are kept in ``marginal_sd``."""
    theta = np.asarray(theta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    _require_constraints(theta)
    if np.any(np.triu(sigma, 1) != 0) or np.any(np.diag(sigma) <= 0):
        raise DomainError("sigma must be lower triangular with a positive diagonal")
    v = smallmat.lyapunov_solve(theta, sigma @ sigma.T)
    sd = np.sqrt(np.diag(v))
    corr = v / np.outer(sd, sd)
    rho = np.array([corr[i, j] for i, j in tril_pairs(theta.shape[0])])
    return OUParams(theta=theta, rho=rho, marginal_sd=sd)


def to_volatility_param(theta, rho, marginal_sd=None):
    """Convert ``(theta, rho)`` to ``(theta, sigma)`` with ``sigma = chol(theta V + V theta^T)``."""
    theta = np.asarray(theta, dtype=float)
    _require_constraints(theta)
    params = OUParams(theta=theta, rho=rho, marginal_sd=marginal_sd)
    v = params.stationary_cov
    q = theta @ v + v @ theta.T
    q = 0.5 * (q + q.T)
    try:
        sigma = smallmat.chol_lower(q)
    except DecompositionError as exc:
        eig = np.linalg.eigvalsh(q)
        raise ConstraintError(
            f"theta V + V theta^T is not positive definite (eigenvalue {eig.min():.4g})"
        ) from exc
    return OUParams(theta=theta, sigma=sigma)


def conditional(params, dt):
    """Transition law of ``eta(t + dt) | eta(t)``."""
    if not dt >= 0:
        raise DomainError(f"dt must be >= 0, got {dt}")
    _require_constraints(params.theta)
    v = params.stationary_cov
    a = smallmat.mat_exp(params.theta, -dt)
    c = v - a @ v @ a.T
    return OUConditional(mean_map=a, cond_cov=0.5 * (c + c.T))


def marginal_cross_cov(params, dt):
    """``Cov(eta(s), eta(s + dt)) = V exp(-theta^T dt)``."""
    if not dt >= 0:
        raise DomainError(f"dt must be >= 0, got {dt}")
    _require_constraints(params.theta)
    return params.stationary_cov @ smallmat.mat_exp(params.theta.T, -dt)


def _check_times(times, m):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.shape[0] != m:
        raise DimensionError(f"expected {m} times, got shape {times.shape}")
    if np.any(np.diff(times) <= 0):
        raise OrderingError("times must be strictly increasing")
    return times


def _gauss_logpdf(x, cov):
    chol = smallmat.chol_lower(cov)
    w = np.linalg.solve(chol, x)
    return -0.5 * (x.size * _LOG_2PI + w @ w) - np.sum(np.log(np.diag(chol)))


def path_logpdf(params, times, path):
    """Log-density of a latent path observed at ``times`` (``path`` is p x M)."""
    path = np.asarray(path, dtype=float)
    if path.ndim != 2 or path.shape[0] != params.p:
        raise DimensionError(f"path must be {params.p} x M")
    times = _check_times(times, path.shape[1])
    out = _gauss_logpdf(path[:, 0], params.stationary_cov)
    for j in range(1, path.shape[1]):
        cond = conditional(params, times[j] - times[j - 1])
        out += _gauss_logpdf(path[:, j] - cond.mean_map @ path[:, j - 1], cond.cond_cov)
    return float(out)


def _factors(params, times):
    v = params.stationary_cov
    p = params.p
    factors = [(None, smallmat.chol_lower(v))]
    for j in range(1, len(times)):
        cond = conditional(params, times[j] - times[j - 1])
        try:
            lc = smallmat.chol_lower(cond.cond_cov + JITTER * np.eye(p))
        except DecompositionError as exc:
            raise DecompositionError(
                f"conditional covariance at step {j} is singular after jitter", pivot=exc.pivot
            ) from exc
        factors.append((cond.mean_map, lc))
    return factors


def unwhiten(params, times, innovations):
    """Map standard-normal innovations (p x M) to an OU path on ``times``."""
    z = np.asarray(innovations, dtype=float)
    if z.ndim != 2 or z.shape[0] != params.p:
        raise DimensionError(f"innovations must be {params.p} x M")
    if not np.all(np.isfinite(z)):
        raise DomainError("innovations must be finite")
    times = _check_times(times, z.shape[1])
    path = np.empty_like(z)
    for j, (a, lc) in enumerate(_factors(params, times)):
        path[:, j] = lc @ z[:, j] if a is None else a @ path[:, j - 1] + lc @ z[:, j]
    return path


def whiten(params, times, path):
    """Inverse of :func:`unwhiten`."""
    path = np.asarray(path, dtype=float)
    if path.ndim != 2 or path.shape[0] != params.p:
        raise DimensionError(f"path must be {params.p} x M")
    times = _check_times(times, path.shape[1])
    z = np.empty_like(path)
    for j, (a, lc) in enumerate(_factors(params, times)):
        resid = path[:, j] if a is None else path[:, j] - a @ path[:, j - 1]
        z[:, j] = np.linalg.solve(lc, resid)
    return z


def transition_factors(theta, v, dt, xp=np):
    """Batched mean maps and jittered conditional Cholesky factors for step sizes ``dt``.

    ``dt`` has any batch shape; outputs have shape ``dt.shape + (p, p)``.  Used by the
    posterior so that sampling and evaluation share one code path.
    """
    p = theta.shape[-1]
    a = smallmat.expm_small(-theta * dt[..., None, None], xp)
    c = v - a @ v @ xp.swapaxes(a, -1, -2)
    c = 0.5 * (c + xp.swapaxes(c, -1, -2)) + JITTER * xp.eye(p)
    return a, smallmat._chol(c, xp)
