"""Goodness-of-fit summaries: Kaplan-Meier, survival calibration, correlation decay and
simulation scoring."""

from dataclasses import dataclass

import numpy as np

from . import smallmat
from .errors import DomainError, StructuralError
from .ou import corr_from_rho


@dataclass(frozen=True)
class KMCurve:
    """Right-continuous step function: ``surv[k]`` holds on ``[time[k], time[k+1])``.

    ``time`` lists the distinct observed times; ``S(t) = 1`` before ``time[0]``.
    """

    time: np.ndarray
    surv: np.ndarray
    n_risk: np.ndarray
    n_event: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.time, t, side="right") - 1
        return np.where(k >= 0, self.surv[np.clip(k, 0, None)], 1.0)


def kaplan_meier(times, events):
    """Product-limit estimator; at tied times deaths are counted before censorings."""
    times = np.asarray(times, dtype=float).ravel()
    events = np.asarray(events).astype(int).ravel()
    if times.size == 0:
        raise DomainError("Kaplan-Meier needs at least one observation")
    if times.shape != events.shape:
        raise DomainError("times and events differ in length")
    if np.any(times < 0) or not np.all(np.isfinite(times)):
        raise DomainError("times must be finite and >= 0")
    uniq, inv = np.unique(times, return_inverse=True)
    d = np.bincount(inv, weights=events, minlength=uniq.size)
    c = np.bincount(inv, minlength=uniq.size).astype(float)
    # subjects with time >= t are at risk at t, including those censored at t
    at_risk = c[::-1].cumsum()[::-1]
    surv = np.cumprod(1.0 - d / at_risk)
    return KMCurve(time=uniq, surv=surv, n_risk=at_risk, n_event=d)


def max_diagonal_deviation(curve, upper=1.0):
    """Largest gap between a calibration KM curve and the line ``S(u) = 1 - u``.

    Both one-sided limits at every jump are checked, over ``u`` in ``[0, upper]``.
    """
    t = curve.time[curve.time <= upper]
    s_right = curve(t)
    s_left = np.concatenate([[1.0], curve(t)[:-1]]) if t.size else np.zeros(0)
    dev = np.concatenate([np.abs(s_right - (1.0 - t)), np.abs(s_left - (1.0 - t)), [0.0]])
    end = min(upper, 1.0)
    dev = np.append(dev, abs(float(curve(np.array(end))) - (1.0 - end)))
    return float(dev.max())


def survival_calibration(post, draws, n_curves=100, hazard_scale=1.0, seed=0):
    """KM curves of ``1 - S_i(T_i)`` for a subset of posterior draws.

    ``draws`` holds unconstrained joint draws (rows aligned with ``post.layout``);
    each draw's own latent paths enter ``S_i``.  ``hazard_scale`` multiplies every
    cumulative hazard (a deliberate misspecification knob).  Returns the list of curves
    and the per-draw ``u`` values.
    """
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2 or draws.shape[1] != post.dim:
        raise StructuralError("draws must include latent innovations for every subject (full joint vectors)")
    rng = np.random.default_rng(seed)
    n = draws.shape[0]
    pick = np.sort(rng.choice(n, size=min(n_curves, n), replace=False))
    events = np.array([s.event for s in post.subjects])
    curves, us = [], []
    for k in pick:
        u = 1.0 - np.exp(-hazard_scale * post.cumulative_hazards(draws[k]))
        us.append(u)
        curves.append(kaplan_meier(u, events))
    return curves, np.array(us)


def median_curve(curves, grid=None):
    """Pointwise median of step curves on ``grid`` (default 201 points in [0, 1])."""
    grid = np.linspace(0.0, 1.0, 201) if grid is None else np.asarray(grid, dtype=float)
    vals = np.stack([c(grid) for c in curves])
    return grid, np.median(vals, axis=0)


def correlation_decay(theta, rho, dts, probs=(0.25, 0.75)):
    """Joint correlation ``Psi(dt)`` of ``(eta(s), eta(s + dt))`` across posterior draws.

    ``theta`` is ``(S, p, p)``, ``rho`` is ``(S, p(p-1)/2)``.  Returns the per-draw array
    ``(S, len(dts), 2p, 2p)`` and a dict with the median and ``probs`` quantiles.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 2:
        theta = theta[None]
    rho = np.asarray(rho, dtype=float).reshape(theta.shape[0], -1)
    dts = np.asarray(dts, dtype=float)
    p = theta.shape[-1]
    v = corr_from_rho(rho, p)
    a = smallmat._expm(-theta[:, None] * dts[None, :, None, None])
    cross = v[:, None] @ np.swapaxes(a, -1, -2)
    psi = np.empty((theta.shape[0], dts.size, 2 * p, 2 * p))
    psi[..., :p, :p] = v[:, None]
    psi[..., p:, p:] = v[:, None]
    psi[..., :p, p:] = cross
    psi[..., p:, :p] = np.swapaxes(cross, -1, -2)
    bands = {"median": np.median(psi, axis=0)}
    for q in probs:
        bands[f"q{q:g}"] = np.quantile(psi, q, axis=0)
    return psi, bands


def score_simulation(draws, names, truth, probs=(0.05, 0.95)):
    """Bias of the posterior median and interval coverage per parameter in ``truth``.

    ``draws`` is ``(n, len(names))`` on the natural scale.
    """
    draws = np.asarray(draws, dtype=float)
    names = list(names)
    missing = [k for k in truth if k not in names]
    if missing:
        raise StructuralError(f"truth names not found in draws: {missing}")
    out = {}
    for k, val in truth.items():
        col = draws[:, names.index(k)]
        lo, med, hi = np.quantile(col, [probs[0], 0.5, probs[1]])
        out[k] = {"truth": float(val), "median": float(med), "bias": float(med - val), "lower": float(lo), "upper": float(hi), "covered": bool(lo <= val <= hi)}
    return out


def binomial_band(p, n, z=1.959963984540054):
    """Normal-approximation band for an empirical proportion with ``n`` trials."""
    half = z * np.sqrt(p * (1.0 - p) / n)
    return p - half, p + half
