"""Two-stage initialization of the joint sampler.

Stage 1 maximizes the longitudinal-only posterior (measurement model, OU path prior and
longitudinal priors).  The latent paths and random intercepts are integrated out exactly
with a Kalman filter on each subject's grid, so the optimization runs over structural
parameters only and avoids the degenerate joint modes (noise scales collapsing to zero)
of a maximization over paths.  Latent-path medians are the smoothed means.  Stage 2 fits a
constant-baseline hazard by maximum likelihood, holding the stage-1 latent paths fixed as
time-varying covariates.  ``assemble_init`` merges both into a packed starting point.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import jax
import jax.numpy as jnp
import numpy as np
from scipy.optimize import minimize

from . import hmc, ou
from .errors import InitializationError
from .posterior import JointPosterior

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 100
ASSEMBLE_RETRIES = 10

# Fixed-init mode: sign-correct, order-of-magnitude values for the simulation models.
FIXED_INIT = {
    "theta": np.array([[1.0, 0.5], [0.5, 1.0]]),
    "rho": np.array([-0.5]),
    "lambda": 1.0,
    "sigma_u": 0.1,
    "sigma_eps": 0.1,
    "beta0": -1.0,
    "beta": np.array([-1.0, 1.0]),
}


@dataclass
class Stage1Result:
    x: np.ndarray
    estimates: dict
    latent: list
    objective_history: list = field(default_factory=list)
    converged: bool = True
    method: str = "map"


@dataclass
class Stage2Result:
    beta0: float
    beta: np.ndarray
    alpha: np.ndarray
    converged: bool
    flag: str = ""
    grad_norm: float = float("nan")
    iterations: int = 0


def _start_point(post, rng=None):
    lay = post.layout
    x = np.zeros(lay.dim)
    p = post.model.p
    x[lay.slices["theta"]] = np.eye(p).ravel()
    if rng is not None:
        x[lay.n_struct:] = rng.uniform(-0.1, 0.1, size=lay.dim - lay.n_struct)
    return x


class LongitudinalMarginal:
    """Longitudinal submodel with paths and intercepts marginalized by Kalman filtering.

    The state at grid point j is ``(eta(t_j), u)``: the OU factors plus the K random
    intercepts, which stay constant.  Missing outcomes drop out of the update.
    """

    def __init__(self, subjects, grids, model):
        self.post = JointPosterior(subjects, grids, replace(model, include_survival=False))
        post = self.post
        p, K = model.p, model.K
        y = np.zeros((post.N, post.Mmax, K))
        mask = np.zeros((post.N, post.Mmax, K))
        for i, (s, g) in enumerate(zip(subjects, grids)):
            obs = np.isfinite(s.y)
            y[i, g.meas_index] = np.where(obs, s.y, 0.0).T
            mask[i, g.meas_index] = obs.T
        self._y = jnp.asarray(y)
        self._mask = jnp.asarray(mask)
        self._first = jnp.asarray(np.arange(post.Mmax) == 0)
        self._factor = np.argmax(model.mask, axis=1)
        self.n_struct = post.layout.n_struct
        self._objective = jax.jit(jax.value_and_grad(self._neg_log_post))
        self._smooth = jax.jit(self._smoother)

    def _filter(self, s):
        post = self.post
        p, K = post.model.p, post.model.K
        n, m = post.N, post.Mmax
        prm = post._params(s)
        theta = prm["theta"]
        v = ou.corr_from_rho(prm["rho"], p, jnp)
        a, lc = ou.transition_factors(theta, v, post._dt, jnp)
        c = lc @ jnp.swapaxes(lc, -1, -2)
        dim = p + K
        f = jnp.zeros((n, m, dim, dim)).at[..., :p, :p].set(a).at[..., p:, p:].set(jnp.eye(K))
        q = jnp.zeros((n, m, dim, dim)).at[..., :p, :p].set(c)
        lam = jnp.exp(prm["log_lambda"])
        hb = jnp.zeros((K, dim)).at[jnp.arange(K), self._factor].set(lam).at[jnp.arange(K), p + jnp.arange(K)].set(1.0)
        h = hb * self._mask[..., None]
        r_diag = jnp.exp(2.0 * prm["log_sigma_eps"]) * self._mask + (1.0 - self._mask)
        p0 = jnp.zeros((dim, dim)).at[:p, :p].set(v).at[p:, p:].set(jnp.diag(jnp.exp(2.0 * prm["log_sigma_u"])))
        carry0 = (jnp.zeros((n, dim)), jnp.broadcast_to(p0, (n, dim, dim)), jnp.zeros(n))
        eye = jnp.eye(dim)

        def step(carry, inp):
            mu, cov, ll = carry
            f_j, q_j, h_j, r_j, y_j, m_j, first = inp
            mu_p = jnp.where(first, mu, jnp.einsum("nij,nj->ni", f_j, mu))
            cov_p = jnp.where(first, cov, f_j @ cov @ jnp.swapaxes(f_j, -1, -2) + q_j)
            ht = jnp.swapaxes(h_j, -1, -2)
            s_j = h_j @ cov_p @ ht + jax.vmap(jnp.diag)(r_j)
            chol = jnp.linalg.cholesky(s_j)
            innov = y_j - jnp.einsum("nkj,nj->nk", h_j, mu_p)
            w = jax.scipy.linalg.solve_triangular(chol, innov[..., None], lower=True)[..., 0]
            gain = jnp.swapaxes(jax.scipy.linalg.cho_solve((chol, True), h_j @ cov_p), -1, -2)
            mu_f = mu_p + jnp.einsum("nij,nj->ni", gain, innov)
            ikh = eye - gain @ h_j
            cov_f = ikh @ cov_p @ jnp.swapaxes(ikh, -1, -2) + (gain * r_j[:, None, :]) @ jnp.swapaxes(gain, -1, -2)
            nobs = jnp.sum(m_j, axis=-1)
            ll = ll - 0.5 * jnp.sum(w * w, axis=-1) - jnp.sum(jnp.log(jnp.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
            ll = ll - 0.5 * math.log(2.0 * math.pi) * nobs
            return (mu_f, cov_f, ll), (mu_p, cov_p, mu_f, cov_f)

        sw = lambda t: jnp.swapaxes(t, 0, 1)
        xs = (sw(f), sw(q), sw(h), sw(r_diag), sw(self._y), sw(self._mask), self._first)
        (_, _, ll), hist = jax.lax.scan(step, carry0, xs)
        return ll, hist, f, prm, v

    def _neg_log_post(self, s):
        ll, _, _, prm, v = self._filter(s)
        total = jnp.sum(ll) + sum(self.post._prior_terms(prm).values())
        ok = self.post._valid(prm["theta"], v) & jnp.isfinite(total)
        return jnp.where(ok, -total, jnp.inf)

    def log_marginal(self, s):
        """Per-subject marginal log-likelihood of the outcomes at structural vector ``s``."""
        return np.asarray(self._filter(jnp.asarray(s))[0])

    def _smoother(self, s):
        _, (mu_p, cov_p, mu_f, cov_f), f, _, _ = self._filter(s)
        f = jnp.swapaxes(f, 0, 1)

        def back(carry, inp):
            mu_s_next, cov_s_next = carry
            mu_f_j, cov_f_j, mu_p_next, cov_p_next, f_next = inp
            g = jnp.swapaxes(jnp.linalg.solve(cov_p_next, f_next @ cov_f_j), -1, -2)
            mu_s = mu_f_j + jnp.einsum("nij,nj->ni", g, mu_s_next - mu_p_next)
            cov_s = cov_f_j + g @ (cov_s_next - cov_p_next) @ jnp.swapaxes(g, -1, -2)
            return (mu_s, cov_s), mu_s

        xs = (mu_f[:-1], cov_f[:-1], mu_p[1:], cov_p[1:], f[1:])
        _, mus = jax.lax.scan(back, (mu_f[-1], cov_f[-1]), xs, reverse=True)
        return jnp.concatenate([mus, mu_f[-1:]], axis=0)

    def smoothed_paths(self, s):
        """Posterior means (= medians) of the latent paths, p x M_i per subject."""
        mus = np.asarray(self._smooth(jnp.asarray(s)))
        p = self.post.model.p
        return [mus[: g.M, i, :p].T.copy() for i, g in enumerate(self.post.grids)]

    def value_and_grad(self, s):
        f, g = self._objective(jnp.asarray(s))
        return float(f), np.asarray(g)


def stage1_longitudinal(subjects, grids, model, method="map", max_iter=1000, seed=0, sample_iterations=400):
    """Fit the longitudinal submodel alone.

    Returns a :class:`Stage1Result` with natural-scale estimates and latent paths
    (p x M_i) on each subject's grid: smoothed means at the marginal MAP for
    ``method="map"``, pointwise medians of sampled paths for ``method="sample"``.
    """
    rng = np.random.default_rng(seed)
    if method == "sample":
        post = JointPosterior(subjects, grids, replace(model, include_survival=False))
        x0 = _start_point(post, rng)
        cfg = hmc.SamplerConfig(chains=1, iterations=sample_iterations, warmup=sample_iterations // 2, seed=seed, init=x0)
        draws = hmc.sample(cfg, post)
        pooled = draws.pooled()
        x = np.median(pooled, axis=0)
        paths = [post.latent_paths(row) for row in pooled[:: max(1, len(pooled) // 100)]]
        latent = [np.median(np.stack([pp[i] for pp in paths]), axis=0) for i in range(len(grids))]
        return Stage1Result(x=x, estimates=post.layout.constrain(x), latent=latent, method="sample")

    if method != "map":
        raise ValueError(f"unknown stage-1 method {method!r}")
    lm = LongitudinalMarginal(subjects, grids, model)
    lay = lm.post.layout
    s0 = _start_point(lm.post)[: lm.n_struct]
    history = []

    def fun(s):
        f, g = lm.value_and_grad(s)
        if not math.isfinite(f) or not np.all(np.isfinite(g)):
            return 1e300, np.zeros_like(s)
        return f, g

    def record(sk):
        history.append(fun(sk)[0])

    history.append(fun(s0)[0])
    res = minimize(fun, s0, jac=True, method="L-BFGS-B", callback=record, options={"maxiter": max_iter})
    s = res.x
    if not res.success:
        warnings.warn(f"stage-1 optimizer stopped without convergence: {res.message}", RuntimeWarning)
    x = np.concatenate([s, np.zeros(lay.dim - lm.n_struct)])
    return Stage1Result(
        x=x,
        estimates=lay.constrain(x),
        latent=lm.smoothed_paths(s),
        objective_history=history,
        converged=bool(res.success),
    )


def _hazard_design(latent, grids, subjects):
    rows, weights, event_rows, delta = [], [], [], []
    for s, g, eta in zip(subjects, grids, latent):
        cov = np.asarray(s.covariates, dtype=float)
        w = np.column_stack([np.ones(g.M), np.asarray(eta).T, np.tile(cov, (g.M, 1))])
        c = np.zeros(g.M)
        d = np.diff(g.points)
        c[:-1] += 0.5 * d
        c[1:] += 0.5 * d
        rows.append(w)
        weights.append(c)
        event_rows.append(w[-1])
        delta.append(float(s.event))
    return np.vstack(rows), np.concatenate(weights), np.array(event_rows), np.array(delta)


def stage2_hazard(latent, subjects, grids, baseline="constant"):
    """Constant-baseline hazard MLE with fixed latent paths (trapezoidal cumulative hazard).

    Newton iterations with step halving until the gradient norm is below ``1e-8``.  A
    dataset without events has no finite MLE and falls back to prior medians (all zero);
    an all-event dataset is flagged but its MLE is kept.
    """
    if baseline != "constant":
        raise ValueError("stage-2 initialization uses a constant baseline")
    w, c, w_event, delta = _hazard_design(latent, grids, subjects)
    p = np.asarray(latent[0]).shape[0]
    q = w.shape[1] - 1 - p
    n_events = delta.sum()
    if n_events == 0:
        return Stage2Result(beta0=0.0, beta=np.zeros(p), alpha=np.zeros(q), converged=False, flag="no-events: prior medians")
    flag = "all-events" if n_events == delta.size else ""

    def loglik(b):
        return float(delta @ (w_event @ b) - c @ np.exp(w @ b))

    b = np.zeros(w.shape[1])
    b[0] = math.log(n_events / c.sum())
    gnorm = float("inf")
    it = 0
    for it in range(1, NEWTON_MAX_ITER + 1):
        e = c * np.exp(w @ b)
        grad = delta @ w_event - e @ w
        gnorm = float(np.linalg.norm(grad))
        if gnorm < NEWTON_TOL:
            break
        hess = (w * e[:, None]).T @ w
        step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        f0 = loglik(b)
        t = 1.0
        while t > 1e-10 and not loglik(b + t * step) >= f0:
            t *= 0.5
        b = b + t * step
    converged = gnorm < NEWTON_TOL
    if not converged or not np.all(np.isfinite(b)):
        return Stage2Result(
            beta0=0.0, beta=np.zeros(p), alpha=np.zeros(q), converged=False,
            flag=(flag + "; " if flag else "") + "newton failed: prior medians", grad_norm=gnorm, iterations=it,
        )
    return Stage2Result(beta0=float(b[0]), beta=b[1 : 1 + p], alpha=b[1 + p :], converged=True, flag=flag, grad_norm=gnorm, iterations=it)


def project_theta(theta, shrink=0.9, max_steps=200):
    """Shrink off-diagonals toward zero until trace and determinant are positive."""
    theta = np.array(theta, dtype=float)
    d = np.diag(theta).copy()
    if np.any(d <= 0):
        theta[np.diag_indices_from(theta)] = np.maximum(d, 0.1)
    off = ~np.eye(theta.shape[0], dtype=bool)
    for _ in range(max_steps):
        if ou.constraints_ok(theta)[2]:
            return theta
        theta[off] *= shrink
    theta[off] = 0.0
    return theta


def _struct_values(post, est, stage2):
    """Natural-scale structural vector aligned with ``layout.struct_names``."""
    lay, model = post.layout, post.model
    vals = np.zeros(lay.n_struct)
    theta = project_theta(est["theta"])
    vals[lay.slices["theta"]] = theta.ravel()
    bound = model.priors.rho_bound
    vals[lay.slices["rho"]] = np.clip(est["rho"], -0.99 * bound, 0.99 * bound)
    vals[lay.slices["lambda"]] = est["lambda"]
    vals[lay.slices["sigma_lambda"]] = est["sigma_lambda"]
    vals[lay.slices["sigma_u"]] = est["sigma_u"]
    vals[lay.slices["sigma_eps"]] = est["sigma_eps"]
    if model.include_survival:
        if model.baseline == "constant":
            vals[lay.slices["beta0"]] = stage2.beta0
        elif model.baseline == "weibull":
            vals[lay.slices["weibull"]] = [1.0, math.exp(-stage2.beta0)]
        else:
            vals[lay.slices["log_h0"]] = stage2.beta0
            vals[lay.slices["sigma_beta"]] = 1.0
        vals[lay.slices["beta"]] = stage2.beta
        vals[lay.slices["alpha"]] = stage2.alpha
    return vals, theta


def assemble_init(post, stage1=None, stage2=None, fixed=False, seed=0):
    """Packed initial point for ``post`` with a finite log posterior.

    With ``fixed=True`` the fixed-init values are used and innovations are drawn
    uniformly on (-2, 2); otherwise the stage-1 latent paths are whitened under the
    assembled OU parameters.
    """
    rng = np.random.default_rng(seed)
    lay, model = post.layout, post.model
    if fixed:
        est = {
            "theta": FIXED_INIT["theta"],
            "rho": FIXED_INIT["rho"],
            "lambda": np.full(model.K, FIXED_INIT["lambda"]),
            "sigma_lambda": 1.0,
            "sigma_u": np.full(model.K, FIXED_INIT["sigma_u"]),
            "sigma_eps": np.full(model.K, FIXED_INIT["sigma_eps"]),
        }
        stage2 = Stage2Result(
            beta0=FIXED_INIT["beta0"], beta=FIXED_INIT["beta"][: model.p], alpha=np.zeros(model.n_covariates), converged=True
        )
    else:
        if stage1 is None or (model.include_survival and stage2 is None):
            raise InitializationError("both initialization stages are required unless fixed mode is selected")
        est = stage1.estimates
    vals, theta = _struct_values(post, est, stage2)
    struct = lay.unconstrain_struct(vals)
    params = ou.OUParams(theta=theta, rho=vals[lay.slices["rho"]])
    if fixed:
        zs = [rng.uniform(-2.0, 2.0, size=(model.p, g.M)) for g in post.grids]
    else:
        zs = [ou.whiten(params, g.points, eta) for g, eta in zip(post.grids, stage1.latent)]
    x = np.concatenate([struct, np.concatenate([z.T.ravel() for z in zs]) if zs else np.zeros(0)])
    base = x.copy()
    for attempt in range(ASSEMBLE_RETRIES + 1):
        lp = post.log_posterior(x)
        if math.isfinite(lp):
            return x
        x = base + 0.01 * (attempt + 1) * rng.standard_normal(base.size)
    raise InitializationError(f"assembled initial point has a non-finite log posterior after {ASSEMBLE_RETRIES} jitter retries")


def two_stage_init(subjects, grids, model, method="map", seed=0):
    """Run both stages and assemble; returns ``(x, stage1, stage2, posterior)``."""
    post = JointPosterior(subjects, grids, model)
    s1 = stage1_longitudinal(subjects, grids, model, method=method, seed=seed)
    s2 = stage2_hazard(s1.latent, subjects, grids) if model.include_survival else None
    if s2 is not None and s2.flag:
        log.warning("stage-2 hazard fit: %s", s2.flag)
    return assemble_init(post, s1, s2, seed=seed), s1, s2, post
