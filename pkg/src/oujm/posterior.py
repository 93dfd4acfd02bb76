"""Joint log-posterior over an unconstrained parameter vector, with autodiff gradients.

Coordinate layout (``Layout``), in order:

* ``theta[i,j]`` (p*p, row-major, unconstrained; mean-reversion enforced by rejection)
* ``rho[k]`` (scaled tanh onto the uniform prior support)
* ``lambda[k]`` (log), ``sigma_lambda`` (log), ``sigma_u[k]`` (log), ``sigma_eps[k]`` (log)
* survival block: ``beta0`` | ``weibull_shape``, ``weibull_scale`` (log) |
  ``log_h0[b]``, ``sigma_beta`` (log); then ``beta[f]`` and ``alpha[c]``
* whitened latent innovations ``z[i,j,f]``, contiguous per subject, grid-point major

Indices in names are 1-based.  The latent path of subject ``i`` is the image of its
innovations under the OU whitening map, so innovations carry a standard-normal prior.
All density terms are proper (half-Cauchy and truncated-normal constants included).
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import jax
import jax.numpy as jnp
import numpy as np
from jax.scipy.special import ndtr

from . import ou, smallmat
from .dfm import compound_symmetry_loglik
from .errors import DimensionError, GradientUndefinedError, StructuralError, UnsupportedDimensionError
from .hazard import BASELINES, DEFAULT_SEGMENTS, equal_cutpoints, segment_index

jax.config.update("jax_enable_x64", True)

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorSpec:
    """Prior hyperparameters; half-Cauchy entries are scales, normal entries SDs."""

    theta_sd: float = 10.0
    rho_bound: float = 0.999999
    lambda_mean: float = 1.0
    sigma_lambda_scale: float = 5.0
    sigma_u_scale: float = 5.0
    sigma_eps_scale: float = 5.0
    beta0_sd: float = 5.0
    beta_sd: float = 5.0
    alpha_sd: float = 5.0
    sigma_beta_scale: float = 25.0
    weibull_shape_scale: float = 5.0
    weibull_scale_scale: float = 25.0


@dataclass(frozen=True)
class ModelSpec:
    mask: np.ndarray
    baseline: str = "constant"
    n_segments: int = DEFAULT_SEGMENTS
    cutpoints: Optional[np.ndarray] = None
    n_covariates: int = 0
    priors: PriorSpec = field(default_factory=PriorSpec)
    include_survival: bool = True

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=int)
        if mask.ndim != 2 or np.any(mask.sum(axis=1) != 1):
            raise StructuralError("mask must be K x p with exactly one 1 per row")
        if mask.shape[1] != 2:
            raise UnsupportedDimensionError("constraints implemented for p = 2 only")
        if self.baseline not in BASELINES:
            raise StructuralError(f"unknown baseline {self.baseline!r}")
        object.__setattr__(self, "mask", mask)

    @property
    def K(self):
        return self.mask.shape[0]

    @property
    def p(self):
        return self.mask.shape[1]


def _idx(*ix):
    return "[" + ",".join(str(i + 1) for i in ix) + "]"


class Layout:
    """Names, blocks and transforms of the flat unconstrained vector."""

    def __init__(self, model, grid_sizes):
        self.model = model
        self.grid_sizes = [int(m) for m in grid_sizes]
        p, K = model.p, model.K
        blocks = [
            ("theta", [f"theta{_idx(i, j)}" for i in range(p) for j in range(p)], "identity"),
            ("rho", [f"rho{_idx(k)}" for k in range(p * (p - 1) // 2)], "scaled_tanh"),
            ("lambda", [f"lambda{_idx(k)}" for k in range(K)], "log"),
            ("sigma_lambda", ["sigma_lambda"], "log"),
            ("sigma_u", [f"sigma_u{_idx(k)}" for k in range(K)], "log"),
            ("sigma_eps", [f"sigma_eps{_idx(k)}" for k in range(K)], "log"),
        ]
        if model.include_survival:
            if model.baseline == "constant":
                blocks.append(("beta0", ["beta0"], "identity"))
            elif model.baseline == "weibull":
                blocks.append(("weibull", ["weibull_shape", "weibull_scale"], "log"))
            else:
                blocks.append(("log_h0", [f"log_h0{_idx(b)}" for b in range(model.n_segments)], "identity"))
                blocks.append(("sigma_beta", ["sigma_beta"], "log"))
            blocks.append(("beta", [f"beta{_idx(f)}" for f in range(p)], "identity"))
            blocks.append(("alpha", [f"alpha{_idx(c)}" for c in range(model.n_covariates)], "identity"))
        self.slices = {}
        self.names = []
        self.transforms = []
        start = 0
        for key, names, transform in blocks:
            self.slices[key] = slice(start, start + len(names))
            self.names.extend(names)
            self.transforms.extend([transform] * len(names))
            start += len(names)
        self.n_struct = start
        self.z_slices = []
        for i, m in enumerate(self.grid_sizes):
            self.z_slices.append(slice(start, start + p * m))
            self.names.extend(f"z{_idx(i, j, f)}" for j in range(m) for f in range(p))
            self.transforms.extend(["identity"] * (p * m))
            start += p * m
        self.dim = start
        self._index = {name: k for k, name in enumerate(self.names)}

    @property
    def struct_names(self):
        return self.names[: self.n_struct]

    def index(self, name):
        return self._index[name]

    def unpack(self, x):
        """Split a flat vector into raw (unconstrained) blocks; ``z`` is a list of p x M arrays."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise StructuralError(f"expected vector of length {self.dim}, got {x.shape}")
        out = {key: x[sl].copy() for key, sl in self.slices.items()}
        out["z"] = [x[sl].reshape(-1, self.model.p).T.copy() for sl in self.z_slices]
        return out

    def pack(self, blocks):
        x = np.empty(self.dim)
        for key, sl in self.slices.items():
            v = np.asarray(blocks[key], dtype=float).ravel()
            if v.size != sl.stop - sl.start:
                raise StructuralError(f"block {key} has {v.size} entries, expected {sl.stop - sl.start}")
            x[sl] = v
        zs = blocks.get("z", [])
        if len(zs) != len(self.z_slices):
            raise StructuralError(f"expected innovations for {len(self.z_slices)} subjects, got {len(zs)}")
        for z, sl in zip(zs, self.z_slices):
            z = np.asarray(z, dtype=float)
            if z.size != sl.stop - sl.start:
                raise StructuralError("innovation block has the wrong size")
            x[sl] = z.T.ravel()
        return x

    def constrain(self, x):
        """Natural-scale structural parameters as a dict."""
        b = self.unpack(x)
        bound = self.model.priors.rho_bound
        out = {
            "theta": b["theta"].reshape(self.model.p, self.model.p),
            "rho": bound * np.tanh(b["rho"]),
            "lambda": np.exp(b["lambda"]),
            "sigma_lambda": float(np.exp(b["sigma_lambda"][0])),
            "sigma_u": np.exp(b["sigma_u"]),
            "sigma_eps": np.exp(b["sigma_eps"]),
        }
        if self.model.include_survival:
            if "beta0" in b:
                out["beta0"] = float(b["beta0"][0])
            if "weibull" in b:
                out["weibull_shape"], out["weibull_scale"] = np.exp(b["weibull"])
            if "log_h0" in b:
                out["log_h0"] = b["log_h0"]
                out["sigma_beta"] = float(np.exp(b["sigma_beta"][0]))
            out["beta"] = b["beta"]
            out["alpha"] = b["alpha"]
        return out

    def constrained_struct(self, x):
        """Structural coordinates mapped to natural scale, aligned with ``struct_names``."""
        x = np.asarray(x, dtype=float)
        s = x[..., : self.n_struct].copy()
        tr = np.array(self.transforms[: self.n_struct])
        s[..., tr == "log"] = np.exp(s[..., tr == "log"])
        s[..., tr == "scaled_tanh"] = self.model.priors.rho_bound * np.tanh(s[..., tr == "scaled_tanh"])
        return s

    def unconstrain_struct(self, values):
        """Inverse of :meth:`constrained_struct` for a single vector."""
        s = np.asarray(values, dtype=float).copy()
        tr = np.array(self.transforms[: self.n_struct])
        s[tr == "log"] = np.log(s[tr == "log"])
        s[tr == "scaled_tanh"] = np.arctanh(s[tr == "scaled_tanh"] / self.model.priors.rho_bound)
        return s

    def to_dict(self):
        return {
            "names": self.names[: self.n_struct],
            "transforms": self.transforms[: self.n_struct],
            "grid_sizes": self.grid_sizes,
            "n_struct": self.n_struct,
            "dim": self.dim,
            "latent_order": "z[i,j,f]: subject i, grid point j, factor f; contiguous per subject",
        }


def _normal_lpdf(x, sd, mean=0.0):
    return -0.5 * ((x - mean) / sd) ** 2 - jnp.log(sd) - _HALF_LOG_2PI


def _half_cauchy_lpdf(x, scale):
    return math.log(2.0 / math.pi) - math.log(scale) - jnp.log1p((x / scale) ** 2)


def _log_sech2(w):
    # log(1 - tanh(w)^2), stable for large |w|
    a = jnp.abs(w)
    return 2.0 * (math.log(2.0) - a - jnp.log1p(jnp.exp(-2.0 * a)))


class JointPosterior:
    """Log-posterior of the joint model for a fixed dataset and per-subject grids."""

    def __init__(self, subjects, grids, model):
        if len(subjects) != len(grids):
            raise DimensionError("need one grid per subject")
        self.subjects = list(subjects)
        self.grids = list(grids)
        self.model = model
        p, K = model.p, model.K
        for s, g in zip(self.subjects, self.grids):
            if s.y.shape[0] != K:
                raise DimensionError(f"subject {s.id} has {s.y.shape[0]} outcomes, model has {K}")
            if s.covariates.size != model.n_covariates and model.include_survival:
                raise DimensionError(f"subject {s.id} has {s.covariates.size} covariates, model has {model.n_covariates}")
            if not np.isclose(g.points[-1], s.event_time, rtol=0, atol=1e-12):
                raise DimensionError(f"grid of subject {s.id} must end at its event time")
        self.layout = Layout(model, [g.M for g in self.grids])
        self.cutpoints = None
        if model.include_survival and model.baseline == "piecewise":
            if model.cutpoints is not None:
                self.cutpoints = np.asarray(model.cutpoints, dtype=float)
            else:
                self.cutpoints = equal_cutpoints(max(s.event_time for s in self.subjects), model.n_segments)
            if self.cutpoints.size != model.n_segments + 1:
                raise DimensionError("cut-points do not match the number of segments")
        self._build_static()
        self._lp = jax.jit(self._logdensity)
        self._vg = jax.jit(jax.value_and_grad(self._logdensity))
        self._blocks_jit = jax.jit(self._blocks)
        self._cum_jit = jax.jit(self._cum_hazard) if model.include_survival else None

    @property
    def dim(self):
        return self.layout.dim

    def _build_static(self):
        n = len(self.subjects)
        p, K = self.model.p, self.model.K
        self.N = n
        mmax = max((g.M for g in self.grids), default=1)
        self.Mmax = mmax
        times = np.zeros((n, mmax))
        dt = np.zeros((n, mmax))
        pair_mask = np.zeros((n, mmax))
        t_eval = np.ones((n, mmax))
        seg = np.zeros((n, mmax), dtype=int)
        pad_index = []
        obs_subj, obs_pos, obs_item, obs_val = [], [], [], []
        last = np.zeros(n, dtype=int)
        for i, (s, g) in enumerate(zip(self.subjects, self.grids)):
            m = g.M
            times[i, :m] = g.points
            dt[i, 1:m] = np.diff(g.points)
            pair_mask[i, 1:m] = 1.0
            last[i] = m - 1
            te = g.points.copy()
            if self.model.baseline == "weibull" and m > 1 and te[0] == 0.0:
                te[0] = 0.5 * te[1]
            t_eval[i, :m] = np.where(te > 0, te, 1.0)
            if self.cutpoints is not None:
                seg[i, :m] = segment_index(self.cutpoints, g.points)
            pad_index.append(((i * mmax + np.arange(m))[:, None] * p + np.arange(p)[None, :]).ravel())
            kk, jj = np.nonzero(np.isfinite(s.y))
            obs_subj.append(np.full(kk.size, i))
            obs_pos.append(g.meas_index[jj])
            obs_item.append(kk)
            obs_val.append(s.y[kk, jj])
        cat = lambda parts, dtype: np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype)
        self._dt = jnp.asarray(dt)
        self._pair_mask = jnp.asarray(pair_mask)
        self._t_eval = jnp.asarray(t_eval)
        self._seg = jnp.asarray(seg)
        self._pad_index = jnp.asarray(cat(pad_index, int))
        self._last = jnp.asarray(last)
        self._obs_subj = jnp.asarray(cat(obs_subj, int))
        self._obs_pos = jnp.asarray(cat(obs_pos, int))
        item = cat(obs_item, int)
        self._obs_item = jnp.asarray(item)
        self._obs_factor = jnp.asarray(np.argmax(self.model.mask, axis=1)[item])
        self._obs_val = jnp.asarray(cat(obs_val, float))
        self._obs_group = jnp.asarray(cat(obs_subj, int) * K + item)
        self._group_n = jnp.asarray(np.bincount(cat(obs_subj, int) * K + item, minlength=n * K).astype(float))
        self._group_item = jnp.asarray(np.tile(np.arange(K), n))
        self._delta = jnp.asarray(np.array([s.event for s in self.subjects], dtype=float))
        q = self.model.n_covariates
        self._X = jnp.asarray(np.array([s.covariates for s in self.subjects], dtype=float).reshape(n, q))
        self._times = times

    # -- traced model pieces -------------------------------------------------

    def _params(self, x):
        lay, model = self.layout, self.model
        p = model.p
        sl = lay.slices
        out = {
            "theta": x[sl["theta"]].reshape(p, p),
            "w_rho": x[sl["rho"]],
            "log_lambda": x[sl["lambda"]],
            "log_sigma_lambda": x[sl["sigma_lambda"]][0],
            "log_sigma_u": x[sl["sigma_u"]],
            "log_sigma_eps": x[sl["sigma_eps"]],
        }
        out["rho"] = model.priors.rho_bound * jnp.tanh(out["w_rho"])
        if model.include_survival:
            for key in ("beta0", "weibull", "log_h0", "sigma_beta", "beta", "alpha"):
                if key in sl:
                    out[key] = x[sl[key]]
        return out

    def _valid(self, theta, v):
        # mean reversion (trace, determinant) and a positive definite sigma sigma^T
        v1 = theta[0, 0] + theta[1, 1]
        v2 = theta[0, 0] * theta[1, 1] - theta[0, 1] * theta[1, 0]
        q = theta @ v + v @ theta.T
        qdet = q[0, 0] * q[1, 1] - q[0, 1] * q[1, 0]
        return (v1 > 0) & (v2 > 0) & (q[0, 0] > 0) & (qdet > 0)

    def _eta(self, x, theta, v):
        """Latent paths on the padded grids, shape (N, Mmax, p)."""
        p = self.model.p
        z = x[self.layout.n_struct:]
        zpad = jnp.zeros(self.N * self.Mmax * p).at[self._pad_index].set(z).reshape(self.N, self.Mmax, p)
        a, lc = ou.transition_factors(theta, v, self._dt, jnp)
        l0 = smallmat._chol(v, jnp)
        eta0 = zpad[:, 0, :] @ l0.T

        def step(eta, inp):
            a_j, l_j, z_j = inp
            eta = jnp.einsum("nij,nj->ni", a_j, eta) + jnp.einsum("nij,nj->ni", l_j, z_j)
            return eta, eta

        xs = (
            jnp.swapaxes(a[:, 1:], 0, 1),
            jnp.swapaxes(lc[:, 1:], 0, 1),
            jnp.swapaxes(zpad[:, 1:], 0, 1),
        )
        _, rest = jax.lax.scan(step, eta0, xs)
        return jnp.concatenate([eta0[:, None, :], jnp.swapaxes(rest, 0, 1)], axis=1)

    def _log_hazard(self, prm, eta):
        model = self.model
        if model.baseline == "constant":
            log_h0 = prm["beta0"][0] * jnp.ones_like(self._t_eval)
        elif model.baseline == "weibull":
            log_shape, log_scale = prm["weibull"][0], prm["weibull"][1]
            shape = jnp.exp(log_shape)
            log_h0 = log_shape - log_scale + (shape - 1.0) * (jnp.log(self._t_eval) - log_scale)
        else:
            log_h0 = prm["log_h0"][self._seg]
        return log_h0 + eta @ prm["beta"] + (self._X @ prm["alpha"])[:, None]

    def _blocks(self, x):
        prm = self._params(x)
        model = self.model
        theta = prm["theta"]
        v = ou.corr_from_rho(prm["rho"], model.p, jnp)
        sigma_u = jnp.exp(prm["log_sigma_u"])
        sigma_eps = jnp.exp(prm["log_sigma_eps"])
        lam = jnp.exp(prm["log_lambda"])
        z = x[self.layout.n_struct:]

        out = {}
        if self.N:
            eta = self._eta(x, theta, v)
            mean = lam[self._obs_item] * eta[self._obs_subj, self._obs_pos, self._obs_factor]
            r = self._obs_val - mean
            ng = self.N * model.K
            s1 = jax.ops.segment_sum(r, self._obs_group, num_segments=ng)
            s2 = jax.ops.segment_sum(r * r, self._obs_group, num_segments=ng)
            out["measurement"] = jnp.sum(
                compound_symmetry_loglik(
                    self._group_n, s1, s2, sigma_u[self._group_item] ** 2, sigma_eps[self._group_item] ** 2, jnp
                )
            )
            if model.include_survival:
                log_h = self._log_hazard(prm, eta)
                h = jnp.exp(log_h)
                cum = jnp.sum(0.5 * (h[:, 1:] + h[:, :-1]) * self._dt[:, 1:] * self._pair_mask[:, 1:])
                event = jnp.sum(self._delta * log_h[jnp.arange(self.N), self._last])
                out["survival"] = event - cum
            else:
                out["survival"] = jnp.zeros(())
        else:
            out["measurement"] = jnp.zeros(())
            out["survival"] = jnp.zeros(())
        out["latent_prior"] = jnp.sum(-0.5 * z * z) - z.size * _HALF_LOG_2PI
        out.update(self._prior_terms(prm))
        out["valid"] = self._valid(theta, v)
        return out

    def _prior_terms(self, prm):
        # structural priors and the log-Jacobians of their transforms
        pri = self.model.priors
        model = self.model
        theta = prm["theta"]
        sigma_u = jnp.exp(prm["log_sigma_u"])
        sigma_eps = jnp.exp(prm["log_sigma_eps"])
        lam = jnp.exp(prm["log_lambda"])
        sigma_lambda = jnp.exp(prm["log_sigma_lambda"])
        out = {}
        out["prior_theta"] = jnp.sum(_normal_lpdf(theta, pri.theta_sd))
        out["prior_rho"] = -jnp.log(2.0 * pri.rho_bound) * prm["rho"].size + jnp.sum(
            math.log(pri.rho_bound) + _log_sech2(prm["w_rho"])
        )
        trunc = jnp.log(ndtr(pri.lambda_mean / sigma_lambda))
        out["prior_lambda"] = jnp.sum(
            _normal_lpdf(lam, sigma_lambda, pri.lambda_mean) - trunc + prm["log_lambda"]
        )
        out["prior_sigma_lambda"] = _half_cauchy_lpdf(sigma_lambda, pri.sigma_lambda_scale) + prm["log_sigma_lambda"]
        out["prior_sigma_u"] = jnp.sum(_half_cauchy_lpdf(sigma_u, pri.sigma_u_scale) + prm["log_sigma_u"])
        out["prior_sigma_eps"] = jnp.sum(_half_cauchy_lpdf(sigma_eps, pri.sigma_eps_scale) + prm["log_sigma_eps"])
        if model.include_survival:
            if model.baseline == "constant":
                out["prior_baseline"] = jnp.sum(_normal_lpdf(prm["beta0"], pri.beta0_sd))
            elif model.baseline == "weibull":
                shape, scale = jnp.exp(prm["weibull"][0]), jnp.exp(prm["weibull"][1])
                out["prior_baseline"] = (
                    _half_cauchy_lpdf(shape, pri.weibull_shape_scale)
                    + _half_cauchy_lpdf(scale, pri.weibull_scale_scale)
                    + prm["weibull"][0]
                    + prm["weibull"][1]
                )
            else:
                sigma_beta = jnp.exp(prm["sigma_beta"][0])
                levels = prm["log_h0"]
                prev = jnp.concatenate([jnp.zeros(1), levels[:-1]])
                out["prior_baseline"] = (
                    jnp.sum(_normal_lpdf(levels, sigma_beta, prev))
                    + _half_cauchy_lpdf(sigma_beta, pri.sigma_beta_scale)
                    + prm["sigma_beta"][0]
                )
            out["prior_beta"] = jnp.sum(_normal_lpdf(prm["beta"], pri.beta_sd))
            out["prior_alpha"] = jnp.sum(_normal_lpdf(prm["alpha"], pri.alpha_sd))
        return out

    def _cum_hazard(self, x):
        prm = self._params(x)
        v = ou.corr_from_rho(prm["rho"], self.model.p, jnp)
        eta = self._eta(x, prm["theta"], v)
        h = jnp.exp(self._log_hazard(prm, eta))
        return jnp.sum(0.5 * (h[:, 1:] + h[:, :-1]) * self._dt[:, 1:] * self._pair_mask[:, 1:], axis=1)

    def _logdensity(self, x):
        blocks = self._blocks(x)
        valid = blocks.pop("valid")
        total = sum(blocks.values())
        ok = valid & jnp.isfinite(total)
        return jnp.where(ok, total, -jnp.inf)

    # -- public numpy-facing API ------------------------------------------------

    def logdensity_fn(self):
        """Traceable ``x -> log posterior`` for the sampler."""
        return self._logdensity

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise StructuralError(f"parameter vector has length {x.shape}, expected {self.dim}")
        return x

    def log_posterior(self, x):
        return float(self._lp(self._check(x)))

    def evaluate(self, x):
        """``(log posterior, diverged)``; non-finite values map to ``-inf`` with the flag set."""
        lp = self.log_posterior(x)
        return lp, not math.isfinite(lp)

    def grad_log_posterior(self, x):
        x = self._check(x)
        lp, g = self._vg(x)
        if not np.isfinite(lp):
            raise GradientUndefinedError("log posterior is -inf at this point (rejected region)")
        return np.asarray(g)

    def value_and_grad(self, x):
        lp, g = self._vg(self._check(x))
        return float(lp), np.asarray(g)

    def blocks(self, x):
        """Per-block contributions (floats) and the constraint flag."""
        out = self._blocks_jit(self._check(x))
        return {k: (bool(v) if k == "valid" else float(v)) for k, v in out.items()}

    def latent_paths(self, x):
        """Latent paths (p x M_i) on each subject's grid."""
        x = self._check(x)
        prm = self._params(jnp.asarray(x))
        v = ou.corr_from_rho(prm["rho"], self.model.p, jnp)
        eta = np.asarray(self._eta(jnp.asarray(x), prm["theta"], v))
        return [eta[i, : g.M].T.copy() for i, g in enumerate(self.grids)]

    def cumulative_hazards(self, x):
        """Trapezoidal cumulative hazard at each subject's event time."""
        if self._cum_jit is None:
            raise StructuralError("model has no survival submodel")
        return np.asarray(self._cum_jit(self._check(x)))

    def hazard_spec(self, x):
        """``HazardSpec`` for the survival parameters at ``x``."""
        from .hazard import HazardSpec

        c = self.layout.constrain(x)
        kw = dict(beta=c["beta"], alpha=c["alpha"])
        if self.model.baseline == "constant":
            return HazardSpec("constant", beta0=c["beta0"], **kw)
        if self.model.baseline == "weibull":
            return HazardSpec("weibull", shape=c["weibull_shape"], scale=c["weibull_scale"], **kw)
        return HazardSpec("piecewise", cutpoints=self.cutpoints, log_levels=c["log_h0"], rw_sd=c["sigma_beta"], **kw)

    def ou_params(self, x):
        c = self.layout.constrain(x)
        return ou.OUParams(theta=c["theta"], rho=c["rho"])

    def loading_model(self, x):
        from .dfm import LoadingModel

        c = self.layout.constrain(x)
        return LoadingModel(mask=self.model.mask, lam=c["lambda"], sigma_u=c["sigma_u"], sigma_eps=c["sigma_eps"])


def log_posterior(pv, subjects, grids, model):
    return JointPosterior(subjects, grids, model).log_posterior(pv)


def grad_log_posterior(pv, subjects, grids, model):
    return JointPosterior(subjects, grids, model).grad_log_posterior(pv)
