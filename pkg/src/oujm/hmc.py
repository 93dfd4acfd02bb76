"""Static-trajectory HMC with warm-up adaptation, plus convergence diagnostics.

Each iteration draws a leapfrog count uniformly from ``1..max_leapfrog`` and runs a
fixed-length trajectory followed by a Metropolis correction.  During warm-up the step
size is tuned by dual averaging and a diagonal inverse mass matrix is estimated over a
doubling sequence of windows (75 draws initial buffer, 25-draw first window, 50 draws
terminal buffer, shrunk proportionally for short warm-ups).  After warm-up the kernel is
frozen.

Per-chain random streams come from ``np.random.SeedSequence(seed).spawn(chains)``; the
stream of chain ``c`` depends only on ``(seed, c)``.
"""

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import jax
import jax.numpy as jnp
import numpy as np

from .errors import DomainError, InitializationError, StructuralError

jax.config.update("jax_enable_x64", True)

log = logging.getLogger(__name__)

# dual averaging constants
DA_GAMMA = 0.05
DA_T0 = 10.0
DA_KAPPA = 0.75
# an energy error above this (or a non-finite Hamiltonian) marks a divergence
MAX_ENERGY_ERROR = 1000.0
MAX_CONSECUTIVE_DIVERGENCES = 100
INIT_RETRIES = 10
INIT_RADIUS = 2.0


@dataclass
class SamplerConfig:
    chains: int = 1
    iterations: int = 2000
    warmup: int = 1000
    seed: int = 0
    target_accept: float = 0.8
    max_leapfrog: int = 32
    init: Optional[np.ndarray] = None
    init_step_size: float = 0.1
    parallel: bool = False

    def __post_init__(self):
        if self.chains < 1:
            raise DomainError("chains must be >= 1")
        if not 0 <= self.warmup < self.iterations:
            raise DomainError("need 0 <= warmup < iterations")
        if not 0.0 < self.target_accept < 1.0:
            raise DomainError("target_accept must lie in (0, 1)")
        if self.max_leapfrog < 1:
            raise DomainError("max_leapfrog must be >= 1")

    def to_dict(self):
        d = asdict(self)
        d["init"] = None if self.init is None else "provided"
        return d


@dataclass
class PosteriorDraws:
    """Post-warm-up draws, shape ``(chains, iterations - warmup, dim)``, unconstrained scale."""

    draws: np.ndarray
    names: list
    log_density: np.ndarray
    divergent: np.ndarray
    accept_stat: np.ndarray
    n_leapfrog: np.ndarray
    step_size: np.ndarray
    inv_mass: np.ndarray
    warmup_step_size: np.ndarray
    warmup_divergent: np.ndarray
    config: dict = field(default_factory=dict)

    @property
    def n_chains(self):
        return self.draws.shape[0]

    @property
    def n_draws(self):
        return self.draws.shape[1]

    def pooled(self):
        return self.draws.reshape(-1, self.draws.shape[-1])

    def column(self, name):
        return self.draws[:, :, self.names.index(name)]

    def divergence_rate(self):
        return float(self.divergent.mean())

    def metadata(self):
        return {
            "config": self.config,
            "names": list(self.names),
            "step_size": self.step_size.tolist(),
            "inv_mass": self.inv_mass.tolist(),
            "divergent_post_warmup": int(self.divergent.sum()),
            "divergent_warmup": int(self.warmup_divergent.sum()),
            "mean_accept_stat": self.accept_stat.mean(axis=1).tolist(),
        }


class _Kernel:
    """Jitted log-density, gradient and trajectory for one target."""

    def __init__(self, logdensity):
        vg = jax.value_and_grad(logdensity)
        self.value_and_grad = jax.jit(vg)

        def trajectory(x, r, lp, g, eps, n_steps, inv_mass):
            h0 = -lp + 0.5 * jnp.sum(inv_mass * r * r)

            def cond(c):
                return (c[0] < n_steps) & ~c[5]

            def body(c):
                i, x, r, lp, g, _, acc_sum = c
                r = r + 0.5 * eps * g
                x = x + eps * inv_mass * r
                lp, g = vg(x)
                r = r + 0.5 * eps * g
                h = -lp + 0.5 * jnp.sum(inv_mass * r * r)
                bad = ~jnp.isfinite(h) | (h - h0 > MAX_ENERGY_ERROR)
                acc = jnp.where(bad, 0.0, jnp.exp(jnp.minimum(h0 - h, 0.0)))
                return i + 1, x, r, lp, g, bad, acc_sum + acc

            init = (jnp.zeros((), dtype=jnp.int32), x, r, lp, g, jnp.zeros((), dtype=bool), jnp.zeros(()))
            _, x, r, lp, g, bad, acc_sum = jax.lax.while_loop(cond, body, init)
            h = -lp + 0.5 * jnp.sum(inv_mass * r * r)
            # steps skipped after a divergence count as zero acceptance
            return x, lp, g, bad, h0 - h, acc_sum / n_steps

        self.trajectory = jax.jit(trajectory)

    def step(self, x, lp, g, eps, n_steps, inv_mass, rng):
        """One HMC transition; returns ``(x, lp, g, accept_stat, divergent, path_accept)``.

        ``accept_stat`` is the end-point acceptance probability; ``path_accept`` averages
        it over every intermediate leapfrog point and drives step-size adaptation.
        """
        r = rng.standard_normal(x.size) / np.sqrt(inv_mass)
        xn, lpn, gn, bad, dh, path_acc = self.trajectory(x, r, lp, g, eps, n_steps, inv_mass)
        bad = bool(bad)
        dh = float(dh)
        accept_stat = 0.0 if bad else min(1.0, math.exp(min(dh, 0.0)))
        if not bad and math.log(rng.random()) < dh:
            return np.asarray(xn), float(lpn), np.asarray(gn), accept_stat, bad, float(path_acc)
        return x, lp, g, accept_stat, bad, float(path_acc)


def adaptation_windows(warmup):
    """End indices (exclusive) of the mass-matrix windows and the first window start."""
    if warmup < 20:
        return [], warmup
    init_buffer, term_buffer, base = 75, 50, 25
    if init_buffer + base + term_buffer > warmup:
        init_buffer = int(0.15 * warmup)
        term_buffer = int(0.1 * warmup)
        base = warmup - init_buffer - term_buffer
    ends = []
    start, size = init_buffer, base
    last = warmup - term_buffer
    while start < last:
        end = start + size
        if end + 2 * size > last:
            end = last
        ends.append(end)
        start, size = end, 2 * size
    return ends, init_buffer


class _DualAveraging:
    def __init__(self, eps, target):
        self.target = target
        self.restart(eps)

    def restart(self, eps):
        self.mu = math.log(10.0 * eps)
        self.m = 0
        self.h_bar = 0.0
        self.log_eps_bar = 0.0
        self.log_eps = math.log(eps)

    def recenter(self, eps):
        # after a mass-matrix update only the shrinkage point moves; the running
        # statistics are kept so the final averaged step is not dominated by a short
        # terminal window
        self.mu = math.log(10.0 * eps)

    def update(self, accept_stat):
        self.m += 1
        w = 1.0 / (self.m + DA_T0)
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_stat)
        self.log_eps = self.mu - math.sqrt(self.m) / DA_GAMMA * self.h_bar
        eta = self.m ** -DA_KAPPA
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar
        return math.exp(self.log_eps)

    @property
    def final(self):
        return math.exp(self.log_eps_bar)


def _reasonable_step(kernel, x, lp, g, eps, inv_mass, rng):
    """Double or halve ``eps`` until a single leapfrog step crosses acceptance 0.8."""
    def log_ratio(e):
        r = rng.standard_normal(x.size) / np.sqrt(inv_mass)
        _, _, _, bad, dh, _ = kernel.trajectory(x, r, lp, g, e, 1, inv_mass)
        return -np.inf if bool(bad) else float(dh)

    direction = 1.0 if log_ratio(eps) > math.log(0.8) else -1.0
    for _ in range(50):
        new = eps * 2.0 ** direction
        if (log_ratio(new) > math.log(0.8)) != (direction > 0):
            return new if direction < 0 else eps
        eps = new
    return eps


def _initial_point(kernel, config, dim, rng):
    base = None if config.init is None else np.asarray(config.init, dtype=float)
    if base is not None and base.shape != (dim,):
        raise StructuralError(f"init has shape {base.shape}, expected ({dim},)")
    tried = []
    for attempt in range(INIT_RETRIES + 1):
        if base is None:
            x = rng.uniform(-INIT_RADIUS, INIT_RADIUS, size=dim)
        elif attempt == 0:
            x = base.copy()
        else:
            x = base + 0.01 * attempt * rng.standard_normal(dim)
        lp, g = kernel.value_and_grad(x)
        lp, g = float(lp), np.asarray(g)
        if math.isfinite(lp) and np.all(np.isfinite(g)):
            return x, lp, g
        tried.append(lp)
    raise InitializationError(f"no finite log density after {INIT_RETRIES} jitter retries (values {tried[:3]} ...)")


def _run_chain(kernel, config, dim, seed_seq, chain):
    rng = np.random.default_rng(seed_seq)
    x, lp, g = _initial_point(kernel, config, dim, rng)
    inv_mass = np.ones(dim)
    eps = _reasonable_step(kernel, x, lp, g, config.init_step_size, inv_mass, rng)
    da = _DualAveraging(eps, config.target_accept)
    ends, win_start = adaptation_windows(config.warmup)
    ends = set(ends)
    n_keep = config.iterations - config.warmup
    out = {
        "draws": np.empty((n_keep, dim)),
        "log_density": np.empty(n_keep),
        "divergent": np.zeros(n_keep, dtype=bool),
        "accept_stat": np.empty(n_keep),
        "n_leapfrog": np.empty(n_keep, dtype=int),
        "warmup_step_size": np.empty(config.warmup),
        "warmup_divergent": np.zeros(config.warmup, dtype=bool),
    }
    w_n, w_mean, w_m2 = 0, np.zeros(dim), np.zeros(dim)
    streak = 0
    for it in range(config.iterations):
        n_steps = int(rng.integers(1, config.max_leapfrog + 1))
        x, lp, g, acc, div, path_acc = kernel.step(x, lp, g, eps, n_steps, inv_mass, rng)
        if it < config.warmup:
            out["warmup_step_size"][it] = eps
            out["warmup_divergent"][it] = div
            streak = streak + 1 if div else 0
            if streak >= MAX_CONSECUTIVE_DIVERGENCES:
                raise InitializationError(
                    f"chain {chain}: {streak} consecutive divergences during warm-up "
                    f"(iteration {it}, step size {eps:.3g}, log density {lp:.6g})"
                )
            eps = da.update(path_acc)
            if win_start <= it < max(ends, default=0):
                w_n += 1
                delta = x - w_mean
                w_mean += delta / w_n
                w_m2 += delta * (x - w_mean)
            if it + 1 in ends:
                var = w_m2 / max(w_n - 1, 1)
                inv_mass = (w_n / (w_n + 5.0)) * var + 1e-3 * (5.0 / (w_n + 5.0))
                w_n, w_mean, w_m2 = 0, np.zeros(dim), np.zeros(dim)
                eps = _reasonable_step(kernel, x, lp, g, eps, inv_mass, rng)
                da.recenter(eps)
            if it + 1 == config.warmup:
                eps = da.final
        else:
            k = it - config.warmup
            out["draws"][k] = x
            out["log_density"][k] = lp
            out["divergent"][k] = div
            out["accept_stat"][k] = acc
            out["n_leapfrog"][k] = n_steps
    out["step_size"] = eps
    out["inv_mass"] = inv_mass
    return out


def _resolve_target(target, dim, names):
    if hasattr(target, "logdensity_fn"):
        fn = target.logdensity_fn()
        dim = target.dim if dim is None else dim
        names = list(target.layout.names) if names is None else names
    elif callable(target):
        fn = target
    else:
        raise StructuralError("target must be a posterior object or a log-density callable")
    if dim is None:
        raise StructuralError("dim is required for a bare log-density callable")
    if names is None:
        names = [f"x[{k + 1}]" for k in range(dim)]
    if len(names) != dim:
        raise StructuralError("names do not match the dimension")
    return fn, dim, list(names)


def sample(config, target, dim=None, names=None):
    """Run ``config.chains`` chains on ``target`` and collect post-warm-up draws.

    ``target`` is either a posterior object (with ``logdensity_fn``, ``dim`` and
    ``layout``) or a JAX-traceable callable mapping a flat vector to a log density, in
    which case ``dim`` is required.
    """
    fn, dim, names = _resolve_target(target, dim, names)
    kernel = _Kernel(fn)
    seeds = np.random.SeedSequence(config.seed).spawn(config.chains)
    if config.parallel and config.chains > 1:
        with ThreadPoolExecutor(max_workers=config.chains) as pool:
            results = list(pool.map(lambda c: _run_chain(kernel, config, dim, seeds[c], c), range(config.chains)))
    else:
        results = [_run_chain(kernel, config, dim, seeds[c], c) for c in range(config.chains)]
    stack = lambda key: np.stack([np.asarray(r[key]) for r in results])
    return PosteriorDraws(
        draws=stack("draws"),
        names=names,
        log_density=stack("log_density"),
        divergent=stack("divergent"),
        accept_stat=stack("accept_stat"),
        n_leapfrog=stack("n_leapfrog"),
        step_size=stack("step_size"),
        inv_mass=stack("inv_mass"),
        warmup_step_size=stack("warmup_step_size"),
        warmup_divergent=stack("warmup_divergent"),
        config=config.to_dict(),
    )


# -- diagnostics -------------------------------------------------------------------


def _as_chains(draws):
    a = np.asarray(draws, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise DomainError("expected draws with shape (chains, iterations)")
    return a


def _split(a):
    n = a.shape[1] // 2
    if n < 2:
        raise DomainError("need at least 4 draws per chain for split diagnostics")
    return np.concatenate([a[:, :n], a[:, -n:]], axis=0)


def split_rhat(draws):
    """Split-R̂ from between- and within-chain variances; NaN when undefined."""
    s = _split(_as_chains(draws))
    m, n = s.shape
    w = s.var(axis=1, ddof=1).mean()
    b = n * s.mean(axis=1).var(ddof=1)
    if not w > 0:
        return float("nan")
    var_plus = (n - 1) / n * w + b / n
    return float(math.sqrt(var_plus / w))


def _autocov(x):
    n = x.size
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x - x.mean(), size)
    return np.fft.irfft(f * np.conj(f), size)[:n] / n


def ess(draws):
    """Multi-chain ESS with Geyer's initial positive (monotone) sequence truncation."""
    s = _as_chains(draws)
    m, n = s.shape
    if n < 4:
        raise DomainError("need at least 4 draws per chain")
    acov = np.stack([_autocov(c) for c in s])
    chain_var = acov[:, 0] * n / (n - 1)
    w = chain_var.mean()
    if not w > 0:
        return float("nan")
    var_plus = w * (n - 1) / n
    if m > 1:
        var_plus += s.mean(axis=1).var(ddof=1)
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # sums of adjacent pairs, truncated at the first non-positive pair, made monotone
    pairs = rho[: 2 * (n // 2)].reshape(-1, 2).sum(axis=1)
    k = 0
    while k < pairs.size and pairs[k] > 0:
        k += 1
    pairs = np.minimum.accumulate(pairs[:k]) if k else pairs[:1]
    tau = -1.0 + 2.0 * pairs.sum()
    tau = max(tau, 1.0 / math.log10(m * n))
    return float(m * n / tau)


def rank_normalize(draws):
    from scipy.special import ndtri
    from scipy.stats import rankdata

    s = _as_chains(draws)
    r = rankdata(s, method="average").reshape(s.shape)
    return ndtri((r - 0.375) / (s.size + 0.25))


def rhat_ess(draws):
    """Per-parameter ``(split-R̂, bulk ESS)`` for draws of shape ``(chains, n, dim)``.

    Bulk ESS is computed on rank-normalized split chains.  Constant parameters give NaN
    for both values (undefined).
    """
    d = np.asarray(draws.draws if isinstance(draws, PosteriorDraws) else draws, dtype=float)
    if d.ndim == 2:
        d = d[None]
    out = np.empty((d.shape[2], 2))
    for k in range(d.shape[2]):
        col = d[:, :, k]
        if np.ptp(col) == 0:
            out[k] = np.nan
            continue
        out[k, 0] = split_rhat(col)
        out[k, 1] = ess(_split(rank_normalize(col)))
    return out


def summarize(draws, probs=(0.05, 0.95), names=None):
    """Median and empirical quantiles (linear interpolation between order statistics).

    ``draws`` is ``(n,)`` or ``(n, dim)`` pooled, or a :class:`PosteriorDraws`.
    Returns a dict mapping each name to ``{"median": .., "q<prob>": ..}``.
    """
    if isinstance(draws, PosteriorDraws):
        names = names or draws.names
        draws = draws.pooled()
    a = np.asarray(draws, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.shape[0] == 0:
        raise DomainError("no draws to summarize")
    probs = tuple(float(p) for p in probs)
    if any(not 0.0 < p < 1.0 for p in probs):
        raise DomainError("probabilities must lie in (0, 1)")
    if names is None:
        names = [f"x[{k + 1}]" for k in range(a.shape[1])]
    q = np.quantile(a, (0.5,) + probs, axis=0, method="linear")
    return {
        name: dict([("median", float(q[0, k]))] + [(f"q{p:g}", float(q[i + 1, k])) for i, p in enumerate(probs)])
        for k, name in enumerate(names)
    }


def write_metadata(draws, path, extra=None):
    meta = draws.metadata()
    if extra:
        meta.update(extra)
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return path


def save_raw(draws, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    np.savez_compressed(
        path,
        draws=draws.draws,
        log_density=draws.log_density,
        divergent=draws.divergent,
        accept_stat=draws.accept_stat,
        n_leapfrog=draws.n_leapfrog,
        step_size=draws.step_size,
        inv_mass=draws.inv_mass,
        warmup_step_size=draws.warmup_step_size,
        warmup_divergent=draws.warmup_divergent,
        names=np.array(draws.names),
    )


def load_raw(path):
    with np.load(path) as f:
        return PosteriorDraws(
            draws=f["draws"],
            names=[str(n) for n in f["names"]],
            log_density=f["log_density"],
            divergent=f["divergent"],
            accept_stat=f["accept_stat"],
            n_leapfrog=f["n_leapfrog"],
            step_size=f["step_size"],
            inv_mass=f["inv_mass"],
            warmup_step_size=f["warmup_step_size"],
            warmup_divergent=f["warmup_divergent"],
        )
