"""Synthetic joint datasets: OU latent paths, factor-model outcomes, EMA-style
measurement schedules, hazard-driven event times and censoring.

Every subject draws from its own RNG streams spawned from the master seed, so output
does not depend on how subjects are batched.
"""

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import ou, smallmat
from .dfm import SubjectRecord
from .errors import DataError, DomainError

HORIZON = 28.0
FINE_STEP = 0.005
TIME_RESOLUTION = 0.01
MASK_2F = [[1, 0], [1, 0], [0, 1], [0, 1]]

_STREAMS = ("timing", "latent", "event", "censor", "intercept", "noise")


@dataclass(frozen=True)
class TrueParams:
    theta: list
    rho: list
    lam: list
    sigma_u: list
    sigma_eps: list
    beta0: float
    beta: list
    mask: list = field(default_factory=lambda: [list(r) for r in MASK_2F])

    @property
    def ou_params(self):
        return ou.OUParams(theta=np.array(self.theta, dtype=float), rho=np.array(self.rho, dtype=float))

    def named(self):
        """Truth keyed by the parameter names used in fitted draws."""
        out = {}
        theta = np.asarray(self.theta)
        for i in range(theta.shape[0]):
            for j in range(theta.shape[1]):
                out[f"theta[{i + 1},{j + 1}]"] = float(theta[i, j])
        for k, v in enumerate(self.rho):
            out[f"rho[{k + 1}]"] = float(v)
        for name, vals in (("lambda", self.lam), ("sigma_u", self.sigma_u), ("sigma_eps", self.sigma_eps)):
            for k, v in enumerate(vals):
                out[f"{name}[{k + 1}]"] = float(v)
        out["beta0"] = float(self.beta0)
        for k, v in enumerate(self.beta):
            out[f"beta[{k + 1}]"] = float(v)
        return out


SETTINGS = {
    1: TrueParams(
        theta=[[1.8, 0.4], [1.5, 1.2]],
        rho=[-0.633],
        lam=[0.9, 0.5, 1.0, 0.8],
        sigma_u=[0.4, 0.5, 0.8, 1.0],
        sigma_eps=[0.2, 0.6, 0.3, 0.7],
        beta0=-2.5,
        beta=[-0.2, 0.3],
    ),
    2: TrueParams(
        theta=[[2.4, 0.4], [0.8, 2.0]],
        rho=[-0.273],
        lam=[0.9, 0.5, 1.0, 0.8],
        sigma_u=[0.4, 0.5, 0.8, 1.0],
        sigma_eps=[0.2, 0.3, 0.1, 0.2],
        beta0=-3.0,
        beta=[-0.4, 0.8],
    ),
}

# Number of measurement times drawn (besides the baseline occasion) per pattern/setting.
# Counts are tuned so post-censoring mean occasion counts hit the design targets.
MAX_DRAWS = {
    ("1", 1): 60,
    ("1", 2): 70,
    ("2", 1): 15,
    ("2", 2): 12,
    ("4", 1): 95,
    ("4", 2): 58,
}


@dataclass
class SimConfig:
    setting: Optional[int] = 1
    pattern: str = "1"
    n: int = 200
    seed: int = 0
    horizon: float = HORIZON
    params: Optional[TrueParams] = None
    max_draws: Optional[int] = None
    cosine_period: float = 2.0
    cosine_floor: float = 0.4
    timing_file: Optional[str] = None
    fine_step: float = FINE_STEP
    time_resolution: float = TIME_RESOLUTION
    censor_scale: float = 10.0
    censor_rate: float = 0.25

    def __post_init__(self):
        self.pattern = str(self.pattern)
        if self.pattern not in ("1", "2", "4", "file"):
            raise DomainError(f"unknown measurement pattern {self.pattern!r}")
        if self.n < 1:
            raise DomainError("need at least one subject")
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")
        if self.params is None:
            if self.setting not in SETTINGS:
                raise DomainError("give setting 1 or 2, or a custom parameter block")
            self.params = SETTINGS[self.setting]
        if self.pattern == "file" and not self.timing_file:
            raise DomainError("pattern 'file' needs a timing file")
        ratio = self.time_resolution / self.fine_step
        if abs(ratio - round(ratio)) > 1e-9:
            raise DomainError("time resolution must be a multiple of the fine step")

    @property
    def n_draws(self):
        if self.max_draws is not None:
            return int(self.max_draws)
        return MAX_DRAWS.get((self.pattern, self.setting), 60)


@dataclass
class SimSubject:
    record: SubjectRecord
    eta_meas: np.ndarray
    eta_terminal: np.ndarray
    u: np.ndarray
    event_time_true: float
    censor_time: float
    noise_seed: int
    path: Optional[np.ndarray] = None


def subject_streams(seed, n):
    """Per-subject generators, one per named stream."""
    out = []
    for ss in np.random.SeedSequence(seed).spawn(n):
        children = ss.spawn(len(_STREAMS))
        out.append({name: np.random.default_rng(c) for name, c in zip(_STREAMS, children)})
    return out


def _fine_candidates(horizon, resolution):
    n = int(round(horizon / resolution))
    return np.round(resolution * np.arange(1, n + 1), 10)


def cosine_weights(times, period=2.0, floor=0.4):
    w = np.abs(np.cos(2.0 * np.pi * times / period))
    return np.where(w < floor, 0.0, w)


def read_timing_file(path):
    """Per-subject measurement schedules from a CSV with columns ``id,time``."""
    import csv

    if not os.path.exists(path):
        raise FileNotFoundError(f"timing file not found: {path}")
    sched = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                sched.setdefault(row["id"], []).append(float(row["time"]))
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad timing row {row}") from exc
    if not sched:
        raise DataError(f"{path}: no timing rows")
    return [np.unique(v) for v in sched.values()]


def draw_measurement_times(config, rng, schedules=None):
    """Measurement times (sorted, including the baseline at 0) before censoring."""
    if config.pattern == "file":
        if schedules is None:
            schedules = read_timing_file(config.timing_file)
        times = schedules[rng.integers(len(schedules))]
        times = np.round(times / config.fine_step) * config.fine_step
        times = times[(times >= 0) & (times <= config.horizon)]
        return np.union1d([0.0], np.round(times, 10))
    cand = _fine_candidates(config.horizon, config.time_resolution)
    n = min(config.n_draws, cand.size)
    if config.pattern in ("1", "2"):
        picked = rng.choice(cand.size, size=n, replace=False)
    else:
        w = cosine_weights(cand, config.cosine_period, config.cosine_floor)
        n = min(n, int(np.count_nonzero(w)))
        picked = rng.choice(cand.size, size=n, replace=False, p=w / w.sum())
    return np.union1d([0.0], cand[picked])


def _ou_factors(params, step):
    v = params.stationary_cov
    cond = ou.conditional(params, step)
    return smallmat.chol_lower(v), cond.mean_map, smallmat.chol_lower(cond.cond_cov + ou.JITTER * np.eye(params.p))


def simulate_latent(params, fine_step, horizon, rng):
    """Exact OU path on ``0, fine_step, ..., horizon``; returns p x (horizon/fine_step + 1)."""
    ou._require_constraints(params.theta)
    m = int(round(horizon / fine_step)) + 1
    z = rng.standard_normal((m, params.p))
    return _recursion(params, fine_step, z[None])[0].T


def _recursion(params, step, z):
    """Vectorized exact transitions for innovations ``z`` of shape (n, m, p)."""
    l0, a, lc = _ou_factors(params, step)
    out = np.empty_like(z)
    eta = z[:, 0] @ l0.T
    out[:, 0] = eta
    noise = z @ lc.T
    for j in range(1, z.shape[1]):
        eta = eta @ a.T + noise[:, j]
        out[:, j] = eta
    return out


def cumulative_trapezoid(h, step):
    """Cumulative trapezoidal integral along the last axis, starting at 0."""
    inc = 0.5 * (h[..., 1:] + h[..., :-1]) * step
    return np.concatenate([np.zeros(h.shape[:-1] + (1,)), np.cumsum(inc, axis=-1)], axis=-1)


def simulate_event(beta0, beta, path, fine_step, rng):
    """Inverse-cumulative-hazard draw along a fine-grid path (p x m).

    Returns ``(time, crossed)``; without a crossing the time is the end of the path.
    """
    path = np.asarray(path, dtype=float)
    h = np.exp(beta0 + np.asarray(beta) @ path)
    e = rng.exponential(1.0)
    return _first_crossing(cumulative_trapezoid(h, fine_step), e, fine_step)


def _first_crossing(cum, e, step):
    m = cum.size
    hit = np.searchsorted(cum, e, side="left")
    if hit >= m:
        return (m - 1) * step, False
    if hit == 0:
        return 0.0, True
    lo, hi = cum[hit - 1], cum[hit]
    frac = (e - lo) / (hi - lo) if hi > lo else 1.0
    return (hit - 1 + frac) * step, True


def draw_censoring(config, rng):
    return config.censor_scale * rng.exponential(1.0 / config.censor_rate)


def apply_censoring(event_time, censor_time, horizon, meas_times):
    """``(T, delta, retained measurement times)``; the baseline occasion is always kept."""
    t = min(event_time, censor_time, horizon)
    delta = int(event_time <= censor_time and event_time <= horizon)
    meas = np.asarray(meas_times, dtype=float)
    keep = meas[(meas <= t) | (meas == 0.0)]
    return t, delta, keep


def simulate_subjects(config, keep_paths=False):
    """Simulate ``config.n`` subjects; returns a list of :class:`SimSubject`."""
    tp = config.params
    params = tp.ou_params
    mask = np.asarray(tp.mask)
    lam_mat = np.zeros(mask.shape)
    lam_mat[np.arange(mask.shape[0]), np.argmax(mask, axis=1)] = tp.lam
    sigma_u = np.asarray(tp.sigma_u, dtype=float)
    sigma_eps = np.asarray(tp.sigma_eps, dtype=float)
    step = config.fine_step
    schedules = read_timing_file(config.timing_file) if config.pattern == "file" else None

    streams = subject_streams(config.seed, config.n)
    meas_all = [draw_measurement_times(config, s["timing"], schedules) for s in streams]
    horizon = max(config.horizon, max(float(m[-1]) for m in meas_all))
    m = int(round(horizon / step)) + 1
    z = np.stack([s["latent"].standard_normal((m, params.p)) for s in streams])
    paths = _recursion(params, step, z)
    h = np.exp(tp.beta0 + paths @ np.asarray(tp.beta, dtype=float))
    cum = cumulative_trapezoid(h, step)

    out = []
    for i, s in enumerate(streams):
        event, crossed = _first_crossing(cum[i], s["event"].exponential(1.0), step)
        if not crossed:
            event = np.inf
        if config.pattern == "file":
            censor = float(meas_all[i][-1]) if meas_all[i][-1] > 0 else config.horizon
        else:
            censor = draw_censoring(config, s["censor"])
        t, delta, meas = apply_censoring(event, censor, config.horizon, meas_all[i])
        idx = np.rint(meas / step).astype(int)
        eta_meas = paths[i, idx].T
        u = sigma_u * s["intercept"].standard_normal(mask.shape[0])
        noise_seed = int(s["noise"].integers(2**63 - 1))
        eps = sigma_eps[:, None] * np.random.default_rng(noise_seed).standard_normal((mask.shape[0], meas.size))
        y = lam_mat @ eta_meas + u[:, None] + eps
        eta_t = _interp_path(paths[i], t, step)
        rec = SubjectRecord(id=f"{i + 1}", meas_times=meas, y=y, event_time=t, event=delta)
        out.append(
            SimSubject(
                record=rec,
                eta_meas=eta_meas,
                eta_terminal=eta_t,
                u=u,
                event_time_true=float(event),
                censor_time=float(censor),
                noise_seed=noise_seed,
                path=paths[i].T.copy() if keep_paths else None,
            )
        )
    return out


def _interp_path(path, t, step):
    x = t / step
    lo = min(int(np.floor(x)), path.shape[0] - 1)
    hi = min(lo + 1, path.shape[0] - 1)
    frac = x - lo
    return (1 - frac) * path[lo] + frac * path[hi]


def regenerate_outcomes(sim, true_params):
    """Recompute y from the stored latent values, intercepts and noise seed."""
    tp = true_params
    mask = np.asarray(tp.mask)
    lam_mat = np.zeros(mask.shape)
    lam_mat[np.arange(mask.shape[0]), np.argmax(mask, axis=1)] = tp.lam
    n = sim.eta_meas.shape[1]
    eps = np.asarray(tp.sigma_eps)[:, None] * np.random.default_rng(sim.noise_seed).standard_normal((mask.shape[0], n))
    return lam_mat @ sim.eta_meas + sim.u[:, None] + eps


def config_to_dict(config):
    d = asdict(config)
    d["n_draws"] = config.n_draws
    return d


def emit_dataset(config, out_dir):
    """Simulate and write ``long.csv``, ``surv.csv``, ``truth.csv``, ``truth_subjects.csv``
    and ``simconfig.json`` to ``out_dir``."""
    from . import io

    sims = simulate_subjects(config)
    os.makedirs(out_dir, exist_ok=True)
    items = [f"y{k + 1}" for k in range(len(config.params.mask))]
    io.write_dataset(out_dir, [s.record for s in sims], items)
    p = len(config.params.theta)
    eta_cols = [f"eta_{f + 1}" for f in range(p)]
    truth_rows = []
    subj_rows = []
    for s in sims:
        rec = s.record
        for j, t in enumerate(rec.meas_times):
            truth_rows.append([rec.id, t, "measurement"] + list(s.eta_meas[:, j]))
        truth_rows.append([rec.id, rec.event_time, "terminal"] + list(s.eta_terminal))
        subj_rows.append(
            [rec.id, s.event_time_true, s.censor_time, rec.event_time, rec.event]
            + list(s.u)
            + [s.noise_seed]
        )
    io.write_csv(os.path.join(out_dir, "truth.csv"), ["id", "time", "role"] + eta_cols, truth_rows)
    io.write_csv(
        os.path.join(out_dir, "truth_subjects.csv"),
        ["id", "event_time_true", "censor_time", "time", "event"] + [f"u_{k + 1}" for k in range(len(items))] + ["noise_seed"],
        subj_rows,
    )
    meta = {
        "config": config_to_dict(config),
        "truth": config.params.named(),
        "items": items,
        "time_unit": "days",
    }
    with open(os.path.join(out_dir, "simconfig.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return sims
