import math

import jax.numpy as jnp
import numpy as np
import pytest

from oujm import hmc
from oujm.errors import DomainError, InitializationError


def gaussian(mean, cov):
    prec = jnp.asarray(np.linalg.inv(cov))
    mean = jnp.asarray(mean)

    def lp(x):
        d = x - mean
        return -0.5 * d @ prec @ d

    return lp


def test_iid_normal_moments():
    mean = np.linspace(-2, 2, 5)
    sd = np.array([0.5, 1.0, 2.0, 1.0, 3.0])
    cfg = hmc.SamplerConfig(iterations=3000, warmup=1000, seed=3)
    out = hmc.sample(cfg, gaussian(mean, np.diag(sd**2)), dim=5)
    d = out.pooled()
    assert np.all(np.abs(d.mean(axis=0) - mean) < 0.05 * np.maximum(sd, 1.0) * 2)
    np.testing.assert_allclose(d.std(axis=0), sd, rtol=0.1)
    assert out.divergence_rate() == 0.0


def test_correlated_target():
    cov = np.array([[1.0, 0.9], [0.9, 1.0]])
    cfg = hmc.SamplerConfig(iterations=3000, warmup=1000, seed=1)
    d = hmc.sample(cfg, gaussian(np.zeros(2), cov), dim=2).pooled()
    assert np.corrcoef(d.T)[0, 1] == pytest.approx(0.9, abs=0.03)


def test_step_size_frozen_after_warmup():
    cfg = hmc.SamplerConfig(iterations=600, warmup=300, seed=0)
    out = hmc.sample(cfg, gaussian(np.zeros(2), np.eye(2)), dim=2)
    assert out.step_size.shape == (1,)
    assert out.warmup_step_size.shape == (1, 300)
    assert np.all(np.isfinite(out.warmup_step_size)) and out.step_size[0] > 0


def test_bitwise_reproducible_and_parallel_equivalence():
    target = gaussian(np.zeros(3), np.eye(3))
    a = hmc.sample(hmc.SamplerConfig(chains=2, iterations=200, warmup=100, seed=11), target, dim=3)
    b = hmc.sample(hmc.SamplerConfig(chains=2, iterations=200, warmup=100, seed=11), target, dim=3)
    c = hmc.sample(hmc.SamplerConfig(chains=2, iterations=200, warmup=100, seed=11, parallel=True), target, dim=3)
    assert a.draws.tobytes() == b.draws.tobytes() == c.draws.tobytes()
    d = hmc.sample(hmc.SamplerConfig(chains=2, iterations=200, warmup=100, seed=12), target, dim=3)
    assert not np.array_equal(a.draws, d.draws)
    assert not np.array_equal(a.draws[0], a.draws[1])


def test_funnel_reports_divergences():
    def funnel(x):
        v = x[0]
        return -0.5 * v**2 / 9.0 - 0.5 * jnp.sum(x[1:] ** 2) * jnp.exp(-v) - 0.5 * (x.size - 1) * v

    out = hmc.sample(hmc.SamplerConfig(iterations=1000, warmup=500, seed=2), funnel, dim=10)
    assert out.divergent.sum() > 0
    assert np.isfinite(out.draws).all()


def test_unsupported_start_raises():
    def flat_nowhere(x):
        return jnp.where(x[0] > 1e6, 0.0, -jnp.inf)

    with pytest.raises(InitializationError):
        hmc.sample(hmc.SamplerConfig(iterations=20, warmup=10), flat_nowhere, dim=1)


def test_config_validation():
    with pytest.raises(DomainError):
        hmc.SamplerConfig(iterations=10, warmup=10)
    with pytest.raises(DomainError):
        hmc.SamplerConfig(target_accept=1.0)
    with pytest.raises(DomainError):
        hmc.SamplerConfig(chains=0)


def test_adaptation_windows_default():
    ends, start = hmc.adaptation_windows(1000)
    assert start == 75
    assert ends[-1] == 950
    np.testing.assert_array_equal(np.diff([start] + list(ends)), [25, 50, 100, 200, 500])


def test_rhat_hand_example():
    a = np.array([[1.0, 2.0, 3.0, 4.0], [2.0, 3.0, 4.0, 5.0]])
    s = np.array([[1.0, 2.0], [3.0, 4.0], [2.0, 3.0], [4.0, 5.0]])
    n = 2
    w = s.var(axis=1, ddof=1).mean()
    b = n * s.mean(axis=1).var(ddof=1)
    ref = math.sqrt(((n - 1) / n * w + b / n) / w)
    assert hmc.split_rhat(a) == pytest.approx(ref)


def test_rhat_detects_disagreeing_chains():
    rng = np.random.default_rng(0)
    good = rng.normal(size=(4, 1000))
    assert abs(hmc.split_rhat(good) - 1.0) < 0.01
    bad = good + np.array([0.0, 0.0, 0.0, 2.0])[:, None]
    assert hmc.split_rhat(bad) > 1.1


def test_ess_iid_and_ar1():
    rng = np.random.default_rng(0)
    iid = rng.normal(size=(4, 2000))
    assert hmc.ess(iid) == pytest.approx(8000, rel=0.15)
    phi = 0.8
    x = np.zeros((4, 5000))
    for t in range(1, 5000):
        x[:, t] = phi * x[:, t - 1] + rng.normal(size=4)
    ref = 20000 * (1 - phi) / (1 + phi)
    assert hmc.ess(x) == pytest.approx(ref, rel=0.2)


def test_rhat_ess_constant_column():
    d = np.zeros((2, 100, 2))
    d[:, :, 1] = np.random.default_rng(0).normal(size=(2, 100))
    out = hmc.rhat_ess(d)
    assert np.isnan(out[0]).all() and np.isfinite(out[1]).all()


def test_summarize_quantiles():
    s = hmc.summarize(np.arange(1.0, 102.0), probs=(0.05, 0.95))
    assert s["x[1]"] == {"median": 51.0, "q0.05": 6.0, "q0.95": 96.0}
    with pytest.raises(DomainError):
        hmc.summarize(np.zeros(3), probs=(0.0,))


def test_raw_round_trip(tmp_path):
    out = hmc.sample(hmc.SamplerConfig(iterations=60, warmup=30), gaussian(np.zeros(2), np.eye(2)), dim=2)
    path = tmp_path / "raw.npz"
    hmc.save_raw(out, str(path))
    back = hmc.load_raw(str(path))
    np.testing.assert_array_equal(back.draws, out.draws)
    assert back.names == out.names
