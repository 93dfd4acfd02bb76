import json
import os

import numpy as np
import pytest

from oujm import io, ou
from oujm import simulate as sm
from oujm.errors import DataError, DomainError


def test_truth_names():
    named = sm.SETTINGS[2].named()
    assert named["rho[1]"] == -0.273 and named["beta[2]"] == 0.8 and named["theta[2,1]"] == 0.8
    assert len(named) == 4 + 1 + 12 + 1 + 2


def test_streams_are_batch_independent():
    a = sm.simulate_subjects(sm.SimConfig(setting=2, n=6, seed=5))
    b = sm.simulate_subjects(sm.SimConfig(setting=2, n=3, seed=5))
    for x, y in zip(a[:3], b):
        np.testing.assert_array_equal(x.record.meas_times, y.record.meas_times)
        np.testing.assert_array_equal(x.record.y, y.record.y)


def test_deterministic_under_seed():
    a = sm.simulate_subjects(sm.SimConfig(setting=1, pattern="4", n=4, seed=9))
    b = sm.simulate_subjects(sm.SimConfig(setting=1, pattern="4", n=4, seed=9))
    for x, y in zip(a, b):
        assert x.record.event_time == y.record.event_time
        np.testing.assert_array_equal(x.record.y, y.record.y)


def test_subject_invariants():
    for s in sm.simulate_subjects(sm.SimConfig(setting=2, n=50, seed=1)):
        r = s.record
        assert r.meas_times[0] == 0.0
        assert np.all(r.meas_times <= r.event_time + 1e-12)
        assert r.event_time <= sm.HORIZON
        assert r.event == int(s.event_time_true <= min(s.censor_time, sm.HORIZON))
        np.testing.assert_allclose(r.meas_times / 0.01, np.round(r.meas_times / 0.01), atol=1e-6)


def test_regenerate_outcomes():
    sims = sm.simulate_subjects(sm.SimConfig(setting=2, n=3, seed=2))
    for s in sims:
        np.testing.assert_array_equal(sm.regenerate_outcomes(s, sm.SETTINGS[2]), s.record.y)


def test_latent_moments():
    # stationary correlation and lag covariance of the fine-grid latent paths
    sims = sm.simulate_subjects(sm.SimConfig(setting=2, n=400, seed=3), keep_paths=True)
    paths = np.stack([s.path.T for s in sims])  # (n, m, p)
    prm = sm.SETTINGS[2].ou_params
    x0 = paths[:, 0]
    np.testing.assert_allclose(np.cov(x0.T), prm.stationary_cov, atol=0.15)
    lag = int(0.5 / sm.FINE_STEP)
    pooled = np.concatenate([paths[:, j] for j in range(0, 4000, 400)])
    shifted = np.concatenate([paths[:, j + lag] for j in range(0, 4000, 400)])
    emp = pooled.T @ shifted / pooled.shape[0]
    np.testing.assert_allclose(emp, ou.marginal_cross_cov(prm, 0.5), atol=0.06)


def test_event_time_inversion_constant_hazard():
    rng = np.random.default_rng(0)
    path = np.zeros((2, 2001))
    times = [sm.simulate_event(np.log(0.5), [0.0, 0.0], path, 0.005, rng)[0] for _ in range(4000)]
    crossed = np.array(times) < 10.0
    assert np.mean(np.array(times)[crossed]) < 2.1
    assert np.mean(crossed) == pytest.approx(1 - np.exp(-5.0), abs=0.01)


def test_apply_censoring():
    t, d, keep = sm.apply_censoring(3.0, 5.0, 28.0, [0.0, 1.0, 4.0])
    assert (t, d) == (3.0, 1) and keep.tolist() == [0.0, 1.0]
    t, d, keep = sm.apply_censoring(np.inf, 2.0, 28.0, [0.0, 1.0, 4.0])
    assert (t, d) == (2.0, 0)


def test_emit_and_reload(tmp_path):
    cfg = sm.SimConfig(setting=2, n=5, seed=4)
    sims = sm.emit_dataset(cfg, str(tmp_path))
    meta = json.loads((tmp_path / "simconfig.json").read_text())
    assert meta["truth"]["rho[1]"] == -0.273
    subs = io.load_data(str(tmp_path / "long.csv"), str(tmp_path / "surv.csv"), meta["items"])
    for a, b in zip(sorted(subs, key=lambda s: int(s.id)), sims):
        np.testing.assert_array_equal(a.meas_times, b.record.meas_times)
        np.testing.assert_array_equal(a.y, b.record.y)
        assert a.event_time == b.record.event_time and a.event == b.record.event
    for name in ("truth.csv", "truth_subjects.csv", "long.csv", "surv.csv"):
        assert os.path.getsize(tmp_path / name) > 0


def test_timing_file_pattern(tmp_path):
    path = tmp_path / "timing.csv"
    path.write_text("id,time\na,0\na,1.5\na,3.25\nb,0\nb,2\n")
    sims = sm.simulate_subjects(sm.SimConfig(setting=1, pattern="file", timing_file=str(path), n=10, seed=0))
    for s in sims:
        assert s.record.meas_times.tolist() in ([0.0, 1.5, 3.25], [0.0, 2.0], [0.0, 1.5], [0.0])
    bad = tmp_path / "bad.csv"
    bad.write_text("id,time\na,x\n")
    with pytest.raises(DataError):
        sm.read_timing_file(str(bad))


def test_config_validation():
    with pytest.raises(DomainError):
        sm.SimConfig(pattern="3")
    with pytest.raises(DomainError):
        sm.SimConfig(setting=3)
    with pytest.raises(DomainError):
        sm.SimConfig(pattern="file")
