import numpy as np
import pytest
from scipy.integrate import quad

from oujm import hazard
from oujm.errors import DimensionError, DomainError, RangeError
from oujm.dfm import SubjectRecord


def test_grid_hand_example():
    g = hazard.build_grid([0.0, 5.0, 10.0], 12.0, 1.2)
    np.testing.assert_allclose(g.points, [0, 1.2, 2.4, 3.6, 5, 6, 7.2, 8.4, 9.6, 10, 10.8, 12])
    np.testing.assert_array_equal(g.meas_index, [0, 4, 9])
    assert g.role[4] == hazard.MEASUREMENT and g.role[-1] == hazard.TERMINAL and g.role[1] == hazard.FILLER


def test_grid_without_fillers():
    g = hazard.build_grid([1.0, 3.0], 4.0, None)
    np.testing.assert_array_equal(g.points, [0.0, 1.0, 3.0, 4.0])


def test_grid_properties(rng):
    for _ in range(200):
        w = rng.uniform(0.1, 2.0)
        te = rng.uniform(0.5, 20)
        meas = np.sort(rng.uniform(0, te, size=rng.integers(0, 6)))
        meas = np.unique(meas)
        g = hazard.build_grid(meas, te, w)
        assert g.points[0] == 0 and g.points[-1] == te
        assert np.all(np.diff(g.points) > 0)
        np.testing.assert_array_equal(g.points[g.meas_index], meas)
        anchors = np.union1d(meas, [te])
        fill = g.points[g.role == hazard.FILLER]
        fill = fill[fill > 0]
        if fill.size:
            assert np.min(np.abs(fill[:, None] - anchors[None])) > hazard.DROP_FRACTION * w
            np.testing.assert_allclose(fill / w, np.round(fill / w), atol=1e-9)


def test_grid_rejects():
    with pytest.raises(DomainError):
        hazard.build_grid([0.0], 1.0, 0.0)
    with pytest.raises(DomainError):
        hazard.build_grid([2.0], 1.0)


def test_trapezoid_exact_for_linear():
    pts = np.array([0.0, 0.5, 2.0, 3.0])
    assert hazard.trapezoid(1.0 + 2.0 * pts, pts) == pytest.approx(3.0 + 9.0)


def test_constant_hazard_cumulative():
    spec = hazard.HazardSpec(beta=[0.5, -0.2], beta0=-2.0)
    g = hazard.build_grid([0.0, 1.0], 3.0)
    eta = np.tile([[0.4], [1.0]], g.M)
    ref = 3.0 * np.exp(-2.0 + 0.2 - 0.2)
    assert hazard.cum_hazard(spec, g, eta) == pytest.approx(ref, rel=1e-13)


def test_trapezoid_converges_to_integral():
    spec = hazard.HazardSpec(beta=[1.0, 0.0], beta0=-1.0)
    ref = quad(lambda t: np.exp(-1.0 + np.sin(t)), 0, 6)[0]
    errs = []
    for w in (0.4, 0.2, 0.1):
        g = hazard.build_grid([], 6.0, w)
        eta = np.vstack([np.sin(g.points), np.zeros(g.M)])
        errs.append(abs(hazard.cum_hazard(spec, g, eta) - ref))
    assert errs[2] < errs[1] < errs[0] and errs[2] < 1e-2


def test_weibull_baseline():
    spec = hazard.HazardSpec(baseline="weibull", shape=1.5, scale=2.0)
    t = np.array([0.5, 1.0, 4.0])
    np.testing.assert_allclose(np.exp(hazard.log_baseline(spec, t)), 1.5 / 2.0 * (t / 2.0) ** 0.5)
    assert hazard.hazard_eval_times(spec, np.array([0.0, 1.0]))[0] == 0.5


def test_piecewise_segments():
    cut = hazard.equal_cutpoints(10.0, 5)
    np.testing.assert_allclose(cut, [0, 2, 4, 6, 8, 10])
    np.testing.assert_array_equal(hazard.segment_index(cut, [0.0, 2.0, 2.0001, 10.0]), [0, 0, 1, 4])
    spec = hazard.HazardSpec(baseline="piecewise", cutpoints=cut, log_levels=np.arange(5.0))
    np.testing.assert_array_equal(hazard.log_baseline(spec, [1.0, 9.0]), [0.0, 4.0])
    with pytest.raises(RangeError):
        hazard.segment_index(cut, [11.0])


def test_surv_loglik():
    spec = hazard.HazardSpec(beta=[1.0, 1.0], beta0=-1.0)
    s = SubjectRecord("a", [0.0], np.zeros((4, 1)), 2.0, 1)
    g = hazard.build_grid(s.meas_times, s.event_time)
    eta = np.zeros((2, g.M))
    assert hazard.surv_loglik(spec, s, g, eta) == pytest.approx(-1.0 - 2.0 * np.exp(-1.0))
    with pytest.raises(DomainError):
        hazard.surv_loglik(spec, s, hazard.build_grid([0.0], 3.0), np.zeros((2, 5)))


def test_spec_validation():
    with pytest.raises(DomainError):
        hazard.HazardSpec(baseline="gompertz")
    with pytest.raises(DomainError):
        hazard.HazardSpec(baseline="weibull", shape=0.0)
    with pytest.raises(DimensionError):
        hazard.HazardSpec(baseline="piecewise", cutpoints=[0, 1, 2], log_levels=[0.0])
    with pytest.raises(DimensionError):
        hazard.hazard_at(hazard.HazardSpec(), 1.0, np.zeros(3))
