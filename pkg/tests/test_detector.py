import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special, stats

from noisesig.detector import (
    CusumState,
    DetectorConfig,
    MeanShiftModel,
    calibrate_cusum,
    chi2_cdf,
    chi2_inv_cdf,
    cusum_paths,
    cusum_step,
    decide,
    detection_probability,
    first_alarm,
    geometric_grid,
    noncentral_chi2_cdf,
    regularized_gamma_p,
    simulate_arl,
)
from noisesig.signature import NominalModel


def _run(state, xs):
    flags = []
    for x in xs:
        state, above = cusum_step(state, x)
        flags.append(above)
    return state, flags


@pytest.mark.parametrize("a", [0.5, 1.0, 3.0, 12.5, 60.0])
@pytest.mark.parametrize("x", [1e-3, 0.5, 2.0, 11.0, 40.0, 150.0])
def test_incomplete_gamma_vs_scipy(a, x):
    assert regularized_gamma_p(a, x) == pytest.approx(special.gammainc(a, x), abs=1e-13)


def test_incomplete_gamma_domain():
    assert regularized_gamma_p(2.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        regularized_gamma_p(0.0, 1.0)
    with pytest.raises(ValueError):
        regularized_gamma_p(1.0, -1.0)


@given(st.integers(1, 60), st.floats(0.0, 300.0))
def test_chi2_cdf_property(d, x):
    assert chi2_cdf(d, x) == pytest.approx(stats.chi2.cdf(x, d), abs=1e-12)


def test_chi2_quantiles():
    assert chi2_inv_cdf(2, 1 - math.exp(-1)) == pytest.approx(2.0, abs=1e-9)
    assert chi2_inv_cdf(6, 0.95) == pytest.approx(12.5916, abs=1e-4)
    assert chi2_inv_cdf(6, 0.95) == pytest.approx(stats.chi2.ppf(0.95, 6), abs=1e-9)
    assert chi2_inv_cdf(1, 0.6827) == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(ValueError):
        chi2_inv_cdf(3, 1.0)
    with pytest.raises(ValueError):
        chi2_inv_cdf(0, 0.5)
    with pytest.raises(ValueError):
        chi2_inv_cdf(2.5, 0.5)


@given(st.integers(1, 40), st.floats(0.001, 0.999))
def test_quantile_inverts_cdf(d, p):
    assert chi2_cdf(d, chi2_inv_cdf(d, p)) == pytest.approx(p, abs=1e-10)


@pytest.mark.parametrize("d", [1, 6, 12])
@pytest.mark.parametrize("lam", [0.0, 1.0, 9.0, 25.0, 200.0])
def test_noncentral_vs_scipy(d, lam):
    for x in (0.5, d, 2 * d + lam, 4 * (d + lam)):
        want = stats.chi2.cdf(x, d) if lam == 0 else stats.ncx2.cdf(x, d, lam)
        assert noncentral_chi2_cdf(d, lam, x) == pytest.approx(want, abs=1e-10)


def test_noncentral_zero_is_central():
    for x in (0.1, 3.0, 20.0):
        assert noncentral_chi2_cdf(5, 0.0, x) == chi2_cdf(5, x)


def test_noncentral_monte_carlo(rng):
    eta = chi2_inv_cdf(6, 0.95)
    m = np.zeros(6)
    m[0] = 3.0
    draws = np.sum((rng.normal(size=(1_000_000, 6)) + m) ** 2, axis=1)
    assert noncentral_chi2_cdf(6, 9.0, eta) == pytest.approx(np.mean(draws <= eta), abs=0.002)


def test_noncentral_orderings():
    xs = np.linspace(0, 60, 25)
    lams = [0, 1, 4, 9, 16, 25]
    grid = np.array([[noncentral_chi2_cdf(6, lam, x) for x in xs] for lam in lams])
    assert np.all(np.diff(grid, axis=1) >= -1e-15)
    assert np.all(np.diff(grid, axis=0) <= 1e-15)


def test_detection_probability():
    eta = chi2_inv_cdf(6, 0.95)
    assert detection_probability(6, 0.0, eta) == pytest.approx(0.05, abs=1e-9)
    pd = [detection_probability(6, lam, eta) for lam in (1, 4, 9, 16, 25)]
    assert all(b > a for a, b in zip(pd, pd[1:]))


def test_detection_probability_monte_carlo(rng):
    eta = chi2_inv_cdf(6, 0.95)
    draws = np.sum((rng.normal(size=(400_000, 6)) + [3, 0, 0, 0, 0, 0]) ** 2, axis=1)
    assert detection_probability(6, 9.0, eta) == pytest.approx(np.mean(draws > eta), abs=0.005)


def test_decide_strict():
    cfg = DetectorConfig.from_alpha(0.05, 6)
    assert not decide(0.0, cfg)
    assert not decide(cfg.eta, cfg)
    assert decide(np.nextafter(cfg.eta, np.inf), cfg)
    with pytest.raises(ValueError):
        DetectorConfig.from_alpha(1.0, 6)


def test_nominal_false_alarm_rate(rng):
    cfg = DetectorConfig.from_alpha(0.05, 6)
    d2 = rng.chisquare(6, size=100_000)
    rate = np.mean([decide(x, cfg) for x in d2])
    assert abs(rate - 0.05) <= 3 * math.sqrt(0.05 * 0.95 / 100_000)


def test_mean_shift_noncentrality(rng):
    a = rng.normal(size=(4, 4))
    cov = a @ a.T + np.eye(4)
    model = NominalModel.from_dict({"gamma": 0, "mean": [0.0] * 4, "covariance": cov.tolist()})
    delta = rng.normal(size=4)
    shift = MeanShiftModel.from_model(delta, model)
    assert shift.noncentrality == pytest.approx(delta @ np.linalg.solve(cov, delta), rel=1e-9)


def test_cusum_zero_increment():
    state, flags = _run(CusumState(8.0, 30.0), [8.0] * 100)
    assert state.s == 0.0 and not any(flags) and not state.alarmed


def test_cusum_records_first_alarm_and_keeps_going():
    state, flags = _run(CusumState(1.0, 5.0), [4.0, 4.0, 4.0, 0.0, 4.0])
    # S = 3, 6, 9, 8, 11
    assert flags == [False, True, True, True, True]
    assert state.alarm_frame == 1 and state.s == 11.0 and state.frame_count == 5
    reset = state.reset()
    assert reset.s == 0.0 and not reset.alarmed and reset.frame_count == 5


def test_cusum_tie_is_not_alarm():
    state, flags = _run(CusumState(0.0, 5.0), [5.0])
    assert flags == [False] and not state.alarmed


def test_cusum_requires_positive_threshold():
    with pytest.raises(ValueError):
        CusumState(1.0, 0.0)


def test_cusum_renewal(rng):
    x = rng.chisquare(6, size=100_000)
    # zero drift: the reflected walk is null recurrent, so it keeps returning to 0
    zeros = np.flatnonzero(cusum_paths(x, 6.0) == 0)
    assert len(zeros) > 100
    # default drift d + 1 is positive recurrent
    assert np.mean(cusum_paths(x, 7.0) == 0) > 0.30


def test_cusum_persistent_shift(rng):
    runs, onset = 1000, 100
    pre = rng.chisquare(6, size=(runs, onset))
    post = np.sum((rng.normal(size=(runs, 200, 6)) + [4, 0, 0, 0, 0, 0]) ** 2, axis=-1)
    paths = cusum_paths(np.concatenate([pre, post], axis=1), 8.0)
    post_paths = cusum_paths(post, 8.0)
    alarm = first_alarm(post_paths, 30.0)
    assert np.mean((alarm >= 0) & (alarm < 50)) >= 0.95
    assert paths.shape == (runs, 300)


@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=60), st.floats(0, 20))
def test_cusum_paths_match_steps(xs, nu):
    state = CusumState(nu, 1e9)
    out = []
    for x in xs:
        state, _ = cusum_step(state, x)
        out.append(state.s)
        assert state.s >= 0
    assert np.allclose(cusum_paths(np.array(xs), nu), out)


@given(st.lists(st.floats(0, 30, allow_nan=False), min_size=1, max_size=60), st.floats(0, 20))
def test_cusum_zero_when_running_sum_nonpositive(xs, nu):
    s = cusum_paths(np.array(xs), nu)
    running = np.cumsum(np.array(xs) - nu)
    # S_m = running_m - min(0, min_{k<=m} running_k)
    expected = running - np.minimum(0.0, np.minimum.accumulate(running))
    assert np.allclose(s, expected, atol=1e-9)


def test_first_alarm_strict():
    paths = np.array([[0.0, 5.0, 6.0], [1.0, 2.0, 3.0]])
    assert first_alarm(paths, 5.0).tolist() == [2, -1]


def test_geometric_grid():
    g = geometric_grid()
    assert g[0] == 0.5 and g[-1] >= 1e4
    assert np.allclose(g[1:] / g[:-1], 1.01)


def test_calibrate_trivial_target():
    cal = calibrate_cusum(6, 8.0, 1.0, n_streams=500, seed=1)
    assert cal.h_c == geometric_grid()[0]


def test_calibration_monotone_in_target():
    hs = [calibrate_cusum(6, 8.0, t, n_streams=2000, seed=3).h_c for t in (20, 100, 500, 2000)]
    assert hs == sorted(hs)


def test_calibration_reproduced_independently():
    cal = calibrate_cusum(6, 8.0, 1000, n_streams=4000, seed=11)
    assert cal.ci_low <= cal.arl <= cal.ci_high
    arl, _ = simulate_arl(6, 8.0, cal.h_c, 4000, seed=12)
    assert abs(arl / 1000 - 1) <= 0.2


def test_calibration_unreachable():
    with pytest.raises(RuntimeError):
        calibrate_cusum(6, 8.0, 1e6, n_streams=200, seed=0, grid=np.array([1.0, 2.0, 3.0]))


def test_calibration_deterministic():
    a = calibrate_cusum(3, 4.0, 200, n_streams=1000, seed=5)
    b = calibrate_cusum(3, 4.0, 200, n_streams=1000, seed=5)
    assert a == b
