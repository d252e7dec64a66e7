import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from noisesig.hos import (
    DEFAULT_LAGS,
    CumulantGrid,
    LagError,
    LagSet,
    average_grid,
    bispectrum,
    bispectrum_peak,
    cumulant_energy,
    cumulant_grid,
    lag_cumulants,
    normalized_cumulant_energy,
    symmetrized_lags,
    third_cumulant,
    zero_lag_autocorr,
)
from noisesig.synth import AnomalySpec, ScenarioSpec, anomaly_component

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def _brute_c3(z, t1, t2):
    z = [float(v) for v in z]
    mean = sum(z) / len(z)
    zc = [v - mean for v in z]
    n = len(z) - max(t1, t2)
    return sum(zc[i] * zc[i + t1] * zc[i + t2] for i in range(n)) / n


def _qpc(seed, length, coupled=True, f1=0.12, f2=0.18):
    spec = ScenarioSpec(
        frame_length=length, frames=1, seed=seed, tones=(), anomaly=AnomalySpec("qpc", f1=f1, f2=f2, coupled=coupled)
    )
    return anomaly_component(spec, 0)


def test_default_lag_set():
    assert DEFAULT_LAGS.pairs == ((0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2))
    assert DEFAULT_LAGS.tau_max == 2


def test_lag_set_validation():
    with pytest.raises(LagError):
        LagSet(())
    with pytest.raises(LagError):
        LagSet(((0, -1),))


def test_matches_brute_force(rng):
    z = rng.exponential(size=40)
    for a, b in [(0, 0), (1, 0), (2, 1), (5, 3), (0, 7)]:
        assert third_cumulant(z, a, b) == pytest.approx(_brute_c3(z, a, b), abs=1e-13)


def test_constant_and_zero():
    assert third_cumulant(np.full(50, 4.2), 1, 2) == pytest.approx(0.0, abs=1e-12)
    assert not cumulant_grid(np.zeros(30), 4).values.any()


def test_too_short():
    with pytest.raises(LagError):
        third_cumulant(np.ones(3), 2, 0)
    with pytest.raises(LagError):
        third_cumulant(np.ones(10), -1, 0)


def test_batched_lag_cumulants(rng):
    z = rng.normal(size=(3, 4, 20))
    c = lag_cumulants(z)
    assert c.shape == (3, 4, 6)
    for (a, b), col in zip(DEFAULT_LAGS.pairs, np.moveaxis(c, -1, 0)):
        assert np.allclose(col[1, 2], _brute_c3(z[1, 2], a, b))


def test_exponential_skewness(rng):
    est = [third_cumulant(rng.exponential(size=65536) - 1, 0, 0) for _ in range(40)]
    se = np.std(est, ddof=1) / np.sqrt(len(est))
    assert abs(np.mean(est) - 2.0) < 3 * max(se, np.std(est, ddof=1))


def test_qpc_grid_nonzero(rng):
    null = [cumulant_grid(rng.normal(size=4096), 8).values.max() for _ in range(50)]
    se = np.std(null, ddof=1)
    grid = cumulant_grid(_qpc(1, 4096), 8)
    assert np.abs(grid.values).max() > 10 * se


def test_single_lag_energy():
    vals = np.zeros((3, 3))
    vals[1, 1] = 3.0
    grid = CumulantGrid(vals, 100)
    assert cumulant_energy(grid, LagSet(((1, 1),))) == 9.0
    assert cumulant_energy(CumulantGrid(np.zeros((3, 3)), 100)) == 0.0
    assert normalized_cumulant_energy(CumulantGrid(np.zeros((3, 3)), 100), r0=2.0) == 0.0


def test_energy_lag_outside_grid():
    with pytest.raises(LagError):
        cumulant_energy(CumulantGrid(np.zeros((2, 2)), 10))


def test_gaussian_energy_below_skewed(rng):
    wins = 0
    for _ in range(100):
        g = cumulant_energy(cumulant_grid(rng.normal(size=8192), 2))
        e = cumulant_energy(cumulant_grid(rng.exponential(size=8192) - 1, 2))
        wins += g < e
    assert wins >= 95


def test_normalized_scale_invariance(rng):
    z = rng.exponential(size=8192)
    n1 = normalized_cumulant_energy(cumulant_grid(z, 2), r0=zero_lag_autocorr(z))
    n2 = normalized_cumulant_energy(cumulant_grid(10 * z, 2), r0=zero_lag_autocorr(10 * z))
    assert n2 == pytest.approx(n1, rel=0.01)


def test_normalized_dimensionless_under_gaussian(rng):
    def draw(sigma):
        z = rng.normal(0, sigma, size=2048)
        return normalized_cumulant_energy(cumulant_grid(z, 2), r0=zero_lag_autocorr(z))

    a = [draw(1.0) for _ in range(200)]
    b = [draw(5.0) for _ in range(200)]
    assert stats.mannwhitneyu(a, b).pvalue > 0.01


def test_normalized_validation():
    grid = CumulantGrid(np.zeros((3, 3)), 10)
    with pytest.raises(ValueError):
        normalized_cumulant_energy(grid, r0=1.0, epsilon=0.0)
    with pytest.raises(ValueError):
        normalized_cumulant_energy(grid, r0=-1.0)
    with pytest.raises(ValueError):
        normalized_cumulant_energy(grid)


def test_zero_lag_autocorr(rng):
    assert zero_lag_autocorr(np.full(10, 2.0)) == 0.0
    assert zero_lag_autocorr([1.0, -1.0]) == 1.0
    assert zero_lag_autocorr(rng.normal(0, 2, size=8192)) == pytest.approx(4.0, rel=0.05)


def test_bispectrum_trivial_grids():
    assert not bispectrum(CumulantGrid(np.zeros((3, 3)), 10), 8).values.any()
    vals = np.zeros((3, 3))
    vals[0, 0] = 2.5
    b = bispectrum(CumulantGrid(vals, 10), 8)
    assert np.allclose(b.values, 2.5)


def test_bispectrum_inverts_to_symmetrized_grid(rng):
    grid = cumulant_grid(rng.exponential(size=512), 5)
    b = bispectrum(grid, 16)
    assert np.max(np.abs(np.fft.ifft2(b.values) - symmetrized_lags(grid, 16))) < 1e-9


def test_symmetrized_lags_symmetries(rng):
    grid = cumulant_grid(rng.exponential(size=300), 4)
    s = symmetrized_lags(grid, 16)
    for a in range(-4, 5):
        for b in range(-4, 5):
            if max(0, a, b) - min(0, a, b) <= 4:
                # C(a, b) = C(b, a) = C(-a, b - a)
                assert s[a % 16, b % 16] == s[b % 16, a % 16]
                assert s[a % 16, b % 16] == pytest.approx(s[-a % 16, (b - a) % 16])


def test_symmetrization_needs_room():
    with pytest.raises(LagError):
        symmetrized_lags(CumulantGrid(np.zeros((5, 5)), 10), 8)
    with pytest.raises(LagError):
        symmetrized_lags(CumulantGrid(np.zeros((2, 5, 5)), 10), 16)


def test_bispectrum_hermitian(rng):
    b = bispectrum(cumulant_grid(rng.exponential(size=400), 4), 16).values
    k = np.arange(16)
    assert np.allclose(b[np.ix_(-k % 16, -k % 16)], np.conj(b))


def test_qpc_peak_location():
    segs = np.stack([_qpc(s, 512) for s in range(64)])
    b = bispectrum(average_grid(cumulant_grid(segs, 20)), 64)
    w1, w2 = bispectrum_peak(b)
    cell = 2 * np.pi / 64
    assert abs(w1 - 2 * np.pi * 0.12) <= cell
    assert abs(w2 - 2 * np.pi * 0.18) <= cell


@given(arrays(np.float64, 24, elements=finite), finite)
def test_centering_removes_offsets(z, c):
    a = cumulant_grid(z, 3).values
    b = cumulant_grid(z + c, 3).values
    scale = max(1.0, float(np.max(np.abs(z))) ** 3)
    assert np.max(np.abs(a - b)) <= 1e-9 * scale


@given(arrays(np.float64, st.integers(6, 40), elements=finite))
def test_grid_symmetric(z):
    v = cumulant_grid(z, 4).values
    assert np.array_equal(v, v.T)


@given(arrays(np.float64, 32, elements=finite))
def test_energy_nonnegative(z):
    assert cumulant_energy(cumulant_grid(z, 2)) >= 0
    assert normalized_cumulant_energy(cumulant_grid(z, 2), r0=zero_lag_autocorr(z)) >= 0
