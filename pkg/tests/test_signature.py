import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from noisesig.hos import DEFAULT_LAGS, cumulant_grid, cumulant_energy, normalized_cumulant_energy, zero_lag_autocorr
from noisesig.residual import build_mask, resolve_policy, split_and_reconstruct
from noisesig.signature import (
    FitError,
    NodeSelection,
    NominalModel,
    build_signature,
    feature_names,
    fit_nominal,
    mahalanobis_sq,
    signature_blocks,
)
from noisesig.wpt import ConfigError, WptConfig, analysis_levels, forward_wpt, get_qmf


def _spd(r, d):
    a = r.normal(size=(d, d))
    return a @ a.T + d * np.eye(d)


def _frame_signature(x, depth=2, name="db4"):
    cfg = WptConfig(depth, len(x))
    qmf = get_qmf(name)
    tree = forward_wpt(x, qmf, cfg)
    res = split_and_reconstruct(tree, build_mask(tree, resolve_policy(tree)), qmf, cfg)
    residual_tree = forward_wpt(res.residual, qmf, cfg)
    return tree, residual_tree


def test_selection_validation():
    with pytest.raises(ConfigError):
        NodeSelection(())
    with pytest.raises(ConfigError):
        NodeSelection(((1, 0), (1, 0)))
    with pytest.raises(ConfigError):
        NodeSelection(((1, 2),))
    with pytest.raises(ConfigError):
        NodeSelection(((3, 0),)).validate(2)


def test_layout_and_names(rng):
    tree, rtree = _frame_signature(rng.normal(size=64))
    sel = NodeSelection.leaves(2)
    sig = build_signature(tree, rtree, sel)
    assert sig.dim == 12
    assert feature_names(sel)[:4] == ["E_2_0", "E_2_1", "E_2_2", "E_2_3"]
    assert feature_names(sel)[4] == "CE_2_0" and feature_names(sel)[8] == "NCE_2_0"
    for i, (j, k) in enumerate(sel.nodes):
        z = rtree.node(j, k)
        grid = cumulant_grid(z, 2)
        assert sig.values[i] == pytest.approx(np.sum(tree.node(j, k) ** 2))
        assert sig.values[4 + i] == pytest.approx(cumulant_energy(grid, DEFAULT_LAGS))
        r0 = zero_lag_autocorr(z)
        assert sig.values[8 + i] == pytest.approx(normalized_cumulant_energy(grid, DEFAULT_LAGS, r0))


@pytest.mark.filterwarnings("ignore::noisesig.residual.DegenerateSigmaWarning")
def test_zero_frame_signature():
    tree, rtree = _frame_signature(np.zeros(64))
    sig = build_signature(tree, rtree, NodeSelection.leaves(2))
    assert not sig.values.any()
    assert len(sig.degenerate_nodes) == 4


def test_internal_node_selection(rng):
    tree, rtree = _frame_signature(rng.normal(size=64))
    sel = NodeSelection(((1, 1), (2, 0)))
    sig = build_signature(tree, rtree, sel)
    assert sig.values[0] == pytest.approx(np.sum(tree.node(1, 1) ** 2))


def test_short_node_flagged(rng):
    tree, rtree = _frame_signature(rng.normal(size=16), depth=3)
    sig = build_signature(tree, rtree, NodeSelection.leaves(3))
    assert len(sig.degenerate_nodes) == 8
    assert not sig.values[8:].any()


def test_batched_blocks_match_single(rng):
    frames = rng.normal(size=(4, 64))
    qmf = get_qmf("db4")
    levels = analysis_levels(frames, qmf, 2)
    trees = [_frame_signature(x) for x in frames]
    residual = [np.stack([t[1].levels[j] for t in trees]) for j in range(3)]
    e, ce, nce, r0, deg = signature_blocks(levels, residual, NodeSelection.leaves(2))
    for i, (tree, rtree) in enumerate(trees):
        sig = build_signature(tree, rtree, NodeSelection.leaves(2))
        assert np.allclose(np.r_[e[i], ce[i], nce[i]], sig.values)


def test_nominal_ce_shrinks_with_length(rng):
    from noisesig.pipeline import PipelineConfig, extract_features
    from noisesig.synth import ScenarioSpec, generate

    # pure noise: sub-threshold tone leakage would otherwise dominate the residual
    means = []
    for n in (128, 1024):
        frames = generate(ScenarioSpec(frame_length=n, frames=200, seed=3, tones=())).frames
        means.append(extract_features(frames, PipelineConfig(frame_length=n)).ce.mean())
    assert means[1] < means[0] / 4


def test_fit_too_few():
    with pytest.raises(FitError):
        fit_nominal(np.zeros((6, 6)))


def test_fit_rejects_bad_input():
    with pytest.raises(FitError):
        fit_nominal(np.zeros(10))
    bad = np.ones((10, 2))
    bad[0, 0] = np.nan
    with pytest.raises(FitError):
        fit_nominal(bad)
    with pytest.raises(FitError):
        fit_nominal(np.ones((10, 2)), gamma=-1)


def test_identical_signatures_spd():
    x = np.tile([1.0, 2.0, 3.0], (10, 1))
    model = fit_nominal(x, gamma=1e-3)
    assert np.linalg.eigvalsh(model.covariance)[0] > 0
    assert mahalanobis_sq(x[0], model) == 0.0
    with pytest.raises(FitError):
        fit_nominal(x, gamma=0.0)


def test_mean_recovery(rng):
    d = 6
    mu = rng.normal(size=d) * 3
    cov = _spd(rng, d)
    x = rng.multivariate_normal(mu, cov, size=10_000)
    model = fit_nominal(x, gamma=1e-6)
    se = np.sqrt(np.diag(cov) / len(x))
    assert np.all(np.abs(model.mean - mu) < 3 * se)


def test_identity_model_unit_vector():
    model = NominalModel.from_dict({"gamma": 0.0, "mean": [0.0] * 3, "covariance": np.eye(3).tolist()})
    assert mahalanobis_sq(np.array([0.0, 1.0, 0.0]), model) == pytest.approx(1.0)
    assert mahalanobis_sq(np.zeros(3), model) == 0.0
    with pytest.raises(ConfigError):
        mahalanobis_sq(np.zeros(4), model)


def test_chi_square_law(rng):
    d = 6
    cov = _spd(rng, d)
    mu = rng.normal(size=d)
    model = NominalModel.from_dict({"gamma": 0.0, "mean": mu.tolist(), "covariance": cov.tolist()})
    d2 = mahalanobis_sq(rng.multivariate_normal(mu, cov, size=100_000), model)
    assert stats.kstest(d2, stats.chi2(d).cdf).statistic < 0.01


def test_model_json_roundtrip(tmp_path, rng):
    x = rng.normal(size=(50, 6))
    model = fit_nominal(
        x, 1e-3, NodeSelection.leaves(1), DEFAULT_LAGS, 1e-12, config_hash="abc", meta={"frames": 50}
    )
    path = tmp_path / "m.json"
    model.save(path)
    back = NominalModel.load(path)
    assert back.config_hash == "abc" and back.nodes == ((1, 0), (1, 1))
    assert np.array_equal(back.mean, model.mean) and np.array_equal(back.covariance, model.covariance)
    back.save(tmp_path / "m2.json")
    assert (tmp_path / "m2.json").read_bytes() == path.read_bytes()


def test_model_inconsistent_dims():
    with pytest.raises(FitError):
        NominalModel.from_dict({"gamma": 0, "mean": [0, 0], "covariance": [[1.0]]})


@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_whitening_identity(seed, d):
    r = np.random.default_rng(seed)
    cov = _spd(r, d)
    mu = r.normal(size=d)
    model = NominalModel.from_dict({"gamma": 0.0, "mean": mu.tolist(), "covariance": cov.tolist()})
    f = r.normal(size=d) * 5
    quad = (f - mu) @ np.linalg.solve(cov, f - mu)
    assert mahalanobis_sq(f, model) == pytest.approx(quad, rel=1e-9)
    assert np.allclose(model.whitener.T @ model.whitener, np.linalg.inv(cov), rtol=1e-8, atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_affine_invariance(seed, d):
    r = np.random.default_rng(seed)
    cov = _spd(r, d)
    mu = r.normal(size=d)
    a = r.normal(size=(d, d)) + 3 * np.eye(d)
    f = r.normal(size=d)
    m1 = NominalModel.from_dict({"gamma": 0.0, "mean": mu.tolist(), "covariance": cov.tolist()})
    m2 = NominalModel.from_dict({"gamma": 0.0, "mean": (a @ mu).tolist(), "covariance": (a @ cov @ a.T).tolist()})
    assert mahalanobis_sq(a @ f, m2) == pytest.approx(mahalanobis_sq(f, m1), rel=1e-8)


@given(st.integers(0, 2**32 - 1))
def test_monotone_along_ray(seed):
    r = np.random.default_rng(seed)
    model = NominalModel.from_dict({"gamma": 0.0, "mean": r.normal(size=4).tolist(), "covariance": _spd(r, 4).tolist()})
    v = r.normal(size=4)
    ts = np.linspace(0, 10, 30)
    vals = mahalanobis_sq(model.mean + ts[:, None] * v, model)
    assert np.all(np.diff(vals) >= -1e-12)


@given(st.integers(0, 2**32 - 1))
def test_signature_entries_nonnegative(seed):
    x = np.random.default_rng(seed).standard_t(3, size=64)
    tree, rtree = _frame_signature(x)
    sig = build_signature(tree, rtree, NodeSelection.leaves(2))
    assert np.all(sig.values >= 0) and np.all(np.isfinite(sig.values))
