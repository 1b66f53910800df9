import numpy as np
import pytest

from helpers import toy_dataset
from seqcomp.descriptors import (
    DescriptorConfig,
    DescriptorSet,
    compute_descriptors,
    compute_fcd,
    compute_fmd,
    track_pca,
)
from seqcomp.ppm import compression_rate
from seqcomp.synth import SynthConfig, synth_corpus


def test_pca_diagonal_input():
    rng = np.random.default_rng(0)
    V = np.column_stack([2.0 * rng.standard_normal(4000), rng.standard_normal(4000)])
    V -= V.mean(axis=0)
    V[:, 1] -= V[:, 0] * (V[:, 0] @ V[:, 1]) / (V[:, 0] @ V[:, 0])  # exactly uncorrelated
    res = track_pca(V)
    np.testing.assert_allclose(np.abs(res.scores), np.abs(V), atol=1e-10)
    assert res.variances[0] > res.variances[1]


def test_pca_rank_one():
    x = np.random.default_rng(1).normal(size=300)
    res = track_pca(np.column_stack([x, 2 * x]))
    assert res.variances[1] < 1e-10


def test_pca_against_eigendecomposition():
    V = np.random.default_rng(2).normal(size=(500, 12)) @ np.random.default_rng(3).normal(size=(12, 12))
    res = track_pca(V)
    Vc = V - V.mean(axis=0)
    np.testing.assert_allclose(res.scores @ res.loadings.T, Vc, atol=1e-8)
    eig = np.sort(np.linalg.eigvalsh(Vc.T @ Vc / len(V)))[::-1]
    np.testing.assert_allclose(res.variances, eig, rtol=1e-9)
    assert np.all(np.diff(res.variances) <= 0)


def _synthetic_track(n_frames=400):
    return synth_corpus(SynthConfig(n_tracks=2, n_frames=n_frames))


def test_fcd_counts_per_track():
    ds = _synthetic_track()
    fcd = compute_fcd(ds.track_ids[0], ds)
    assert len(fcd) == 100
    assert sum(v.values.size for v in fcd) == 300
    assert not any(v.missing for v in fcd)


def test_constant_feature_rates():
    ds = toy_dataset({"a": {"x": np.full(1200, 3.0)}})
    for v in compute_fcd("a", ds):
        assert np.all(v.values < 0.01)


def test_identical_components_average_equals_first_score():
    t = np.arange(1200)
    sine = np.sin(2 * np.pi * t / 37.0)
    ds = toy_dataset({"a": {"v": np.tile(sine[:, None], (1, 12))}})
    first = track_pca(ds.sequence("a", "v").frames).scores[:, 0]
    cfg = DescriptorConfig(factors=(1, 2))
    for vec in compute_fcd("a", ds, cfg):
        assert vec.retained == 1
        factor = int(vec.name.rsplit(":", 1)[1])
        expected = [compression_rate(first, lam, factor) for lam in cfg.lambdas]
        np.testing.assert_allclose(vec.values, expected, atol=1e-6)


def test_vector_fcd_averages_component_rates():
    rng = np.random.default_rng(4)
    V = rng.normal(size=(600, 3)) * [3.0, 2.0, 1.0]
    ds = toy_dataset({"a": {"v": V}})
    scores = track_pca(V).scores
    vec = compute_fcd("a", ds, DescriptorConfig(factors=(1,)))[0]
    expected = [np.mean([compression_rate(scores[:, c], lam) for c in range(3)]) for lam in (3, 4, 5)]
    np.testing.assert_allclose(vec.values, expected, rtol=1e-12)


def test_fmd_scalar_values():
    ds = toy_dataset({"a": {"x": np.array([1.0, 2.0, 3.0])}})
    (v,) = compute_fmd("a", ds)
    np.testing.assert_allclose(v.values, [2.0, np.sqrt(2 / 3)])


def test_fmd_constant_std_zero():
    ds = toy_dataset({"a": {"x": np.full(10, 7.0)}})
    assert compute_fmd("a", ds)[0].values[1] == 0.0


def test_fmd_count():
    ds = _synthetic_track(60)
    fmd = compute_fmd(ds.track_ids[0], ds)
    sizes = sorted(v.values.size for v in fmd)
    assert sizes == [2] * 21 + [24] * 4
    assert sum(sizes) == 138


def test_short_track_missing_at_factor_8(caplog):
    ds = toy_dataset({"a": {"x": np.random.default_rng(0).normal(size=30)}})
    with caplog.at_level("WARNING"):
        out = {v.name: v for v in compute_fcd("a", ds)}
    assert out["fcd:x:8"].missing
    assert not out["fcd:x:4"].missing
    assert "too short" in caplog.text


def test_descriptor_file_rows_and_determinism(tmp_path):
    ds = _synthetic_track(200)
    a = compute_descriptors(ds)
    rows = a.write_csv(tmp_path / "a.csv")
    assert rows == 2 * (300 + 138)
    compute_descriptors(ds).write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    back = DescriptorSet.read_csv(tmp_path / "a.csv")
    X1, labels1 = a.matrix(a.names(), a.track_ids)
    X2, labels2 = back.matrix(back.names(), back.track_ids)
    assert labels1 == labels2
    np.testing.assert_allclose(X1, X2, rtol=1e-8)


def test_bad_track_isolated(caplog):
    rng = np.random.default_rng(0)
    ds = toy_dataset(
        {
            "good": {"v": rng.normal(size=(50, 3)), "x": rng.normal(size=50)},
            "bad": {"v": rng.normal(size=(2, 3)), "x": rng.normal(size=50)},
        }
    )
    res = compute_descriptors(ds)
    assert res.track_ids == ["good"]
    assert "bad" in res.failures


def test_parallel_matches_serial():
    ds = synth_corpus(SynthConfig(n_tracks=4, n_frames=120))
    a = compute_descriptors(ds, jobs=1)
    b = compute_descriptors(ds, jobs=2)
    Xa, _ = a.matrix(a.names(), a.track_ids)
    Xb, _ = b.matrix(b.names(), b.track_ids)
    assert Xa.tobytes() == Xb.tobytes()


def test_corpus_binning_shares_edges():
    ds = synth_corpus(SynthConfig(n_tracks=3, n_frames=200))
    res = compute_descriptors(ds, DescriptorConfig(binning="corpus", factors=(1,)))
    X, _ = res.matrix(res.names("fcd"), res.track_ids)
    assert np.all(np.isfinite(X)) and X.shape == (3, 75)
    with pytest.raises(Exception):
        compute_descriptors(ds, DescriptorConfig(binning="global"))
