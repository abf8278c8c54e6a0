"""Whitening-coloring transform and multi-level cascade tests."""

import warnings

import numpy as np
import pytest

from substyle import (
    ConfigError,
    DegenerateFeaturesWarning,
    StyleSource,
    StylizeConfig,
    blend,
    color,
    decode,
    encode,
    moment_stats,
    multi_level_stylize,
    wct,
    whiten,
)
from substyle.wct import color_basis

from conftest import make_test_image


def _random_features(c, n, seed, scale=None, offset=None):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((c, n))
    if scale is not None:
        f = scale @ f if scale.ndim == 2 else scale[:, None] * f
    if offset is not None:
        f = f + offset[:, None]
    return f.astype(np.float32)


# ---------------------------------------------------------------------------
# whiten

def test_whiten_identity_covariance():
    f = _random_features(16, 4096, 0, scale=np.linspace(0.5, 3.0, 16),
                         offset=np.linspace(-2, 2, 16))
    fw = whiten(f)
    cov = fw @ fw.T / fw.shape[1]
    assert np.abs(cov - np.eye(16)).max() < 1e-3
    assert np.abs(fw.mean(axis=1)).max() < 1e-6


def test_whiten_one_channel_exact():
    fw = whiten(np.array([[3.0, 1.0]], dtype=np.float32))
    # centered (1, -1), variance 1 under the 1/N convention
    np.testing.assert_allclose(fw, [[1.0, -1.0]], atol=1e-7)


def test_whiten_correlated_channels():
    rng = np.random.default_rng(1)
    mix = rng.standard_normal((8, 8))
    f = _random_features(8, 8192, 2, scale=mix)
    fw = whiten(f)
    cov = fw @ fw.T / fw.shape[1]
    assert np.abs(cov - np.eye(8)).max() < 5e-2


def test_whiten_constant_features_warns():
    f = np.full((4, 10), 2.5, np.float32)
    with pytest.warns(DegenerateFeaturesWarning):
        fw = whiten(f)
    np.testing.assert_array_equal(fw, np.zeros((4, 10)))


def test_whiten_gram_path_matches_dense():
    # fewer samples than channels triggers the snapshot solver; the symmetric
    # whitener is unique, so it must agree with a dense reference
    rng = np.random.default_rng(3)
    f = rng.standard_normal((12, 7)).astype(np.float32)
    fw = whiten(f)
    assert fw.shape == f.shape

    centered = f.astype(np.float64) - f.astype(np.float64).mean(axis=1, keepdims=True)
    cov = centered @ centered.T / f.shape[1]
    eps = 1e-8 * np.trace(cov) / 12
    vals, vecs = np.linalg.eigh(cov + eps * np.eye(12))
    keep = vals > 1e-5
    ref = vecs[:, keep] @ (vecs[:, keep].T @ centered / np.sqrt(vals[keep])[:, None])
    assert np.abs(fw - ref).max() < 1e-6


def test_whiten_gram_path_projected_identity():
    rng = np.random.default_rng(4)
    f = rng.standard_normal((20, 9)).astype(np.float32)
    fw = whiten(f)
    gram = fw.T @ fw / f.shape[1]
    # rank is at most N-1 after centering; retained directions have unit power
    assert abs(np.trace(gram) - 8.0) < 1e-3


# ---------------------------------------------------------------------------
# color

def test_color_diagonal_target():
    fw = whiten(_random_features(2, 50000, 5))
    target = moment_stats(np.diag([2.0, 3.0]) @ np.random.default_rng(6)
                          .standard_normal((2, 50000)) + np.array([[1.0], [-2.0]]))
    out = color(fw, target)
    got = moment_stats(out)
    assert np.abs(got.mean - target.mean).max() < 1e-3
    assert np.abs(got.cov - target.cov).max() < 1e-2


def test_color_degenerate_target_is_mean_shift():
    fw = whiten(_random_features(3, 100, 7))
    target = moment_stats(np.full((3, 10), 4.0, np.float32)
                          + np.array([[0.0], [1.0], [2.0]], np.float32))
    with pytest.warns(DegenerateFeaturesWarning):
        out = color(fw, target)
    expected = np.broadcast_to(target.mean[:, None], fw.shape)
    np.testing.assert_allclose(out, expected, atol=1e-7)


def test_color_basis_reuse_is_identical():
    fw = whiten(_random_features(6, 500, 8))
    target = moment_stats(_random_features(6, 800, 9, scale=np.linspace(1, 2, 6)))
    basis = color_basis(target)
    np.testing.assert_array_equal(color(fw, target), color(fw, target, basis=basis))


def test_color_dim_mismatch():
    target = moment_stats(_random_features(4, 50, 10))
    with pytest.raises(ConfigError):
        color(np.zeros((3, 10)), target)


# ---------------------------------------------------------------------------
# wct

def test_wct_self_identity():
    f = _random_features(32, 2000, 11, scale=np.linspace(0.5, 2.0, 32),
                         offset=np.linspace(-1, 1, 32))
    out = wct(f, moment_stats(f))
    rel = np.abs(out - f).max() / np.abs(f).max()
    assert rel < 1e-4


def test_wct_matches_style_moments():
    rng = np.random.default_rng(12)
    for trial in range(3):
        c = 16
        content = _random_features(c, 3000, 100 + trial,
                                   scale=rng.standard_normal((c, c)))
        style = _random_features(c, 3000, 200 + trial,
                                 scale=rng.standard_normal((c, c)),
                                 offset=rng.standard_normal(c))
        stats = moment_stats(style)
        out = wct(content, stats)
        got = moment_stats(out)
        assert np.abs(got.mean - stats.mean).max() < 1e-3
        assert np.abs(got.cov - stats.cov).max() < 1e-2


def test_wct_constant_content_becomes_style_mean():
    style = _random_features(5, 400, 13, scale=np.linspace(1, 3, 5),
                             offset=np.arange(5.0))
    stats = moment_stats(style)
    content = np.tile(np.arange(5.0, dtype=np.float32)[:, None], (1, 64))
    with pytest.warns(DegenerateFeaturesWarning):
        out = wct(content, stats)
    np.testing.assert_allclose(out, np.broadcast_to(stats.mean[:, None],
                                                    content.shape), atol=1e-5)


# ---------------------------------------------------------------------------
# blend

def test_blend_endpoints_bitwise():
    rng = np.random.default_rng(14)
    s = rng.standard_normal((4, 9)).astype(np.float32)
    c = rng.standard_normal((4, 9)).astype(np.float32)
    assert blend(s, c, 0.0) is c
    assert blend(s, c, 1.0) is s


def test_blend_affine():
    rng = np.random.default_rng(15)
    s = rng.standard_normal((4, 9))
    c = rng.standard_normal((4, 9))
    out = blend(s, c, 0.3)
    assert np.abs(out - (0.3 * s + 0.7 * c)).max() < 1e-6


def test_blend_validation():
    with pytest.raises(ConfigError, match="shape mismatch"):
        blend(np.zeros((2, 3)), np.zeros((2, 4)), 0.5)
    with pytest.raises(ConfigError, match="alpha"):
        blend(np.zeros((2, 3)), np.zeros((2, 3)), 1.5)


# ---------------------------------------------------------------------------
# StylizeConfig

def test_config_defaults():
    cfg = StylizeConfig()
    assert cfg.alpha == 0.6 and cfg.delta == 0.8
    assert cfg.levels == (5, 4, 3, 2, 1)
    assert cfg.seed == 42


@pytest.mark.parametrize("kwargs", [
    {"alpha": -0.1}, {"alpha": 1.2}, {"delta": 2.0}, {"levels": ()},
    {"levels": (1, 2)}, {"levels": (3, 3, 1)}, {"levels": (6,)},
    {"levels": (0,)}, {"seed": -1},
])
def test_config_rejects(kwargs):
    with pytest.raises(ConfigError):
        StylizeConfig(**kwargs)


# ---------------------------------------------------------------------------
# multi-level cascade

def test_cascade_alpha_zero_is_style_independent(bank):
    content = make_test_image(64)
    cfg = StylizeConfig(alpha=0.0, levels=(3, 2, 1))
    src_a = StyleSource.from_image(bank, make_test_image(64, seed=100), (3, 2, 1))
    src_b = StyleSource.from_image(bank, make_test_image(64, seed=200), (3, 2, 1))
    out_a = multi_level_stylize(bank, content, src_a, cfg)
    out_b = multi_level_stylize(bank, content, src_b, cfg)
    np.testing.assert_array_equal(out_a, out_b)
    # the style path is skipped entirely: no stats are even required
    out_c = multi_level_stylize(bank, content, StyleSource(stats={}), cfg)
    np.testing.assert_array_equal(out_a, out_c)


def test_cascade_alpha_zero_delta_one_is_reconstruction(bank):
    content = make_test_image(64)
    cfg = StylizeConfig(alpha=0.0, delta=1.0, levels=(3, 2, 1))
    out = multi_level_stylize(bank, content, StyleSource(stats={}), cfg)
    # every level anchors on the clean tap, so the result is dec1(enc1(content))
    ref = decode(bank.decoder(1), encode(bank.encoder(1), content, 1))
    np.testing.assert_array_equal(out, ref)


def test_cascade_wct_shape_and_determinism(bank):
    content = make_test_image(64)
    style = make_test_image(64, seed=300)
    cfg = StylizeConfig(alpha=0.7, levels=(2, 1))
    src = StyleSource.from_image(bank, style, cfg.levels)
    out1 = multi_level_stylize(bank, content, src, cfg)
    out2 = multi_level_stylize(bank, content, src, cfg)
    assert out1.shape == (64, 64, 3)
    assert out1.dtype == np.float32
    assert 0.0 <= out1.min() and out1.max() <= 1.0
    np.testing.assert_array_equal(out1, out2)
    # and it actually did something
    recon = multi_level_stylize(bank, content, StyleSource(stats={}),
                                StylizeConfig(alpha=0.0, levels=(2, 1)))
    assert np.abs(out1 - recon).mean() > 1e-4


def test_cascade_non_divisible_size(bank):
    content = make_test_image(64)[:50, :61]
    src = StyleSource.from_image(bank, make_test_image(64, seed=8), (3, 1))
    out = multi_level_stylize(bank, content, src,
                              StylizeConfig(alpha=0.5, levels=(3, 1)))
    assert out.shape == (50, 61, 3)


def test_cascade_missing_stats(bank):
    src = StyleSource.from_image(bank, make_test_image(64, seed=9), (2,))
    with pytest.raises(ConfigError, match="no style statistics"):
        multi_level_stylize(bank, make_test_image(64), src,
                            StylizeConfig(levels=(2, 1)))


def test_cascade_mode_validation(bank):
    src = StyleSource.from_image(bank, make_test_image(64, seed=10), (1,))
    with pytest.raises(ConfigError, match="unknown mode"):
        multi_level_stylize(bank, make_test_image(64), src,
                            StylizeConfig(levels=(1,)), mode="pst")
    with pytest.raises(ConfigError, match="sub-style model"):
        multi_level_stylize(bank, make_test_image(64), src,
                            StylizeConfig(levels=(1,)), mode="smt")


def test_cascade_fails_before_work_on_missing_decoder(tmp_path, weights_dir):
    import os
    import shutil

    partial = tmp_path / "partial"
    partial.mkdir()
    for name in os.listdir(weights_dir):
        if not name.startswith("dec1"):
            shutil.copy(os.path.join(weights_dir, name), partial / name)
    from substyle import WeightBank

    crippled = WeightBank(partial)
    src = StyleSource.from_image(crippled, make_test_image(64, seed=11), (2, 1))
    with pytest.raises(FileNotFoundError, match="dec1"):
        multi_level_stylize(crippled, make_test_image(64), src,
                            StylizeConfig(levels=(2, 1)))


def test_style_source_multi_image_concatenates(bank):
    a = make_test_image(64, seed=20)
    b = make_test_image(64, seed=21)
    src = StyleSource.from_images(bank, [a, b], (2,))
    enc = bank.encoder(2)
    fa = encode(enc, a, 2).as_matrix()
    fb = encode(enc, b, 2).as_matrix()
    ref = moment_stats(np.concatenate([fa, fb], axis=1))
    np.testing.assert_array_equal(src.stats[2].mean, ref.mean)
    np.testing.assert_array_equal(src.stats[2].cov, ref.cov)
