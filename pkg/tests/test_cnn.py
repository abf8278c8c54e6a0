"""CNN runtime tests: layer primitives, weight loading, encode/decode."""

import numpy as np
import pytest

from substyle import (
    ConfigError,
    FormatError,
    FeatureMap,
    WeightBank,
    conv3x3,
    decode,
    encode,
    encode_taps,
    load_network,
    maxpool2x2,
    relu,
    sswt,
    upsample_nearest,
)
from substyle.cnn import VGG_CHANNELS, _preprocess, _postprocess

from conftest import conv_records, make_test_image


# ---------------------------------------------------------------------------
# primitives

def test_maxpool_example():
    x = np.array([[[1.0, 2.0], [3.0, 4.0]]], dtype=np.float32)
    np.testing.assert_array_equal(maxpool2x2(x), [[[4.0]]])


def test_maxpool_per_channel():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((5, 6, 8)).astype(np.float32)
    out = maxpool2x2(x)
    assert out.shape == (5, 3, 4)
    for c in range(5):
        for i in range(3):
            for j in range(4):
                assert out[c, i, j] == x[c, 2 * i:2 * i + 2, 2 * j:2 * j + 2].max()


def test_maxpool_odd_dims_rejected():
    with pytest.raises(ConfigError):
        maxpool2x2(np.zeros((1, 3, 4), np.float32))


def test_upsample_example():
    x = np.array([[[5.0]]], dtype=np.float32)
    np.testing.assert_array_equal(
        upsample_nearest(x), [[[5.0, 5.0], [5.0, 5.0]]]
    )


def test_upsample_then_pool_is_identity():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((3, 4, 5)).astype(np.float32)
    np.testing.assert_array_equal(maxpool2x2(upsample_nearest(x)), x)


def test_relu():
    x = np.array([-2.0, 0.0, 3.5], np.float32)
    np.testing.assert_array_equal(relu(x), [0.0, 0.0, 3.5])


def test_conv_identity_kernel():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((4, 7, 6)).astype(np.float32)
    w = np.zeros((4, 4, 3, 3), np.float32)
    for i in range(4):
        w[i, i, 1, 1] = 1.0
    np.testing.assert_array_equal(conv3x3(x, w), x)


def test_conv_zero_weights_gives_bias():
    x = np.ones((2, 4, 4), np.float32)
    w = np.zeros((3, 2, 3, 3), np.float32)
    b = np.array([0.5, -1.0, 2.0], np.float32)
    out = conv3x3(x, w, b)
    for o in range(3):
        np.testing.assert_array_equal(out[o], np.full((4, 4), b[o]))


def _conv_reference(x, w, b):
    """Direct-loop 3x3 convolution with reflection padding, f64 accumulation."""
    c, h, wd = x.shape
    xp = np.pad(x.astype(np.float64), ((0, 0), (1, 1), (1, 1)), mode="reflect")
    out = np.zeros((w.shape[0], h, wd))
    for o in range(w.shape[0]):
        for i in range(c):
            for ky in range(3):
                for kx in range(3):
                    out[o] += w[o, i, ky, kx] * xp[i, ky:ky + h, kx:kx + wd]
        out[o] += b[o]
    return out


def test_conv_matches_direct_loop():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((3, 6, 5)).astype(np.float32)
    w = rng.standard_normal((2, 3, 3, 3)).astype(np.float32)
    b = rng.standard_normal(2).astype(np.float32)
    out = conv3x3(x, w, b)
    ref = _conv_reference(x, w, b)
    assert np.abs(out - ref).max() < 1e-5


def test_conv_reflection_padding_at_border():
    # a kernel that reads only the top-left tap exposes the padding rule
    x = np.arange(12, dtype=np.float32).reshape(1, 3, 4)
    w = np.zeros((1, 1, 3, 3), np.float32)
    w[0, 0, 0, 0] = 1.0
    out = conv3x3(x, w)
    # at (0, 0) the tap lands on the reflected pixel (1, 1)
    assert out[0, 0, 0] == x[0, 1, 1]
    assert out[0, 2, 3] == x[0, 1, 2]


def test_conv_chunked_path_matches():
    from substyle import cnn

    rng = np.random.default_rng(4)
    x = rng.standard_normal((3, 16, 16)).astype(np.float32)
    w = rng.standard_normal((5, 3, 3, 3)).astype(np.float32)
    b = rng.standard_normal(5).astype(np.float32)
    full = conv3x3(x, w, b)
    saved = cnn._COL_CHUNK_ELEMS
    cnn._COL_CHUNK_ELEMS = 3 * 16 * 9 * 2  # force ~2-row chunks
    try:
        chunked = conv3x3(x, w, b)
    finally:
        cnn._COL_CHUNK_ELEMS = saved
    np.testing.assert_array_equal(chunked, full)


def test_conv_channel_mismatch():
    with pytest.raises(ConfigError, match="channel mismatch"):
        conv3x3(np.zeros((2, 4, 4), np.float32), np.zeros((1, 3, 3, 3), np.float32))


# ---------------------------------------------------------------------------
# FeatureMap

def test_featuremap_channel_table_enforced():
    with pytest.raises(ConfigError, match="64 channels"):
        FeatureMap(data=np.zeros((32, 4, 4), np.float32), level=1)
    with pytest.raises(ConfigError):
        FeatureMap(data=np.zeros((64, 4, 4), np.float32), level=0)


def test_featuremap_matrix_round_trip():
    rng = np.random.default_rng(5)
    fmap = FeatureMap(data=rng.standard_normal((64, 3, 5)).astype(np.float32), level=1)
    mat = fmap.as_matrix()
    assert mat.shape == (64, 15)
    back = fmap.with_matrix(mat)
    np.testing.assert_array_equal(back.data, fmap.data)
    assert back.level == fmap.level


def test_featuremap_rejects_nonfinite():
    data = np.zeros((64, 2, 2), np.float32)
    data[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        FeatureMap(data=data, level=1)


# ---------------------------------------------------------------------------
# load_network

def _write(path, records):
    sswt.write_records(path, records)
    return path


def test_load_network_round_trip(tmp_path):
    path = _write(tmp_path / "n.sswt", [
        *conv_records("conv1_1", 3, 8),
        sswt.Record("relu1_1", sswt.KIND_RELU),
        *conv_records("conv1_2", 8, 8),
        sswt.Record("relu1_2", sswt.KIND_RELU),
        sswt.Record("pool1", sswt.KIND_MAXPOOL),
    ])
    net = load_network(path)
    assert [l.kind for l in net.layers] == [
        sswt.KIND_CONV, sswt.KIND_RELU, sswt.KIND_CONV,
        sswt.KIND_RELU, sswt.KIND_MAXPOOL,
    ]
    assert net.pool_count == 1
    assert net.input_channels == 3
    assert net.output_channels == 8
    assert net.layers[0].bias.shape == (8,)


def test_load_network_missing_bias_defaults_to_zero(tmp_path):
    w = np.ones((2, 3, 3, 3), np.float32)
    path = _write(tmp_path / "n.sswt", [sswt.Record("conv1_1", sswt.KIND_CONV, w)])
    net = load_network(path)
    np.testing.assert_array_equal(net.layers[0].bias, np.zeros(2, np.float32))


def test_load_network_orphan_bias(tmp_path):
    path = _write(tmp_path / "n.sswt", [
        sswt.Record("conv1_1.bias", sswt.KIND_CONV, np.zeros(4, np.float32)),
    ])
    with pytest.raises(FormatError, match="orphan bias"):
        load_network(path)


def test_load_network_bias_name_mismatch(tmp_path):
    path = _write(tmp_path / "n.sswt", [
        sswt.Record("conv1_1", sswt.KIND_CONV, np.zeros((2, 3, 3, 3), np.float32)),
        sswt.Record("conv9_9.bias", sswt.KIND_CONV, np.zeros(2, np.float32)),
    ])
    with pytest.raises(FormatError, match="orphan bias"):
        load_network(path)


def test_load_network_bias_length_mismatch(tmp_path):
    path = _write(tmp_path / "n.sswt", [
        sswt.Record("conv1_1", sswt.KIND_CONV, np.zeros((2, 3, 3, 3), np.float32)),
        sswt.Record("conv1_1.bias", sswt.KIND_CONV, np.zeros(5, np.float32)),
    ])
    with pytest.raises(FormatError, match="shape mismatch"):
        load_network(path)


def test_load_network_conv_must_be_rank4(tmp_path):
    path = _write(tmp_path / "n.sswt", [
        sswt.Record("conv1_1", sswt.KIND_CONV, np.zeros((2, 27), np.float32)),
    ])
    with pytest.raises(FormatError, match="rank 4"):
        load_network(path)


def test_load_network_kernel_must_be_3x3(tmp_path):
    path = _write(tmp_path / "n.sswt", [
        sswt.Record("conv1_1", sswt.KIND_CONV, np.zeros((2, 3, 5, 5), np.float32)),
    ])
    with pytest.raises(FormatError, match="5x5"):
        load_network(path)


def test_load_network_marker_with_payload(tmp_path):
    path = _write(tmp_path / "n.sswt", [
        *conv_records("conv1_1", 3, 2),
        sswt.Record("relu1_1", sswt.KIND_RELU, np.zeros(3, np.float32)),
    ])
    with pytest.raises(FormatError, match="marker"):
        load_network(path)


def test_load_network_unknown_kind(tmp_path):
    path = _write(tmp_path / "n.sswt", [
        *conv_records("conv1_1", 3, 2),
        sswt.Record("mystery", 7),
    ])
    with pytest.raises(FormatError, match="unknown layer kind"):
        load_network(path)


def test_load_network_channel_chain_mismatch(tmp_path):
    path = _write(tmp_path / "n.sswt", [
        *conv_records("conv1_1", 3, 8),
        *conv_records("conv1_2", 4, 8),
    ])
    with pytest.raises(FormatError, match="shape mismatch"):
        load_network(path)


def test_load_network_needs_a_conv(tmp_path):
    path = _write(tmp_path / "n.sswt", [sswt.Record("pool1", sswt.KIND_MAXPOOL)])
    with pytest.raises(FormatError, match="no conv layers"):
        load_network(path)


def test_load_network_bad_preprocess(tmp_path):
    path = _write(tmp_path / "n.sswt", list(conv_records("conv1_1", 3, 2)))
    with pytest.raises(ConfigError):
        load_network(path, preprocess="bgr255")


# ---------------------------------------------------------------------------
# preprocessing

def test_caffe_preprocess_round_trip():
    img = make_test_image(32)
    back = _postprocess(_preprocess(img, "vgg_caffe"), "vgg_caffe")
    assert np.abs(back - img).max() < 1e-5


def test_rgb01_preprocess_is_identity():
    img = make_test_image(32)
    np.testing.assert_array_equal(_preprocess(img, "rgb01"), img)


# ---------------------------------------------------------------------------
# encode / decode against the surrogate bank

def test_encode_shape_law(bank):
    img = make_test_image(64)
    for level in range(1, 6):
        fmap = encode(bank.encoder(level), img, level)
        side = 64 // 2 ** level
        assert fmap.data.shape == (VGG_CHANNELS[level], side, side)
        assert fmap.data.dtype == np.float32
        assert fmap.content_size is None


def test_encode_spec_shape_example(bank):
    img = make_test_image(256)
    fmap = encode(bank.encoder(4), img, 4)
    assert fmap.data.shape == (512, 16, 16)


def test_encode_taps_matches_single_encode(bank):
    img = make_test_image(64)
    net = bank.encoder(5)
    taps = encode_taps(net, img, (1, 3, 5))
    for level in (1, 3, 5):
        single = encode(net, img, level)
        np.testing.assert_array_equal(taps[level].data, single.data)


def test_encode_pads_and_decode_crops(bank):
    img = make_test_image(64)[:57, :62]
    fmap = encode(bank.encoder(3), img, 3)
    assert fmap.data.shape == (256, 8, 8)  # padded to 64x64
    assert fmap.content_size == (57, 62)
    out = decode(bank.decoder(3), fmap)
    assert out.shape == (57, 62, 3)


def test_decode_output_clamped(bank):
    fmap = encode(bank.encoder(2), make_test_image(64), 2)
    out = decode(bank.decoder(2), fmap)
    assert out.dtype == np.float32
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_decode_deterministic(bank):
    fmap = encode(bank.encoder(1), make_test_image(64), 1)
    a = decode(bank.decoder(1), fmap)
    b = decode(bank.decoder(1), fmap)
    np.testing.assert_array_equal(a, b)


def test_decode_level_mismatch(bank):
    fmap = encode(bank.encoder(2), make_test_image(64), 2)
    with pytest.raises(ConfigError, match="level mismatch"):
        decode(bank.decoder(3), fmap)


def test_encode_level_out_of_range(bank):
    with pytest.raises(ConfigError):
        encode(bank.encoder(5), make_test_image(64), 6)
    with pytest.raises(ConfigError):
        encode_taps(bank.encoder(5), make_test_image(64), ())


def test_encode_too_shallow_network(weights_dir):
    import os

    net = load_network(os.path.join(weights_dir, "enc2.sswt"))
    with pytest.raises(ConfigError, match="pooling layers"):
        encode(net, make_test_image(64), 3)


def test_encode_rejects_bad_image(bank):
    with pytest.raises(ValueError):
        encode(bank.encoder(1), np.zeros((64, 64), np.float32), 1)


# ---------------------------------------------------------------------------
# WeightBank

def test_bank_prefers_deep_encoder(bank):
    assert bank.encoder(1) is bank.encoder(5)
    assert bank.encoder(1).pool_count == 5


def test_bank_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        WeightBank(tmp_path).decoder(1)


def test_bank_reads_manifest_preprocess(bank):
    assert bank.preprocess == "rgb01"
    assert bank.encoder(3).preprocess == "rgb01"
