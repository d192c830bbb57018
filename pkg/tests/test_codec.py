import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lsrna.codec import (CodecSpec, MockCodec, PixelCodec, TinyCodec, CodecTrainConfig, decode,
                         depth_to_space, encode, make_codec, reconstruction_mae, space_to_depth,
                         train_codec)
from lsrna.desk import render_set, scene_ids


def test_spec_validation():
    assert CodecSpec().s == 8 and CodecSpec().channels == 4
    with pytest.raises(ValueError):
        CodecSpec(s=2, channels=4, backend="invertible-mock")
    with pytest.raises(ValueError):
        CodecSpec(s=3, channels=4, backend="learned-tiny")
    with pytest.raises(ValueError):
        CodecSpec(backend="vae")
    with pytest.raises(ValueError):
        CodecSpec(s=0)


def test_mock_shapes():
    codec = MockCodec(CodecSpec(s=2, channels=12, backend="invertible-mock"))
    z = codec.encode(np.random.default_rng(0).random((16, 16, 3)))
    assert z.shape == (8, 8, 12)
    assert codec.decode(np.zeros((8, 8, 12))).shape == (16, 16, 3)


def test_mock_is_linear_and_orthonormal():
    codec = MockCodec()
    np.testing.assert_array_equal(codec.encode(np.zeros((4, 6, 3))), 0.0)
    np.testing.assert_allclose(codec.mixing @ codec.mixing.T, np.eye(12), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(s=st.sampled_from([1, 2, 4]), hb=st.integers(1, 6), wb=st.integers(1, 6), seed=st.integers(0, 2**31))
def test_mock_round_trip_and_shape(s, hb, wb, seed):
    codec = MockCodec(CodecSpec.mock(s))
    x = np.random.default_rng(seed).random((hb * s, wb * s, 3))
    z = codec.encode(x)
    assert z.shape == (hb, wb, 3 * s * s)
    np.testing.assert_allclose(codec.decode(z), x, rtol=0, atol=1e-12)


def test_space_to_depth_inverse():
    x = np.random.default_rng(0).random((8, 12, 3))
    np.testing.assert_array_equal(depth_to_space(space_to_depth(x, 4), 4), x)


def test_pixel_codec_is_identity():
    x = np.random.default_rng(0).random((5, 7, 3))
    codec = PixelCodec()
    np.testing.assert_array_equal(codec.decode(codec.encode(x)), x)


def test_errors():
    codec = MockCodec()
    with pytest.raises(ValueError, match="divisible"):
        codec.encode(np.zeros((5, 4, 3)))
    with pytest.raises(ValueError, match="NaN"):
        codec.encode(np.full((4, 4, 3), np.nan))
    with pytest.raises(ValueError, match="channels"):
        codec.decode(np.zeros((2, 2, 4)))
    with pytest.raises(ValueError, match="HxWx3"):
        codec.encode(np.zeros((4, 4)))


def test_tiny_codec_shape_at_default_spec():
    codec = make_codec(CodecSpec(), seed=0)
    assert isinstance(codec, TinyCodec)
    assert encode(np.random.default_rng(0).random((256, 256, 3)), codec).shape == (32, 32, 4)
    out = decode(np.random.default_rng(1).standard_normal((4, 4, 4)) * 10, codec)
    assert out.shape == (32, 32, 3) and out.min() >= 0.0 and out.max() <= 1.0


@pytest.fixture(scope="module")
def small_codec():
    train = render_set(scene_ids("train", 3), 48)
    val = render_set(scene_ids("val", 1), 48)
    cfg = CodecTrainConfig(iterations=120, batch_size=8, crop=16)
    return train_codec(train, val, CodecSpec(s=4, channels=4), cfg, width=16), val


def test_tiny_codec_training_records(small_codec, tmp_path):
    codec, val = small_codec
    assert codec.val_mae == pytest.approx(reconstruction_mae(codec, val))
    assert codec.log[-1]["loss"] < codec.log[0]["loss"]
    x = val[0]
    z = codec.encode(x)
    np.testing.assert_array_equal(z, codec.encode(x))
    loaded = TinyCodec.load(codec.save(tmp_path / "c.lsta"))
    np.testing.assert_array_equal(loaded.encode(x), z)
    np.testing.assert_array_equal(loaded.decode(z), codec.decode(z))


def test_training_input_checks():
    ims = [np.zeros((16, 16, 3))]
    with pytest.raises(ValueError):
        train_codec([], ims)
    with pytest.raises(ValueError):
        train_codec(ims, ims, CodecSpec(s=8), CodecTrainConfig(crop=12))
