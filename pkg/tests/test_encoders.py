"""Tests for feature grids, crop sampling, and the two encoders."""

import numpy as np
import pytest

from mtiqa.autodiff import ShapeError, Tensor, grad_check, mean, tensor_sum
from mtiqa.encoders import (CropSet, FeatureImage, ImageEncoder, TextEncoder,
                            crop_means, glorot_uniform, sample_crops)


def _image(rng, h=8, w=8, d=6):
    return FeatureImage(rng.standard_normal((h, w, d)))


# ---------------------------------------------------------------------------
# feature images and crops
# ---------------------------------------------------------------------------

def test_feature_image_validation():
    with pytest.raises(ValueError):
        FeatureImage(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        FeatureImage(np.full((2, 2, 3), np.nan))
    img = FeatureImage(np.zeros((4, 5, 6), dtype=np.float32))
    assert (img.height, img.width, img.feature_dim) == (4, 5, 6)
    assert img.grid.dtype == np.float64


def test_sample_crops_bounds_and_determinism():
    crops = sample_crops(8, 8, count=32, size=3, rng=np.random.default_rng(7))
    assert len(crops.offsets) == 32 and crops.size == 3
    for r, c in crops.offsets:
        assert 0 <= r <= 5 and 0 <= c <= 5
    again = sample_crops(8, 8, count=32, size=3, rng=np.random.default_rng(7))
    assert crops == again


def test_full_size_crop_is_origin():
    crops = sample_crops(8, 8, count=4, size=8, rng=np.random.default_rng(0))
    assert crops.offsets == ((0, 0),) * 4


def test_sample_crops_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        sample_crops(8, 8, count=4, size=0, rng=rng)
    with pytest.raises(ValueError):
        sample_crops(8, 8, count=4, size=9, rng=rng)
    with pytest.raises(ValueError):
        sample_crops(8, 8, count=0, size=3, rng=rng)


def test_crop_means_matches_manual_average():
    rng = np.random.default_rng(1)
    img = _image(rng)
    crops = CropSet(offsets=((0, 0), (2, 3), (5, 5)), size=3)
    out = crop_means(img, crops)
    assert out.shape == (3, 6)
    for row, (r, c) in zip(out, crops.offsets):
        assert np.allclose(row, img.grid[r:r + 3, c:c + 3].mean(axis=(0, 1)), atol=1e-12)


def test_glorot_uniform_bounds():
    w = glorot_uniform(np.random.default_rng(2), 20, 30, (20, 30))
    limit = np.sqrt(6.0 / 50.0)
    assert np.all(np.abs(w) <= limit)
    assert w.std() > 0.5 * limit / np.sqrt(3.0)  # actually spread out, not degenerate


# ---------------------------------------------------------------------------
# image encoder
# ---------------------------------------------------------------------------

def test_image_encoder_rejects_unknown_activation():
    with pytest.raises(ValueError):
        ImageEncoder(4, 8, 6, np.random.default_rng(0), activation="gelu")


def test_image_encoder_shapes_and_param_registry():
    enc = ImageEncoder(6, 10, 7, np.random.default_rng(3))
    assert set(enc.parameters()) == {"image.w1", "image.b1", "image.w2", "image.b2"}
    assert enc.parameters()["image.w1"].shape == (6, 10)
    out = enc.encode_means(np.zeros((5, 6)))
    assert out.shape == (5, 7)


def test_zeroed_final_layer_outputs_bias():
    enc = ImageEncoder(6, 10, 7, np.random.default_rng(4))
    enc.w2.data[:] = 0.0
    enc.b2.data[:] = np.arange(7.0)
    out = enc.encode_means(np.random.default_rng(5).standard_normal((3, 6)))
    assert np.allclose(out.data, np.tile(np.arange(7.0), (3, 1)), atol=1e-15)


def test_crop_permutation_permutes_rows():
    rng = np.random.default_rng(6)
    enc = ImageEncoder(6, 10, 7, rng)
    img = _image(rng)
    crops = sample_crops(8, 8, count=5, size=3, rng=rng)
    flipped = CropSet(offsets=crops.offsets[::-1], size=crops.size)
    assert np.allclose(enc.encode(img, crops).data,
                       enc.encode(img, flipped).data[::-1], atol=1e-15)


def test_encode_matches_encode_means():
    rng = np.random.default_rng(7)
    enc = ImageEncoder(6, 10, 7, rng)
    img = _image(rng)
    crops = sample_crops(8, 8, count=4, size=3, rng=rng)
    assert np.array_equal(enc.encode(img, crops).data,
                          enc.encode_means(crop_means(img, crops)).data)


def test_image_encoder_feature_dim_mismatch():
    enc = ImageEncoder(6, 10, 7, np.random.default_rng(8))
    with pytest.raises(ShapeError):
        enc.encode_means(np.zeros((3, 5)))


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_image_encoder_gradients(activation):
    rng = np.random.default_rng(9)
    enc = ImageEncoder(4, 6, 5, rng, activation=activation)
    means = rng.standard_normal((3, 4))
    w = rng.standard_normal((3, 5))
    report = grad_check(lambda: tensor_sum(enc.encode_means(means) * Tensor(w)),
                        enc.parameters())
    assert report.passed, str(report)


def test_image_encoder_init_is_seed_deterministic():
    a = ImageEncoder(6, 10, 7, np.random.default_rng(42))
    b = ImageEncoder(6, 10, 7, np.random.default_rng(42))
    for name in a.parameters():
        assert np.array_equal(a.parameters()[name].data, b.parameters()[name].data)


# ---------------------------------------------------------------------------
# text encoder
# ---------------------------------------------------------------------------

def test_text_encoder_identical_sequences_identical_rows():
    enc = TextEncoder(vocab_size=12, token_dim=5, embed_dim=7,
                      rng=np.random.default_rng(10))
    out = enc.encode([[0, 3, 3], [1, 2], [0, 3, 3]])
    assert out.shape == (3, 7)
    assert np.array_equal(out.data[0], out.data[2])
    assert not np.array_equal(out.data[0], out.data[1])


def test_text_encoder_order_invariant_bag():
    enc = TextEncoder(12, 5, 7, np.random.default_rng(11))
    assert np.allclose(enc.encode([[1, 2, 3]]).data, enc.encode([[3, 1, 2]]).data,
                       atol=1e-15)


def test_text_encoder_validation():
    enc = TextEncoder(12, 5, 7, np.random.default_rng(12))
    with pytest.raises(ValueError):
        enc.encode([[]])
    with pytest.raises(IndexError):
        enc.encode([[12]])


def test_text_encoder_gradients():
    rng = np.random.default_rng(13)
    enc = TextEncoder(8, 4, 5, rng)
    w = rng.standard_normal((2, 5))
    report = grad_check(lambda: tensor_sum(enc.encode([[0, 1], [5, 2, 2]]) * Tensor(w)),
                        enc.trainable_parameters())
    assert report.passed, str(report)


def test_frozen_text_encoder_has_no_trainables_and_caches():
    enc = TextEncoder(8, 4, 5, np.random.default_rng(14), frozen=True)
    assert enc.trainable_parameters() == {}
    assert all(not p.requires_grad for p in enc.parameters().values())
    first = enc.encode([[0, 1]])
    assert enc.encode([[0, 1]]) is first  # cached constant


def test_trainable_text_encoder_rebuilds_graph():
    enc = TextEncoder(8, 4, 5, np.random.default_rng(15))
    a = enc.encode([[0, 1]])
    b = enc.encode([[0, 1]])
    assert a is not b
    assert np.array_equal(a.data, b.data)


def test_frozen_text_encoder_untouched_by_gradient_flow():
    rng = np.random.default_rng(16)
    enc = TextEncoder(8, 4, 5, rng, frozen=True)
    before = {k: v.data.copy() for k, v in enc.parameters().items()}
    out = mean(enc.encode([[0, 1, 2]]))
    out.backward()
    for k, v in enc.parameters().items():
        assert v.grad is None
        assert np.array_equal(v.data, before[k])
