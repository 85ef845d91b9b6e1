"""Tests for correspondence logits and the joint label distribution."""

import numpy as np
import pytest

from mtiqa.autodiff import ShapeError, Tensor
from mtiqa.correspondence import (HeadDistributions, JointDistribution, Temperature,
                                  correspondence_logits, head_distributions,
                                  joint_probabilities, quality_score)
from mtiqa.labels import LabelSpace

SPACE = LabelSpace.default()


def _random_joint(rng, batch=None):
    shape = (SPACE.n_joint,) if batch is None else (batch, SPACE.n_joint)
    logits = Tensor(rng.standard_normal(shape))
    return joint_probabilities(logits, Tensor(np.array(1.0)))


def _brute_force_marginals(p):
    """Accumulate marginals entry by entry via unflatten (independent path)."""
    scene = np.zeros(SPACE.n_scenes)
    dist = np.zeros(SPACE.n_distortions)
    qual = np.zeros(SPACE.n_quality)
    for flat in range(SPACE.n_joint):
        c, s, d = SPACE.unflatten(flat)
        scene[s] += p[flat]
        dist[d] += p[flat]
        qual[c] += p[flat]
    return qual, scene, dist


# ---------------------------------------------------------------------------
# temperature and logits
# ---------------------------------------------------------------------------

def test_temperature_value_and_positivity():
    t = Temperature(0.07)
    assert t.value().item() == pytest.approx(0.07, rel=1e-12)
    assert set(t.parameters()) == {"temperature.log_tau"}
    t.log_tau.data -= 100.0  # extreme update keeps tau positive
    assert t.value().item() > 0.0
    with pytest.raises(ValueError):
        Temperature(0.0)


def test_parallel_rows_score_one_orthogonal_rows_zero():
    crops = Tensor(np.array([[2.0, 0.0], [3.0, 0.0]]))
    texts = Tensor(np.array([[5.0, 0.0], [0.0, 0.25]]))
    logits = correspondence_logits(crops, texts)
    assert logits.data[0] == pytest.approx(1.0, abs=1e-12)
    assert logits.data[1] == pytest.approx(0.0, abs=1e-12)


def test_logits_invariant_to_row_scaling():
    rng = np.random.default_rng(0)
    crops = rng.standard_normal((6, 8))
    texts = rng.standard_normal((10, 8))
    base = correspondence_logits(Tensor(crops), Tensor(texts)).data
    crop_scale = rng.uniform(0.01, 100.0, (6, 1))
    text_scale = rng.uniform(0.01, 100.0, (10, 1))
    scaled = correspondence_logits(Tensor(crops * crop_scale),
                                   Tensor(texts * text_scale)).data
    assert np.allclose(base, scaled, atol=1e-12)


def test_logits_batch_grouping_matches_per_image():
    rng = np.random.default_rng(1)
    crops = rng.standard_normal((6, 8))  # 3 images x 2 crops
    texts = rng.standard_normal((5, 8))
    batched = correspondence_logits(Tensor(crops), Tensor(texts), crops_per_image=2)
    assert batched.shape == (3, 5)
    for i in range(3):
        single = correspondence_logits(Tensor(crops[2 * i:2 * i + 2]), Tensor(texts))
        assert np.allclose(batched.data[i], single.data, atol=1e-12)


def test_logits_shape_validation():
    rng = np.random.default_rng(2)
    with pytest.raises(ShapeError):
        correspondence_logits(Tensor(rng.standard_normal(8)),
                              Tensor(rng.standard_normal((5, 8))))
    with pytest.raises(ShapeError):
        correspondence_logits(Tensor(rng.standard_normal((6, 8))),
                              Tensor(rng.standard_normal((5, 7))))
    with pytest.raises(ShapeError):
        correspondence_logits(Tensor(rng.standard_normal((5, 8))),
                              Tensor(rng.standard_normal((5, 8))), crops_per_image=2)


def test_cosine_bounds():
    rng = np.random.default_rng(3)
    logits = correspondence_logits(Tensor(rng.standard_normal((7, 5))),
                                   Tensor(rng.standard_normal((20, 5))))
    assert np.all(logits.data <= 1.0 + 1e-12)
    assert np.all(logits.data >= -1.0 - 1e-12)


# ---------------------------------------------------------------------------
# joint probabilities and marginals
# ---------------------------------------------------------------------------

def test_joint_probabilities_sum_to_one():
    rng = np.random.default_rng(4)
    probs = _random_joint(rng, batch=64)
    assert np.allclose(probs.data.sum(axis=-1), 1.0, atol=1e-9)
    assert np.all(probs.data >= 0.0)


def test_temperature_sharpens_distribution():
    rng = np.random.default_rng(5)
    logits = Tensor(rng.standard_normal(SPACE.n_joint))
    warm = joint_probabilities(logits, Tensor(np.array(1.0))).data
    cold = joint_probabilities(logits, Tensor(np.array(1e-3))).data
    assert cold.max() > 0.999
    assert np.argmax(cold) == np.argmax(warm) == np.argmax(logits.data)


def test_temperature_object_and_tensor_agree():
    rng = np.random.default_rng(6)
    logits = Tensor(rng.standard_normal(SPACE.n_joint))
    via_obj = joint_probabilities(logits, Temperature(0.25)).data
    via_tensor = joint_probabilities(logits, Tensor(np.array(0.25))).data
    assert np.allclose(via_obj, via_tensor, atol=1e-12)


def test_uniform_logits_give_uniform_joint():
    probs = joint_probabilities(Tensor(np.zeros(SPACE.n_joint)), Tensor(np.array(0.07)))
    assert np.allclose(probs.data, 1.0 / SPACE.n_joint, atol=1e-15)


def test_marginals_sum_to_one_and_match_brute_force():
    rng = np.random.default_rng(7)
    joint = JointDistribution(_random_joint(rng, batch=50), SPACE)
    q = joint.quality_marginal().data
    s = joint.scene_marginal().data
    d = joint.distortion_marginal().data
    assert q.shape == (50, 5) and s.shape == (50, 9) and d.shape == (50, 11)
    for m in (q, s, d):
        assert np.allclose(m.sum(axis=-1), 1.0, atol=1e-9)
    for i in range(50):
        bq, bs, bd = _brute_force_marginals(joint.probs.data[i])
        assert np.allclose(q[i], bq, atol=1e-12)
        assert np.allclose(s[i], bs, atol=1e-12)
        assert np.allclose(d[i], bd, atol=1e-12)


def test_one_hot_joint_concentrates_marginals():
    c, s, d = 3, 7, 2
    p = np.zeros(SPACE.n_joint)
    p[SPACE.flat_index(c, s, d)] = 1.0
    joint = JointDistribution(Tensor(p), SPACE)
    pred = joint.predicted()
    assert (int(pred.quality_idx), int(pred.scene_idx), int(pred.distortion_idx)) == (c, s, d)
    assert joint.quality_score().item() == pytest.approx(c + 1.0, abs=1e-12)


def test_quality_score_stays_in_range():
    rng = np.random.default_rng(8)
    joint = JointDistribution(_random_joint(rng, batch=200), SPACE)
    scores = joint.quality_score().data
    assert scores.shape == (200,)
    assert np.all(scores >= 1.0) and np.all(scores <= 5.0)


def test_predicted_ties_take_lowest_index():
    joint = JointDistribution(Tensor(np.full(SPACE.n_joint, 1.0 / SPACE.n_joint)), SPACE)
    pred = joint.predicted()
    assert (int(pred.quality_idx), int(pred.scene_idx), int(pred.distortion_idx)) == (0, 0, 0)


def test_joint_distribution_shape_validation():
    with pytest.raises(ShapeError):
        JointDistribution(Tensor(np.ones(100) / 100.0), SPACE)


# ---------------------------------------------------------------------------
# quality score
# ---------------------------------------------------------------------------

def test_quality_score_known_values():
    one_hot_perfect = Tensor(np.array([0.0, 0.0, 0.0, 0.0, 1.0]))
    uniform = Tensor(np.full(5, 0.2))
    half_split = Tensor(np.array([0.5, 0.5, 0.0, 0.0, 0.0]))
    assert quality_score(one_hot_perfect).item() == pytest.approx(5.0, abs=1e-15)
    assert quality_score(uniform).item() == pytest.approx(3.0, abs=1e-15)
    assert quality_score(half_split).item() == pytest.approx(1.5, abs=1e-15)


def test_quality_score_monotone_in_mass_shift():
    base = np.array([0.3, 0.3, 0.2, 0.1, 0.1])
    shifted = base.copy()
    shifted[0] -= 0.1
    shifted[4] += 0.1
    assert quality_score(Tensor(shifted)).item() > quality_score(Tensor(base)).item()


# ---------------------------------------------------------------------------
# separate template heads
# ---------------------------------------------------------------------------

def test_head_distributions_are_independent_softmaxes():
    rng = np.random.default_rng(9)
    crops = Tensor(rng.standard_normal((4, 8)))  # 2 images x 2 crops
    scene_t = Tensor(rng.standard_normal((9, 8)))
    dist_t = Tensor(rng.standard_normal((11, 8)))
    qual_t = Tensor(rng.standard_normal((5, 8)))
    tau = Tensor(np.array(0.3))
    heads = head_distributions(crops, scene_t, dist_t, qual_t, tau, crops_per_image=2)
    assert isinstance(heads, HeadDistributions)
    assert heads.scene.shape == (2, 9)
    assert heads.distortion.shape == (2, 11)
    assert heads.quality.shape == (2, 5)
    for m in (heads.scene, heads.distortion, heads.quality):
        assert np.allclose(m.data.sum(axis=-1), 1.0, atol=1e-12)

    logits = correspondence_logits(crops, qual_t, crops_per_image=2).data
    z = logits / 0.3
    manual = np.exp(z - z.max(axis=-1, keepdims=True))
    manual /= manual.sum(axis=-1, keepdims=True)
    assert np.allclose(heads.quality.data, manual, atol=1e-12)

    scores = heads.quality_score().data
    assert np.all((scores >= 1.0) & (scores <= 5.0))
    pred = heads.predicted()
    assert pred.scene_idx.shape == (2,)
