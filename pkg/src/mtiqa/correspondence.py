"""Image-text correspondence and the joint label distribution.

The match between an image and a label sentence is the cosine similarity
between their embeddings, averaged over the image's crops. Dividing by a
learnable temperature and applying a softmax over every sentence yields a
joint distribution over (quality, scene, distortion); marginalizing gives
the per-task posteriors, and the expected quality level gives the score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .labels import LabelSpace


class Temperature:
    """Softmax temperature, learned on a log scale so it stays positive."""

    def __init__(self, init: float = 0.07):
        if init <= 0:
            raise ValueError("temperature must be positive")
        self.log_tau = Tensor(np.log(init), requires_grad=True)

    def parameters(self) -> dict[str, Tensor]:
        return {"temperature.log_tau": self.log_tau}

    def value(self) -> Tensor:
        return ad.exp(self.log_tau)


def correspondence_logits(crop_embeds: Tensor, text_embeds: Tensor,
                          crops_per_image: int | None = None) -> Tensor:
    """Crop-averaged cosine similarity against every description.

    With ``crops_per_image=None`` the input is one image's crops (U, K) and
    the result has shape (V,). Otherwise ``crop_embeds`` stacks a whole
    batch (B*U, K) and the result is (B, V). Both embedding matrices are
    row-normalized here, so callers pass raw (unnormalized) embeddings; a
    zero-norm row is an error.
    """
    if crop_embeds.ndim != 2 or text_embeds.ndim != 2:
        raise ShapeError(
            f"expected 2-d embeddings, got {crop_embeds.shape} and {text_embeds.shape}")
    if crop_embeds.shape[1] != text_embeds.shape[1]:
        raise ShapeError(
            f"embedding dims differ: {crop_embeds.shape[1]} vs {text_embeds.shape[1]}")
    f_unit = ad.l2_normalize(crop_embeds, axis=1)
    g_unit = ad.l2_normalize(text_embeds, axis=1)
    sims = ad.matmul(f_unit, ad.transpose(g_unit))
    if crops_per_image is None:
        return ad.mean(sims, axis=0)
    n, v = sims.shape
    if n % crops_per_image:
        raise ShapeError(f"{n} crop rows are not a multiple of {crops_per_image} per image")
    grouped = ad.reshape(sims, (n // crops_per_image, crops_per_image, v))
    return ad.mean(grouped, axis=1)


def joint_probabilities(logits: Tensor, temperature: Temperature | Tensor) -> Tensor:
    """Temperature-scaled softmax over the last axis."""
    tau = temperature.value() if isinstance(temperature, Temperature) else temperature
    return ad.softmax(ad.div(logits, tau), axis=-1)


@dataclass
class LabelPrediction:
    """Arg-max indices of each task marginal (ties go to the lowest index)."""

    quality_idx: np.ndarray
    scene_idx: np.ndarray
    distortion_idx: np.ndarray


class JointDistribution:
    """A joint probability vector (or batch of them) with cached marginals."""

    def __init__(self, probs: Tensor, space: LabelSpace):
        if probs.shape[-1] != space.n_joint:
            raise ShapeError(
                f"joint vector has {probs.shape[-1]} entries, space needs {space.n_joint}")
        self.probs = probs
        self.space = space
        shape = probs.shape[:-1] + (space.n_scenes, space.n_distortions, space.n_quality)
        self._grid = ad.reshape(probs, shape)
        self._marginals: dict[str, Tensor] = {}

    def scene_marginal(self) -> Tensor:
        if "scene" not in self._marginals:
            self._marginals["scene"] = ad.tensor_sum(ad.tensor_sum(self._grid, axis=-1), axis=-1)
        return self._marginals["scene"]

    def distortion_marginal(self) -> Tensor:
        if "distortion" not in self._marginals:
            self._marginals["distortion"] = ad.tensor_sum(ad.tensor_sum(self._grid, axis=-1), axis=-2)
        return self._marginals["distortion"]

    def quality_marginal(self) -> Tensor:
        if "quality" not in self._marginals:
            self._marginals["quality"] = ad.tensor_sum(ad.tensor_sum(self._grid, axis=-3), axis=-2)
        return self._marginals["quality"]

    def quality_score(self) -> Tensor:
        """Expected quality level, in [1, n_quality]."""
        return quality_score(self.quality_marginal())

    def predicted(self) -> LabelPrediction:
        return LabelPrediction(
            quality_idx=np.argmax(self.quality_marginal().data, axis=-1),
            scene_idx=np.argmax(self.scene_marginal().data, axis=-1),
            distortion_idx=np.argmax(self.distortion_marginal().data, axis=-1),
        )


def quality_score(quality_marginal: Tensor) -> Tensor:
    """Expectation of the 1-based quality level under a quality marginal."""
    levels = Tensor(np.arange(1, quality_marginal.shape[-1] + 1, dtype=np.float64))
    return ad.tensor_sum(ad.mul(quality_marginal, levels), axis=-1)


@dataclass
class HeadDistributions:
    """Independent per-task posteriors for the separate-template variant."""

    scene: Tensor
    distortion: Tensor
    quality: Tensor

    def quality_score(self) -> Tensor:
        return quality_score(self.quality)

    def predicted(self) -> LabelPrediction:
        return LabelPrediction(
            quality_idx=np.argmax(self.quality.data, axis=-1),
            scene_idx=np.argmax(self.scene.data, axis=-1),
            distortion_idx=np.argmax(self.distortion.data, axis=-1),
        )


def head_distributions(crop_embeds: Tensor, scene_texts: Tensor, distortion_texts: Tensor,
                       quality_texts: Tensor, temperature: Temperature | Tensor,
                       crops_per_image: int | None = None) -> HeadDistributions:
    """Score each task's own template set and soft-max the three heads independently."""
    tau = temperature.value() if isinstance(temperature, Temperature) else temperature
    out = {}
    for name, texts in (("scene", scene_texts), ("distortion", distortion_texts),
                        ("quality", quality_texts)):
        logits = correspondence_logits(crop_embeds, texts, crops_per_image)
        out[name] = ad.softmax(ad.div(logits, tau), axis=-1)
    return HeadDistributions(scene=out["scene"], distortion=out["distortion"],
                             quality=out["quality"])
