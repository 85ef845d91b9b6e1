"""Fidelity-based training losses and dynamic task weighting.

Quality is supervised through pairwise comparisons under a Thurstone model:
the probability that image x beats image y is Phi((qx - qy) / sqrt(2)).
All three tasks use the fidelity loss 1 - sum_i sqrt(p_i * phat_i), which is
smooth and bounded on [0, 1] for binary or categorical targets.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

INV_SQRT2 = 1.0 / np.sqrt(2.0)

TASKS = ("quality", "scene", "distortion")
SCENE_LOSS_VARIANTS = ("binary", "softmax")


def pair_label(mos_x: float, mos_y: float, dataset_x: int = 0, dataset_y: int = 0) -> float:
    """1.0 when x is rated at least as high as y; pairs must share a dataset."""
    if dataset_x != dataset_y:
        raise ValueError(
            f"cannot compare ratings across datasets {dataset_x} and {dataset_y}")
    return 1.0 if mos_x >= mos_y else 0.0


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def thurstone_probability(qx, qy) -> Tensor:
    """P(x preferred over y) under unit-variance Gaussian score noise."""
    diff = ad.sub(_wrap(qx), _wrap(qy))
    return ad.normal_cdf(ad.mul(diff, INV_SQRT2))


def fidelity_quality(label: float, p_hat) -> Tensor:
    """Fidelity loss against a binary preference label.

    Only the surviving square-root term is built, which keeps the gradient
    finite (the dropped term is identically zero, not merely small).
    """
    p_hat = _wrap(p_hat)
    if label == 1.0:
        return ad.sub(1.0, ad.sqrt(p_hat))
    if label == 0.0:
        return ad.sub(1.0, ad.sqrt(ad.sub(1.0, p_hat)))
    raise ValueError(f"pair label must be 0 or 1, got {label}")


def quality_pair_losses(labels: np.ndarray, p_hat: Tensor) -> Tensor:
    """Vectorized fidelity loss for a batch of pairs with binary labels."""
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != p_hat.shape:
        raise ad.ShapeError(f"labels {labels.shape} vs predictions {p_hat.shape}")
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise ValueError("pair labels must be 0 or 1")
    # p * phat + (1-p) * (1-phat) selects the surviving term of the fidelity
    # loss; the selector is constant so no dead sqrt branch enters the graph.
    matched = ad.add(ad.mul(p_hat, labels), ad.mul(ad.sub(1.0, p_hat), 1.0 - labels))
    return ad.sub(1.0, ad.sqrt(matched))


def scene_loss(target_indices, scene_marginal: Tensor, variant: str = "binary") -> Tensor:
    """Multi-label scene loss for one image.

    ``binary`` averages a per-category fidelity term over every scene;
    ``softmax`` treats the target set as a uniform distribution and takes
    one fidelity term against the scene posterior.
    """
    targets = sorted(set(int(i) for i in target_indices))
    n_scenes = scene_marginal.shape[-1]
    if not targets:
        raise ValueError("an image needs at least one scene label")
    if targets[0] < 0 or targets[-1] >= n_scenes:
        raise IndexError(f"scene index out of range for {n_scenes} categories")
    mask = np.zeros(n_scenes)
    mask[targets] = 1.0
    return _scene_loss_masked(mask.reshape(1, -1),
                              ad.reshape(scene_marginal, (1, n_scenes)),
                              variant)[0]


def scene_losses(target_mask: np.ndarray, scene_marginals: Tensor,
                 variant: str = "binary") -> Tensor:
    """Vectorized scene loss over a batch; ``target_mask`` is (B, S) in {0,1}."""
    return _scene_loss_masked(np.asarray(target_mask, dtype=np.float64),
                              scene_marginals, variant)


def _scene_loss_masked(mask: np.ndarray, marginals: Tensor, variant: str) -> Tensor:
    if variant not in SCENE_LOSS_VARIANTS:
        raise ValueError(f"unknown scene loss variant '{variant}'")
    if mask.shape != marginals.shape:
        raise ad.ShapeError(f"scene mask {mask.shape} vs marginals {marginals.shape}")
    if not np.all(mask.sum(axis=1) >= 1):
        raise ValueError("every image needs at least one scene label")
    if variant == "binary":
        # Per category exactly one fidelity term survives: sqrt(m) for targets,
        # sqrt(1 - m) otherwise. Selecting inside the sqrt keeps gradients finite.
        inside = ad.add(ad.mul(marginals, mask), ad.mul(ad.sub(1.0, marginals), 1.0 - mask))
        return ad.mean(ad.sub(1.0, ad.sqrt(inside)), axis=1)
    # Uniform target distribution over the labelled scenes; off-target terms of
    # the fidelity sum are identically zero, so the sqrt is padded with ones
    # there and masked back out after.
    probs = mask / mask.sum(axis=1, keepdims=True)
    inside = ad.add(ad.mul(marginals, probs), 1.0 - (mask > 0))
    terms = ad.mul(ad.sqrt(inside), (mask > 0).astype(np.float64))
    return ad.sub(1.0, ad.tensor_sum(terms, axis=1))


def distortion_loss(target_idx: int, distortion_marginal: Tensor) -> Tensor:
    """Single-label fidelity loss: 1 - sqrt of the posterior at the target."""
    n = distortion_marginal.shape[-1]
    if not 0 <= target_idx < n:
        raise IndexError(f"distortion index {target_idx} out of range for {n} categories")
    return ad.sub(1.0, ad.sqrt(distortion_marginal[int(target_idx)]))


def distortion_losses(targets: np.ndarray, distortion_marginals: Tensor) -> Tensor:
    """Vectorized single-label fidelity loss over a batch."""
    targets = np.asarray(targets, dtype=np.intp)
    n = distortion_marginals.shape[-1]
    if targets.min() < 0 or targets.max() >= n:
        raise IndexError(f"distortion index out of range for {n} categories")
    return ad.sub(1.0, ad.sqrt(ad.pick(distortion_marginals, targets)))


def total_loss(task_means: dict[str, Tensor], weights: dict[str, float]) -> Tensor:
    """Weighted sum of per-task mean losses; weights cover exactly the active tasks."""
    if set(task_means) != set(weights):
        raise ValueError(f"weights {sorted(weights)} do not match tasks {sorted(task_means)}")
    if not task_means:
        raise ValueError("no active tasks")
    total = None
    for task in TASKS:
        if task not in task_means:
            continue
        term = ad.mul(task_means[task], float(weights[task]))
        total = term if total is None else ad.add(total, term)
    return total


def dwa_weights(last: dict[str, float], before: dict[str, float], tau: float) -> dict[str, float]:
    """Soft-maxed loss-descent ratios; tasks whose loss shrank fastest get less weight."""
    if tau <= 0:
        raise ValueError("dwa temperature must be positive")
    tasks = sorted(last)
    if sorted(before) != tasks:
        raise ValueError("loss histories cover different task sets")
    ratios = []
    for task in tasks:
        if before[task] <= 0:
            raise ValueError(f"cannot form loss ratio for '{task}': previous average <= 0")
        ratios.append(last[task] / before[task])
    scaled = np.asarray(ratios) / tau
    scaled -= scaled.max()
    expd = np.exp(scaled)
    lam = expd / expd.sum()
    return {task: float(w) for task, w in zip(tasks, lam)}


class DynamicWeightAverager:
    """Tracks per-epoch average task losses and reweights at epoch boundaries.

    Weights are uniform until two epoch averages exist; afterwards each
    task's weight follows the ratio of its last two epoch-average losses
    through a temperature-tau softmax. ``window`` limits the average to the
    final iterations of each epoch (all iterations when None).
    """

    def __init__(self, tasks, tau: float = 2.0, window: int | None = None):
        self.tasks = tuple(tasks)
        if not self.tasks:
            raise ValueError("need at least one task")
        self.tau = float(tau)
        self.window = window
        self._current: dict[str, list[float]] = {t: [] for t in self.tasks}
        self.history: list[dict[str, float]] = []
        self.weights = {t: 1.0 / len(self.tasks) for t in self.tasks}

    def observe_iteration(self, losses: dict[str, float]) -> None:
        for task in self.tasks:
            self._current[task].append(float(losses[task]))

    def end_epoch(self) -> dict[str, float]:
        """Fold the finished epoch into the history and return the new weights."""
        if not self._current[self.tasks[0]]:
            raise ValueError("end_epoch called before any iterations were observed")
        averages = {}
        for task in self.tasks:
            values = self._current[task]
            if self.window is not None:
                values = values[-self.window:]
            averages[task] = float(np.mean(values))
        self.history.append(averages)
        self._current = {t: [] for t in self.tasks}
        if len(self.history) >= 2 and len(self.tasks) > 1:
            self.weights = dwa_weights(self.history[-1], self.history[-2], self.tau)
        return dict(self.weights)
