"""Toy feature-grid image encoder and bag-of-words text encoder.

Images are pre-extracted patch-feature grids (no pixels anywhere in the
system). A crop is a square sub-grid; its patch features are mean-pooled
and pushed through a small MLP to produce one embedding per crop. Text
descriptions are embedded by averaging learned token vectors and applying
a linear map, so both modalities land in the same space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class FeatureImage:
    """An H x W grid of patch feature vectors (H, W, feature_dim)."""

    grid: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        if grid.ndim != 3:
            raise ValueError(f"feature grid must be 3-d (H, W, D), got shape {grid.shape}")
        if not np.all(np.isfinite(grid)):
            raise ValueError("feature grid contains non-finite values")
        object.__setattr__(self, "grid", grid)

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    @property
    def width(self) -> int:
        return self.grid.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.grid.shape[2]


@dataclass(frozen=True)
class CropSet:
    """Top-left offsets of equally sized square crops."""

    offsets: tuple[tuple[int, int], ...]
    size: int


def sample_crops(height: int, width: int, count: int, size: int,
                 rng: np.random.Generator) -> CropSet:
    """Draw ``count`` uniformly random crops that lie fully inside the grid."""
    if size <= 0:
        raise ValueError("crop size must be positive")
    if size > height or size > width:
        raise ValueError(f"crop size {size} exceeds grid extent {height}x{width}")
    if count <= 0:
        raise ValueError("crop count must be positive")
    rows = rng.integers(0, height - size + 1, size=count)
    cols = rng.integers(0, width - size + 1, size=count)
    return CropSet(offsets=tuple((int(r), int(c)) for r, c in zip(rows, cols)), size=size)


def crop_means(image: FeatureImage, crops: CropSet) -> np.ndarray:
    """Mean patch feature of every crop, shape (n_crops, feature_dim)."""
    out = np.empty((len(crops.offsets), image.feature_dim), dtype=np.float64)
    k = crops.size
    for i, (r, c) in enumerate(crops.offsets):
        out[i] = image.grid[r:r + k, c:c + k].mean(axis=(0, 1))
    return out


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: tuple[int, ...]) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class ImageEncoder:
    """Mean-pooled crop features -> tanh MLP -> shared embedding space."""

    def __init__(self, feature_dim: int, hidden_dim: int, embed_dim: int,
                 rng: np.random.Generator, activation: str = "tanh"):
        if activation not in ("tanh", "relu"):
            raise ValueError(f"unknown activation '{activation}'")
        self.feature_dim = feature_dim
        self.hidden_dim = hidden_dim
        self.embed_dim = embed_dim
        self.activation = activation
        self.w1 = Tensor(glorot_uniform(rng, feature_dim, hidden_dim, (feature_dim, hidden_dim)),
                         requires_grad=True)
        self.b1 = Tensor(np.zeros(hidden_dim), requires_grad=True)
        self.w2 = Tensor(glorot_uniform(rng, hidden_dim, embed_dim, (hidden_dim, embed_dim)),
                         requires_grad=True)
        self.b2 = Tensor(np.zeros(embed_dim), requires_grad=True)

    def parameters(self) -> dict[str, Tensor]:
        return {"image.w1": self.w1, "image.b1": self.b1,
                "image.w2": self.w2, "image.b2": self.b2}

    def encode_means(self, means: np.ndarray | Tensor) -> Tensor:
        """Embed pre-pooled crop means, shape (n, feature_dim) -> (n, embed_dim)."""
        x = means if isinstance(means, Tensor) else Tensor(np.asarray(means, dtype=np.float64))
        if x.ndim != 2 or x.shape[1] != self.feature_dim:
            raise ad.ShapeError(f"expected (n, {self.feature_dim}) crop means, got {x.shape}")
        pre = ad.add(ad.matmul(x, self.w1), self.b1)
        hidden = ad.tanh(pre) if self.activation == "tanh" else ad.relu(pre)
        return ad.add(ad.matmul(hidden, self.w2), self.b2)

    def encode(self, image: FeatureImage, crops: CropSet) -> Tensor:
        """One embedding row per crop of ``image``."""
        return self.encode_means(crop_means(image, crops))


class TextEncoder:
    """Token-embedding average followed by a linear map into the shared space."""

    def __init__(self, vocab_size: int, token_dim: int, embed_dim: int,
                 rng: np.random.Generator, frozen: bool = False):
        self.vocab_size = vocab_size
        self.token_dim = token_dim
        self.embed_dim = embed_dim
        self.frozen = frozen
        trainable = not frozen
        self.embed = Tensor(glorot_uniform(rng, vocab_size, token_dim, (vocab_size, token_dim)),
                            requires_grad=trainable)
        self.w = Tensor(glorot_uniform(rng, token_dim, embed_dim, (token_dim, embed_dim)),
                        requires_grad=trainable)
        self.b = Tensor(np.zeros(embed_dim), requires_grad=trainable)
        self._cache: dict[tuple, Tensor] = {}

    def parameters(self) -> dict[str, Tensor]:
        return {"text.embed": self.embed, "text.w": self.w, "text.b": self.b}

    def trainable_parameters(self) -> dict[str, Tensor]:
        return {} if self.frozen else self.parameters()

    def _bag_matrix(self, sequences) -> np.ndarray:
        bag = np.zeros((len(sequences), self.vocab_size), dtype=np.float64)
        for i, seq in enumerate(sequences):
            if len(seq) == 0:
                raise ValueError(f"token sequence {i} is empty")
            for token in seq:
                if not 0 <= token < self.vocab_size:
                    raise IndexError(f"token id {token} outside vocabulary of size {self.vocab_size}")
                bag[i, token] += 1.0
            bag[i] /= len(seq)
        return bag

    def encode(self, sequences) -> Tensor:
        """Embed token-id sequences, one row per sequence.

        When frozen, the result is a cached constant; when trainable it is
        rebuilt every call so gradients reach the current parameters.
        """
        if self.frozen:
            key = tuple(tuple(seq) for seq in sequences)
            if key not in self._cache:
                self._cache[key] = self._encode_fresh(sequences)
            return self._cache[key]
        return self._encode_fresh(sequences)

    def _encode_fresh(self, sequences) -> Tensor:
        bag = Tensor(self._bag_matrix(sequences))
        pooled = ad.matmul(bag, self.embed)
        return ad.add(ad.matmul(pooled, self.w), self.b)
