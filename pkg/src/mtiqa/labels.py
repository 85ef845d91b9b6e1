"""Joint (quality, scene, distortion) label space and its text templates.

Every combination of quality level, scene category and distortion type maps
to one natural-language sentence; the flat index enumerates combinations
with quality varying fastest, then distortion, then scene.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

QUALITY_WORDS = ("bad", "poor", "fair", "good", "perfect")
BINARY_QUALITY_WORDS = ("bad", "good")

SCENES = (
    "animal",
    "cityscape",
    "human",
    "indoor scene",
    "landscape",
    "night scene",
    "plant",
    "still-life",
    "others",
)

DISTORTIONS = (
    "blur",
    "color-related",
    "contrast",
    "jpeg compression",
    "jpeg2000 compression",
    "noise",
    "over-exposure",
    "quantization",
    "under-exposure",
    "spatially-localized",
    "others",
)

_VOWELS = "aeiou"
_PUNCTUATION = ",.;:!?()"


def _article(noun: str) -> str:
    return "an" if noun[0] in _VOWELS else "a"


class UnknownWordError(KeyError):
    """Raised when tokenizing a word outside the closed template vocabulary."""


@dataclass(frozen=True)
class LabelSpace:
    """The multitask label set and its sentence renderings."""

    quality: tuple[str, ...] = QUALITY_WORDS
    scenes: tuple[str, ...] = SCENES
    distortions: tuple[str, ...] = DISTORTIONS

    @classmethod
    def default(cls) -> "LabelSpace":
        return cls()

    @classmethod
    def binary_quality(cls) -> "LabelSpace":
        return cls(quality=BINARY_QUALITY_WORDS)

    @property
    def n_quality(self) -> int:
        return len(self.quality)

    @property
    def n_scenes(self) -> int:
        return len(self.scenes)

    @property
    def n_distortions(self) -> int:
        return len(self.distortions)

    @property
    def n_joint(self) -> int:
        return self.n_quality * self.n_scenes * self.n_distortions

    # -- indexing -----------------------------------------------------------

    def flat_index(self, quality_idx: int, scene_idx: int, distortion_idx: int) -> int:
        """Flatten (quality, scene, distortion) indices; quality varies fastest."""
        if not 0 <= quality_idx < self.n_quality:
            raise IndexError(f"quality index {quality_idx} out of range")
        if not 0 <= scene_idx < self.n_scenes:
            raise IndexError(f"scene index {scene_idx} out of range")
        if not 0 <= distortion_idx < self.n_distortions:
            raise IndexError(f"distortion index {distortion_idx} out of range")
        return (scene_idx * self.n_distortions + distortion_idx) * self.n_quality + quality_idx

    def unflatten(self, flat: int) -> tuple[int, int, int]:
        if not 0 <= flat < self.n_joint:
            raise IndexError(f"flat index {flat} out of range [0, {self.n_joint})")
        quality_idx = flat % self.n_quality
        rest = flat // self.n_quality
        distortion_idx = rest % self.n_distortions
        scene_idx = rest // self.n_distortions
        return quality_idx, scene_idx, distortion_idx

    # -- sentence templates ----------------------------------------------------

    def render(self, quality_idx: int, scene_idx: int, distortion_idx: int) -> str:
        s = self.scenes[scene_idx]
        d = self.distortions[distortion_idx]
        c = self.quality[quality_idx]
        return f"a photo of {_article(s)} {s} with {d} artifacts, which is of {c} quality"

    def descriptions(self) -> list[str]:
        """All joint sentences, ordered by flat index."""
        out = [""] * self.n_joint
        for s in range(self.n_scenes):
            for d in range(self.n_distortions):
                for c in range(self.n_quality):
                    out[self.flat_index(c, s, d)] = self.render(c, s, d)
        return out

    def scene_descriptions(self) -> list[str]:
        return [f"a photo of {_article(s)} {s}" for s in self.scenes]

    def distortion_descriptions(self) -> list[str]:
        return [f"a photo with {d} artifacts" for d in self.distortions]

    def quality_descriptions(self) -> list[str]:
        return [f"a photo of {c} quality" for c in self.quality]

    def digest(self) -> int:
        """Stable 64-bit fingerprint of the full label set (checkpoint headers)."""
        blob = "\x1f".join(self.descriptions()).encode("utf-8")
        return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")

    def content_digest(self) -> int:
        """Fingerprint of the scene and distortion sets only (dataset headers).

        Records store scene and distortion indices but no quality words, so
        dataset files stay readable by models with a different quality axis.
        """
        blob = "\x1f".join(self.scenes + ("\x1e",) + self.distortions).encode("utf-8")
        return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


def normalize_text(text: str) -> list[str]:
    """Lower-case, strip punctuation, split on whitespace."""
    cleaned = text.lower().translate(str.maketrans("", "", _PUNCTUATION))
    return cleaned.split()


@dataclass(frozen=True)
class Vocabulary:
    """Closed word list derived from the label-space templates."""

    words: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})

    @classmethod
    def for_space(cls, space: LabelSpace) -> "Vocabulary":
        seen: set[str] = set()
        texts = (
            space.descriptions()
            + space.scene_descriptions()
            + space.distortion_descriptions()
            + space.quality_descriptions()
        )
        for text in texts:
            seen.update(normalize_text(text))
        return cls(words=tuple(sorted(seen)))

    def __len__(self) -> int:
        return len(self.words)

    def encode(self, text: str) -> list[int]:
        ids = []
        for word in normalize_text(text):
            if word not in self._index:
                raise UnknownWordError(f"word '{word}' is not in the template vocabulary")
            ids.append(self._index[word])
        return ids

    def decode(self, ids) -> str:
        return " ".join(self.words[i] for i in ids)
