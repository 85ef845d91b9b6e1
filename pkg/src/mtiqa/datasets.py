"""Synthetic multi-dataset corpus of distorted feature-grid images.

Each dataset is a collection of reference contents; every reference appears
once pristine and several times degraded by one of ten distortion types at a
random severity. A reference is a scene-prototype mixture plus a smooth
detail field and per-block texture, both confined to a fixed texture
subspace; structure at and above the 2x2-block scale is what downstream
crop pooling can see, so every distortion is calibrated to leave a
block-scale signature that grows with severity. The latent quality follows
``1 + 4 * (1 - severity) ** gamma``; the stored opinion score adds observer
noise and a dataset-specific positive affine re-scale, so scores are only
comparable within a dataset. Generation is deterministic per seed, with an
independent random stream per image version.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoders import FeatureImage
from .labels import DISTORTIONS, SCENES, LabelSpace

MAGIC = b"MTIQA1\x00"
_HEADER = struct.Struct("<IIIIQ")
_RECORD = struct.Struct("<IIIHBdd")

_OTHERS_DISTORTION = DISTORTIONS.index("others")
_EXPOSURE_STRENGTH = 1.35
_NOISE_STRENGTH = 0.8
_NOISE_BIAS = 1.1
_LOCALIZED_BOOST = 4.0
_CONTRAST_SHRINK = 0.75
_COLOR_MAX_ANGLE = 0.75 * np.pi
_CELL_NOISE = 0.08
_TEXTURE_SUBSPACE_FRACTION = 0.5  # floor of the texture-subspace width (scene count wins if larger)
_BASE_STRENGTH = 1.5
_PEDESTAL = 1.2
_PROTOTYPE_STRENGTH = 2.2

# Per-dataset draw frequencies over the ten active distortion types, in label
# order (blur, color, contrast, jpeg, jpeg2000, noise, over-exp, quantization,
# under-exp, localized). Dataset 0 leans on codec-style degradations, dataset 1
# on capture-style ones, dataset 2 is uniform; further datasets cycle.
_DISTORTION_PROFILES = (
    (0.13, 0.07, 0.07, 0.14, 0.13, 0.13, 0.07, 0.13, 0.07, 0.06),
    (0.08, 0.13, 0.13, 0.06, 0.06, 0.09, 0.13, 0.06, 0.13, 0.13),
    (0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10),
)

# Positive-slope affine (scale, shift) applied to the clipped [1, 5] opinion
# scores so each dataset lives on its own range.
_MOS_AFFINES = ((1.0, 0.0), (20.0, -15.0), (0.5, 2.0))


class DataFormatError(ValueError):
    """Raised when a dataset file is malformed; the message names the byte offset."""


@dataclass(frozen=True)
class GeneratorConfig:
    n_datasets: int = 3
    images_per_dataset: int = 550
    versions_per_reference: int = 5
    grid_size: int = 8
    feature_dim: int = 16
    prototypes_per_scene: int = 3
    detail_amplitude: float = 0.4
    texture_noise: float = 0.4
    observer_noise: float = 0.15
    quality_gamma: float = 1.5
    min_severity: float = 0.3

    def __post_init__(self):
        if self.n_datasets < 1:
            raise ValueError("need at least one dataset")
        if self.versions_per_reference < 2:
            raise ValueError("each reference needs a pristine and a distorted version")
        if self.images_per_dataset < self.versions_per_reference:
            raise ValueError("images_per_dataset smaller than one reference group")
        if not 0 < self.min_severity < 1:
            raise ValueError("min_severity must lie in (0, 1)")


@dataclass(frozen=True)
class ImageRecord:
    image_id: int
    dataset_id: int
    reference_id: int
    scene_labels: tuple[int, ...]
    distortion: int
    severity: float
    mos: float
    features: FeatureImage


def latent_quality(severity: float, gamma: float = 1.5) -> float:
    """Ideal quality on [1, 5]: pristine content scores 5, severity 1 scores 1."""
    if not 0.0 <= severity <= 1.0:
        raise ValueError(f"severity {severity} outside [0, 1]")
    return 1.0 + 4.0 * (1.0 - severity) ** gamma


def mos_affine(dataset_id: int) -> tuple[float, float]:
    scale, shift = _MOS_AFFINES[dataset_id % len(_MOS_AFFINES)]
    # Cycle with a small positive perturbation so extra datasets stay distinct.
    bump = dataset_id // len(_MOS_AFFINES)
    return scale * (1.0 + 0.5 * bump), shift + bump


def distortion_profile(dataset_id: int) -> tuple[float, ...]:
    return _DISTORTION_PROFILES[dataset_id % len(_DISTORTION_PROFILES)]


class _SharedDraws:
    """Fixed random structures shared by every image of one generation seed."""

    def __init__(self, config: GeneratorConfig, seed: int):
        rng = np.random.default_rng((seed, 7))
        d = config.feature_dim
        n_scenes = len(SCENES)
        # All content — scene axes, prototype jitter, texture, detail — lives
        # inside one fixed subspace. Its complement is split into quiet lanes
        # handed to the degradations: a lane only ever carries cell noise, so
        # whatever residue a degradation leaves there stands clear of content.
        t_dim = max(1, min(d - 1, max(n_scenes, round(_TEXTURE_SUBSPACE_FRACTION * d))))
        full = np.linalg.qr(rng.normal(size=(d, d)))[0]
        self.texture_basis = full[:, :t_dim]  # (d, t)
        quiet = full[:, t_dim:]
        self.quiet_basis = quiet

        def lane(i: int) -> np.ndarray:
            return quiet[:, i % quiet.shape[1]]

        # Scene identities are mutually orthogonal axes inside the content
        # subspace (reused cyclically if the subspace is too narrow); per-scene
        # prototype variants jitter around their axis without leaving it.
        mixer = np.linalg.qr(rng.normal(size=(t_dim, t_dim)))[0]
        self.scene_axes = np.stack(
            [self.texture_basis @ mixer[:, s % t_dim] for s in range(n_scenes)])
        variants = np.empty((n_scenes, config.prototypes_per_scene, d))
        for s in range(n_scenes):
            for k in range(config.prototypes_per_scene):
                v = self.scene_axes[s] + 0.3 * (self.texture_basis @ rng.normal(size=t_dim))
                variants[s, k] = v / np.linalg.norm(v)
        self.prototypes = variants
        # Every reference shares a fixed "white point" parked on its own lane;
        # the color rotation swings it into a second lane, like a hue cast,
        # without touching scene content.
        self.base_direction = lane(2)
        self.color_u = lane(2)
        # Over- and under-exposure push along opposite casts of the global
        # brightness direction: saturation whitens, darkening blackens.
        ones = np.ones(d) / np.sqrt(d)
        over = ones + 0.8 * lane(3)
        under = ones - 0.8 * lane(3)
        self.over_direction = over / np.linalg.norm(over)
        self.under_direction = under / np.linalg.norm(under)
        # Additive degradations leave a type-specific residue direction on top
        # of their random component, the way real sensors leave a DC bias.
        self.noise_direction = lane(0)
        self.localized_direction = lane(1)
        # The hue cast swings into the same lane the exposure casts share, so
        # every photometric degradation reports its damage on one axis while
        # staying separable through its own flags.
        self.color_v = lane(3)
        # Orthonormal bases in which the codec-style distortions round
        # coordinates, with fixed fractional lattice offsets so heavy rounding
        # parks coordinates at a codec-specific resting pattern. Each basis
        # leads with that codec's own lane, carrying the largest step.
        self.jpeg_basis = np.linalg.qr(
            np.concatenate([lane(4)[:, None], rng.normal(size=(d, d))], axis=1))[0]
        self.jpeg2000_basis = np.linalg.qr(
            np.concatenate([lane(5)[:, None], rng.normal(size=(d, d))], axis=1))[0]
        self.quantization_basis = np.linalg.qr(
            np.concatenate([lane(6)[:, None], rng.normal(size=(d, d))], axis=1))[0]
        n_hi = max(1, d // 4)
        hi = np.arange(d) < n_hi
        self.jpeg_steps = np.where(hi, 2.8, 0.08)
        ramp = np.arange(d) / max(n_hi, 1)
        self.jpeg2000_steps = np.where(hi, 3.8 - 2.4 * ramp, 0.05)
        self.quantization_steps = np.where(hi, 2.6, 0.1)

        def lattice_offsets() -> np.ndarray:
            # Offsets bounded away from zero so the parked pattern is never weak.
            return rng.choice((-1.0, 1.0), size=d) * rng.uniform(0.25, 0.45, size=d)

        self.jpeg_offsets = lattice_offsets()
        self.jpeg2000_offsets = lattice_offsets()
        self.quantization_offsets = lattice_offsets()


def _box_blur(grid: np.ndarray, radius: int = 1) -> np.ndarray:
    """Square box average of side ``2 * radius + 1`` with zero boundary.

    The dark border makes heavy blur drain overall energy, the way optical
    defocus bleeds past the frame, so blurred images drift measurably toward
    the origin as well as losing texture.
    """
    side = 2 * radius + 1
    padded = np.pad(grid, ((radius, radius), (radius, radius), (0, 0)))
    out = np.zeros_like(grid)
    for dr in range(side):
        for dc in range(side):
            out += padded[dr:dr + grid.shape[0], dc:dc + grid.shape[1]]
    return out / side**2


def _block_noise(rng: np.random.Generator, height: int, width: int, dim: int,
                 scale: float) -> np.ndarray:
    """Noise constant over aligned 2x2 blocks, so local averaging keeps it."""
    blocks = rng.normal(scale=scale, size=((height + 1) // 2, (width + 1) // 2, dim))
    return np.repeat(np.repeat(blocks, 2, axis=0), 2, axis=1)[:height, :width]


def _round_in_basis(grid: np.ndarray, basis: np.ndarray, steps: np.ndarray,
                    offsets: np.ndarray, severity: float) -> np.ndarray:
    """Round coordinates onto a lattice of pitch ``severity * steps``.

    The lattice carries a fixed fractional offset per coordinate, so once the
    pitch exceeds a coordinate's spread the whole grid parks on an offset
    pattern that keeps growing with severity instead of collapsing to zero.
    """
    coords = grid @ basis
    step = severity * steps
    shift = step * offsets
    coords = np.round((coords - shift) / step) * step + shift
    return coords @ basis.T


def apply_distortion(grid: np.ndarray, distortion: int, severity: float,
                     shared: _SharedDraws, rng: np.random.Generator) -> np.ndarray:
    """Return a degraded copy of ``grid``; severity 0 is the identity for every type."""
    if severity == 0.0:
        return grid.copy()
    name = DISTORTIONS[distortion]
    v = float(severity)
    h, w, d = grid.shape
    if name == "blur":
        smoothed = _box_blur(_box_blur(_box_blur(grid, radius=2), radius=2), radius=2)
        return (1.0 - v) * grid + v * smoothed
    if name == "color-related":
        theta = v * _COLOR_MAX_ANGLE
        a = grid @ shared.color_u
        b = grid @ shared.color_v
        rotated = grid.copy()
        rotated += np.multiply.outer((np.cos(theta) - 1.0) * a - np.sin(theta) * b, shared.color_u)
        rotated += np.multiply.outer(np.sin(theta) * a + (np.cos(theta) - 1.0) * b, shared.color_v)
        return rotated
    if name == "contrast":
        mean = grid.mean()
        return mean + (1.0 - _CONTRAST_SHRINK * v) * (grid - mean)
    if name == "jpeg compression":
        return _round_in_basis(grid, shared.jpeg_basis, shared.jpeg_steps,
                               shared.jpeg_offsets, v)
    if name == "jpeg2000 compression":
        return _round_in_basis(grid, shared.jpeg2000_basis, shared.jpeg2000_steps,
                               shared.jpeg2000_offsets, v)
    if name == "noise":
        # The random spray stays off the content subspace, so noise speckles
        # the picture without repainting what it depicts.
        spray = _block_noise(rng, h, w, d, 1.0) @ shared.quiet_basis @ shared.quiet_basis.T
        return grid + v * (_NOISE_BIAS * shared.noise_direction + _NOISE_STRENGTH * spray)
    if name == "over-exposure":
        return grid + v * _EXPOSURE_STRENGTH * shared.over_direction
    if name == "quantization":
        return _round_in_basis(grid, shared.quantization_basis, shared.quantization_steps,
                               shared.quantization_offsets, v)
    if name == "under-exposure":
        return grid - v * _EXPOSURE_STRENGTH * shared.under_direction
    if name == "spatially-localized":
        quadrant = int(rng.integers(4))
        rows = slice(0, h // 2) if quadrant < 2 else slice(h // 2, h)
        cols = slice(0, w // 2) if quadrant % 2 == 0 else slice(w // 2, w)
        out = grid.copy()
        patch = out[rows, cols]
        # The artifact occludes: it replaces what it covers instead of
        # shining through it, so a strong burst also fades that quadrant.
        burst = _LOCALIZED_BOOST * (
            1.5 * shared.localized_direction
            + 0.5 * _block_noise(rng, patch.shape[0], patch.shape[1], d, 1.0)
            @ shared.quiet_basis @ shared.quiet_basis.T)
        out[rows, cols] = (1.0 - 0.85 * v) * patch + v * burst
        return out
    if name == "others":
        raise ValueError("'others' images are pristine; severity must be 0")
    raise IndexError(f"unknown distortion index {distortion}")


def _bilinear_field(rng: np.random.Generator, size: int, dim: int,
                    amplitude: float) -> np.ndarray:
    corners = rng.normal(scale=amplitude, size=(2, 2, dim))
    t = np.linspace(0.0, 1.0, size)
    wr = t[:, None, None]
    wc = t[None, :, None]
    return ((1 - wr) * (1 - wc) * corners[0, 0] + (1 - wr) * wc * corners[0, 1]
            + wr * (1 - wc) * corners[1, 0] + wr * wc * corners[1, 1])


def _make_reference(rng: np.random.Generator, shared: _SharedDraws,
                    config: GeneratorConfig) -> tuple[tuple[int, ...], np.ndarray]:
    n_scenes = len(SCENES)
    if rng.random() < 0.2:
        picks = tuple(sorted(int(i) for i in rng.choice(n_scenes, size=2, replace=False)))
        weight = rng.uniform(0.7, 0.85)
        weights = (weight, 1.0 - weight)
    else:
        picks = (int(rng.integers(n_scenes)),)
        weights = (1.0,)
    d = config.feature_dim
    # White point plus a brightness pedestal: real photos sit well above
    # black, which is what separates degradations that preserve the overall
    # level (contrast) from ones that drain it (blur, under-exposure).
    mix = _BASE_STRENGTH * shared.base_direction + _PEDESTAL * np.ones(d) / np.sqrt(d)
    for scene, w in zip(picks, weights):
        variant = int(rng.integers(config.prototypes_per_scene))
        mix = mix + _PROTOTYPE_STRENGTH * w * shared.prototypes[scene, variant]
    size = config.grid_size
    grid = np.broadcast_to(mix, (size, size, config.feature_dim)).copy()
    # Detail and texture live inside the shared texture subspace; the
    # complement stays quiet so additive degradations are conspicuous there.
    project = shared.texture_basis @ shared.texture_basis.T
    grid += _bilinear_field(rng, size, config.feature_dim, config.detail_amplitude) @ project
    grid += _block_noise(rng, size, size, config.feature_dim, config.texture_noise) @ project
    grid += rng.normal(scale=_CELL_NOISE, size=grid.shape)
    return picks, grid


def generate(config: GeneratorConfig, seed: int) -> list[ImageRecord]:
    """Produce every dataset's records; deterministic in (config, seed)."""
    shared = _SharedDraws(config, seed)
    records: list[ImageRecord] = []
    n_refs = config.images_per_dataset // config.versions_per_reference
    for m in range(config.n_datasets):
        profile = np.asarray(distortion_profile(m))
        scale, shift = mos_affine(m)
        for r in range(n_refs):
            ref_rng = np.random.default_rng((seed, 11, m, r))
            scene_labels, base = _make_reference(ref_rng, shared, config)
            for k in range(config.versions_per_reference):
                rng = np.random.default_rng((seed, 13, m, r, k))
                if k == 0:
                    distortion, severity = _OTHERS_DISTORTION, 0.0
                else:
                    distortion = int(rng.choice(len(profile), p=profile))
                    severity = float(rng.uniform(config.min_severity, 1.0))
                grid = apply_distortion(base, distortion, severity, shared, rng)
                quality = latent_quality(severity, config.quality_gamma)
                rated = float(np.clip(quality + rng.normal(scale=config.observer_noise), 1.0, 5.0))
                records.append(ImageRecord(
                    image_id=r * config.versions_per_reference + k,
                    dataset_id=m,
                    reference_id=r,
                    scene_labels=scene_labels,
                    distortion=distortion,
                    severity=severity,
                    mos=scale * rated + shift,
                    features=FeatureImage(grid),
                ))
    return records


# -- binary serialization ----------------------------------------------------------


def _scene_mask(labels: tuple[int, ...]) -> int:
    mask = 0
    for s in labels:
        if not 0 <= s < 16:
            raise ValueError(f"scene index {s} does not fit the 16-bit mask")
        mask |= 1 << s
    return mask


def _mask_scenes(mask: int) -> tuple[int, ...]:
    return tuple(i for i in range(16) if mask >> i & 1)


def save_dataset(records: list[ImageRecord], path: str | Path,
                 space: LabelSpace | None = None) -> None:
    """Write records into the fixed-layout binary container."""
    if not records:
        raise ValueError("refusing to write an empty dataset file")
    space = space or LabelSpace.default()
    grid_shape = records[0].features.grid.shape
    if grid_shape[0] != grid_shape[1]:
        raise ValueError("the container stores square grids only")
    blob = bytearray()
    blob += MAGIC
    n_datasets = len({rec.dataset_id for rec in records})
    blob += _HEADER.pack(n_datasets, len(records), grid_shape[0], grid_shape[2],
                         space.content_digest())
    for rec in records:
        if rec.features.grid.shape != grid_shape:
            raise ValueError("all grids in one file must share a shape")
        blob += _RECORD.pack(rec.image_id, rec.dataset_id, rec.reference_id,
                             _scene_mask(rec.scene_labels), rec.distortion,
                             rec.severity, rec.mos)
        blob += rec.features.grid.astype("<f4").tobytes()
    Path(path).write_bytes(bytes(blob))


def write_provenance(path: str | Path, config: GeneratorConfig, seed: int) -> Path:
    """Drop a plain-text sidecar describing how the file's records were generated."""
    sidecar = Path(path).with_suffix(".provenance.txt")
    lines = [f"seed = {seed}"]
    for name in sorted(vars(config)):
        lines.append(f"{name} = {getattr(config, name)}")
    sidecar.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return sidecar


@dataclass(frozen=True)
class DatasetHeader:
    n_datasets: int
    n_records: int
    grid_size: int
    feature_dim: int
    label_digest: int


def load_dataset(path: str | Path,
                 expected_digest: int | None = None) -> tuple[list[ImageRecord], DatasetHeader]:
    """Read a dataset container, validating structure byte by byte."""
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) or blob[:len(MAGIC)] != MAGIC:
        raise DataFormatError(f"{path}: bad magic at byte 0")
    offset = len(MAGIC)
    if len(blob) < offset + _HEADER.size:
        raise DataFormatError(f"{path}: truncated header at byte {offset}")
    header = DatasetHeader(*_HEADER.unpack_from(blob, offset))
    offset += _HEADER.size
    if expected_digest is not None and header.label_digest != expected_digest:
        raise DataFormatError(
            f"{path}: label-space digest {header.label_digest:#x} does not match "
            f"expected {expected_digest:#x}")
    grid_bytes = header.grid_size * header.grid_size * header.feature_dim * 4
    records: list[ImageRecord] = []
    for _ in range(header.n_records):
        if len(blob) < offset + _RECORD.size:
            raise DataFormatError(f"{path}: truncated record at byte {offset}")
        image_id, dataset_id, reference_id, mask, distortion, severity, mos = \
            _RECORD.unpack_from(blob, offset)
        offset += _RECORD.size
        if len(blob) < offset + grid_bytes:
            raise DataFormatError(f"{path}: truncated feature grid at byte {offset}")
        grid = np.frombuffer(blob, dtype="<f4", count=grid_bytes // 4, offset=offset)
        offset += grid_bytes
        grid = grid.reshape(header.grid_size, header.grid_size,
                            header.feature_dim).astype(np.float64)
        records.append(ImageRecord(
            image_id=image_id, dataset_id=dataset_id, reference_id=reference_id,
            scene_labels=_mask_scenes(mask), distortion=distortion,
            severity=severity, mos=mos, features=FeatureImage(grid)))
    if offset != len(blob):
        raise DataFormatError(f"{path}: {len(blob) - offset} trailing bytes at byte {offset}")
    return records, header


# -- splitting, batching, pairing ------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.7
    val: float = 0.1
    test: float = 0.2
    seed: int = 0

    def __post_init__(self):
        total = self.train + self.val + self.test
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions sum to {total}, expected 1")
        if min(self.train, self.val, self.test) < 0:
            raise ValueError("split fractions must be non-negative")


def split_records(records: list[ImageRecord], spec: SplitSpec
                  ) -> tuple[list[ImageRecord], list[ImageRecord], list[ImageRecord]]:
    """Partition by reference group so no content spans two splits.

    Fractions are honored per dataset to within one group's size.
    """
    by_dataset: dict[int, dict[int, list[ImageRecord]]] = {}
    for rec in records:
        by_dataset.setdefault(rec.dataset_id, {}).setdefault(rec.reference_id, []).append(rec)
    rng = np.random.default_rng(spec.seed)
    train: list[ImageRecord] = []
    val: list[ImageRecord] = []
    test: list[ImageRecord] = []
    for dataset_id in sorted(by_dataset):
        groups = by_dataset[dataset_id]
        if len(groups) < 3:
            raise ValueError(
                f"dataset {dataset_id} has {len(groups)} reference groups; need >= 3 to split")
        keys = sorted(groups)
        order = rng.permutation(len(keys))
        total = sum(len(groups[k]) for k in keys)
        t_train = spec.train * total
        t_val = (spec.train + spec.val) * total
        seen = 0
        for idx in order:
            bucket = groups[keys[idx]]
            if seen < t_train:
                train.extend(bucket)
            elif seen < t_val:
                val.extend(bucket)
            else:
                test.extend(bucket)
            seen += len(bucket)
    return train, val, test


@dataclass
class Batch:
    """One optimization step's worth of images, kept per source dataset."""

    per_dataset: dict[int, list[ImageRecord]]

    def all_records(self) -> list[ImageRecord]:
        out = []
        for dataset_id in sorted(self.per_dataset):
            out.extend(self.per_dataset[dataset_id])
        return out


def epoch_batches(train_by_dataset: dict[int, list[ImageRecord]],
                  sizes: dict[int, int], rng: np.random.Generator) -> list[Batch]:
    """Batches for one epoch: a full pass over the largest dataset.

    Every batch holds ``sizes[m]`` images from each dataset m, drawn without
    replacement; datasets that run out are reshuffled and recycled within
    the epoch.
    """
    for dataset_id, size in sizes.items():
        if size < 2:
            raise ValueError(f"dataset {dataset_id}: need >= 2 images per batch for pairs")
        if len(train_by_dataset[dataset_id]) < size:
            raise ValueError(f"dataset {dataset_id}: fewer images than one batch")
    n_iterations = max(len(train_by_dataset[m]) // sizes[m] for m in sizes)
    queues = {m: [] for m in sizes}

    def refill(m: int) -> None:
        pool = train_by_dataset[m]
        queues[m].extend(pool[i] for i in rng.permutation(len(pool)))

    batches = []
    for _ in range(n_iterations):
        chosen: dict[int, list[ImageRecord]] = {}
        for m in sorted(sizes):
            if len(queues[m]) < sizes[m]:
                refill(m)
            chosen[m] = [queues[m].pop(0) for _ in range(sizes[m])]
        batches.append(Batch(per_dataset=chosen))
    return batches


def make_pairs(batch: Batch) -> list[tuple[ImageRecord, ImageRecord, float]]:
    """Every within-dataset unordered pair with its preference label."""
    from .losses import pair_label

    pairs = []
    for dataset_id in sorted(batch.per_dataset):
        bucket = batch.per_dataset[dataset_id]
        for i in range(len(bucket)):
            for j in range(i + 1, len(bucket)):
                x, y = bucket[i], bucket[j]
                pairs.append((x, y, pair_label(x.mos, y.mos, x.dataset_id, y.dataset_id)))
    return pairs


def pair_index_arrays(batch: Batch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pair left/right positions within ``batch.all_records()`` plus labels."""
    lefts: list[int] = []
    rights: list[int] = []
    labels: list[float] = []
    offset = 0
    for dataset_id in sorted(batch.per_dataset):
        bucket = batch.per_dataset[dataset_id]
        for i in range(len(bucket)):
            for j in range(i + 1, len(bucket)):
                lefts.append(offset + i)
                rights.append(offset + j)
                labels.append(1.0 if bucket[i].mos >= bucket[j].mos else 0.0)
        offset += len(bucket)
    return (np.asarray(lefts, dtype=np.intp), np.asarray(rights, dtype=np.intp),
            np.asarray(labels, dtype=np.float64))
