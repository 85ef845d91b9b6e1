"""Multitask training loop, prediction, and checkpoint persistence.

A single weight-shared model serves every dataset: images and label
sentences are embedded into a common space, a temperature-scaled softmax
over all sentences yields the joint posterior, and the three task losses
(pairwise quality fidelity, multi-label scene fidelity, distortion
fidelity) are combined with either fixed or dynamically averaged weights.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .correspondence import (HeadDistributions, JointDistribution, LabelPrediction,
                             Temperature, correspondence_logits, head_distributions,
                             joint_probabilities)
from .datasets import (DataFormatError, ImageRecord, epoch_batches,
                       pair_index_arrays)
from .encoders import ImageEncoder, TextEncoder, crop_means, sample_crops
from .evaluation import srcc
from .labels import LabelSpace, Vocabulary
from .losses import (TASKS, DynamicWeightAverager, distortion_losses,
                     quality_pair_losses, scene_losses, thurstone_probability,
                     total_loss)
from .optim import AdamW, cosine_lr

CHECKPOINT_MAGIC = b"MTIQACKPT1"
CHECKPOINT_VERSION = 1


class TrainingDivergedError(FloatingPointError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    u_train: int = 3
    u_infer: int = 15
    crop_size: int = 3
    feature_dim: int = 16
    embed_dim: int = 32
    hidden_dim: int = 128
    token_dim: int = 16
    activation: str = "tanh"
    temperature_init: float = 0.07
    lr: float = 5e-3
    weight_decay: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    tasks: tuple[str, ...] = TASKS
    weighting: str = "dwa"
    fixed_weights: tuple[float, ...] | None = None
    tau2: float = 2.0
    dwa_window: int | None = None
    scene_loss_variant: str = "binary"
    quality_levels: int = 5
    separate_templates: bool = False
    freeze_text_encoder: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.tasks:
            raise ValueError("at least one task must be enabled")
        seen = set()
        for task in self.tasks:
            if task not in TASKS:
                raise ValueError(f"unknown task '{task}'")
            if task in seen:
                raise ValueError(f"task '{task}' listed twice")
            seen.add(task)
        canonical = tuple(t for t in TASKS if t in seen)
        object.__setattr__(self, "tasks", canonical)
        if self.weighting not in ("dwa", "equal", "fixed"):
            raise ValueError(f"unknown weighting '{self.weighting}'")
        if self.weighting == "dwa" and len(self.tasks) < 2:
            raise ValueError("dynamic weighting needs at least two tasks")
        if self.weighting == "fixed":
            if self.fixed_weights is None or len(self.fixed_weights) != len(self.tasks):
                raise ValueError("fixed weighting needs one weight per enabled task")
        if self.quality_levels not in (2, 5):
            raise ValueError("quality_levels must be 2 or 5")
        if self.epochs < 1:
            raise ValueError("need at least one epoch")

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=seed)

    # -- flat string serialization (used by checkpoints and the CLI) -----------

    def to_mapping(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                out[f.name] = "none"
            elif isinstance(value, bool):
                out[f.name] = "true" if value else "false"
            elif isinstance(value, tuple):
                out[f.name] = ",".join(str(v) for v in value)
            else:
                out[f.name] = str(value)
        return out

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "TrainConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ValueError(f"unknown training option '{key}'")
            kwargs[key] = _parse_field(key, raw.strip())
        return cls(**kwargs)

    def to_text(self) -> str:
        mapping = self.to_mapping()
        return "\n".join(f"{k} = {mapping[k]}" for k in sorted(mapping)) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        mapping = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            mapping[key.strip()] = value.strip()
        return cls.from_mapping(mapping)


_BOOL_FIELDS = {"separate_templates", "freeze_text_encoder"}
_INT_FIELDS = {"epochs", "batch_size", "u_train", "u_infer", "crop_size", "feature_dim",
               "embed_dim", "hidden_dim", "token_dim", "quality_levels", "seed"}
_FLOAT_FIELDS = {"temperature_init", "lr", "weight_decay", "beta1", "beta2", "eps", "tau2"}
_STRING_FIELDS = {"activation", "weighting", "scene_loss_variant"}


def _parse_field(key: str, raw: str):
    if key in _BOOL_FIELDS:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"option '{key}' expects a boolean, got '{raw}'")
    if key in _INT_FIELDS:
        return int(raw)
    if key in _FLOAT_FIELDS:
        return float(raw)
    if key in _STRING_FIELDS:
        return raw
    if key == "tasks":
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    if key == "fixed_weights":
        if raw.lower() == "none" or raw == "":
            return None
        return tuple(float(part) for part in raw.split(","))
    if key == "dwa_window":
        return None if raw.lower() == "none" or raw == "" else int(raw)
    raise ValueError(f"unknown training option '{key}'")


class CorrespondenceModel:
    """Image and text encoders that share an embedding space, plus a temperature."""

    def __init__(self, config: TrainConfig):
        self.config = config
        self.space = (LabelSpace.binary_quality() if config.quality_levels == 2
                      else LabelSpace.default())
        self.vocab = Vocabulary.for_space(self.space)
        rng = np.random.default_rng((config.seed, 0))
        self.image_encoder = ImageEncoder(config.feature_dim, config.hidden_dim,
                                          config.embed_dim, rng, config.activation)
        self.text_encoder = TextEncoder(len(self.vocab), config.token_dim,
                                        config.embed_dim, rng,
                                        frozen=config.freeze_text_encoder)
        self.temperature = Temperature(config.temperature_init)
        self.joint_tokens = [self.vocab.encode(t) for t in self.space.descriptions()]
        self.scene_tokens = [self.vocab.encode(t) for t in self.space.scene_descriptions()]
        self.distortion_tokens = [self.vocab.encode(t)
                                  for t in self.space.distortion_descriptions()]
        self.quality_tokens = [self.vocab.encode(t) for t in self.space.quality_descriptions()]

    def all_parameters(self) -> dict[str, Tensor]:
        out = {}
        out.update(self.image_encoder.parameters())
        out.update(self.text_encoder.parameters())
        out.update(self.temperature.parameters())
        return out

    def trainable_parameters(self) -> dict[str, Tensor]:
        out = {}
        out.update(self.image_encoder.parameters())
        out.update(self.text_encoder.trainable_parameters())
        out.update(self.temperature.parameters())
        return out


@dataclass
class ModelOutputs:
    """Per-image task posteriors and the scalar quality score (all Tensors)."""

    scene: Tensor
    distortion: Tensor
    quality: Tensor
    score: Tensor

    def predicted(self) -> LabelPrediction:
        return LabelPrediction(
            quality_idx=np.argmax(self.quality.data, axis=-1),
            scene_idx=np.argmax(self.scene.data, axis=-1),
            distortion_idx=np.argmax(self.distortion.data, axis=-1),
        )


def model_outputs(model: CorrespondenceModel, pooled: np.ndarray, u: int) -> ModelOutputs:
    """Forward pass from pooled crop features, ``pooled`` of shape (B*u, D)."""
    f = model.image_encoder.encode_means(pooled)
    if model.config.separate_templates:
        heads: HeadDistributions = head_distributions(
            f,
            model.text_encoder.encode(model.scene_tokens),
            model.text_encoder.encode(model.distortion_tokens),
            model.text_encoder.encode(model.quality_tokens),
            model.temperature, crops_per_image=u)
        return ModelOutputs(scene=heads.scene, distortion=heads.distortion,
                            quality=heads.quality, score=heads.quality_score())
    g = model.text_encoder.encode(model.joint_tokens)
    logits = correspondence_logits(f, g, crops_per_image=u)
    joint = JointDistribution(joint_probabilities(logits, model.temperature), model.space)
    return ModelOutputs(scene=joint.scene_marginal(),
                        distortion=joint.distortion_marginal(),
                        quality=joint.quality_marginal(),
                        score=joint.quality_score())


def _pool_training_crops(records: list[ImageRecord], u: int, size: int,
                         rng: np.random.Generator) -> np.ndarray:
    chunks = []
    for rec in records:
        crops = sample_crops(rec.features.height, rec.features.width, u, size, rng)
        chunks.append(crop_means(rec.features, crops))
    return np.concatenate(chunks, axis=0)


def _pool_inference_crops(records: list[ImageRecord], u: int, size: int,
                          seed: int) -> np.ndarray:
    """Per-record crop streams, so results do not depend on batch composition."""
    chunks = []
    for rec in records:
        rng = np.random.default_rng((seed, 23, rec.dataset_id, rec.image_id))
        crops = sample_crops(rec.features.height, rec.features.width, u, size, rng)
        chunks.append(crop_means(rec.features, crops))
    return np.concatenate(chunks, axis=0)


def predict_batch(model: CorrespondenceModel, records: list[ImageRecord],
                  u: int, seed: int) -> tuple[np.ndarray, LabelPrediction]:
    """Quality scores and arg-max labels for a list of records (deterministic)."""
    if not records:
        raise ValueError("predict_batch needs at least one record")
    _check_features(model.config, records)
    pooled = _pool_inference_crops(records, u, model.config.crop_size, seed)
    outputs = model_outputs(model, pooled, u)
    return outputs.score.data.copy(), outputs.predicted()


def predict_rows(model: CorrespondenceModel, records: list[ImageRecord],
                 u: int, seed: int) -> list[dict]:
    """JSON-friendly per-image rows: score, top labels, quality marginal."""
    pooled = _pool_inference_crops(records, u, model.config.crop_size, seed)
    outputs = model_outputs(model, pooled, u)
    predicted = outputs.predicted()
    rows = []
    for i, rec in enumerate(records):
        rows.append({
            "id": int(rec.image_id),
            "dataset": int(rec.dataset_id),
            "quality_score": float(outputs.score.data[i]),
            "scene": model.space.scenes[int(predicted.scene_idx[i])],
            "distortion": model.space.distortions[int(predicted.distortion_idx[i])],
            "quality_marginal": [float(v) for v in outputs.quality.data[i]],
        })
    return rows


def _check_features(config: TrainConfig, records: list[ImageRecord]) -> None:
    for rec in records:
        if rec.features.feature_dim != config.feature_dim:
            raise ValueError(
                f"record {rec.dataset_id}:{rec.image_id} has feature dim "
                f"{rec.features.feature_dim}, model expects {config.feature_dim}")


def _initial_weights(config: TrainConfig) -> dict[str, float]:
    if config.weighting == "fixed":
        return {t: float(w) for t, w in zip(config.tasks, config.fixed_weights)}
    return {t: 1.0 / len(config.tasks) for t in config.tasks}


def _scene_mask(records: list[ImageRecord], n_scenes: int) -> np.ndarray:
    mask = np.zeros((len(records), n_scenes))
    for i, rec in enumerate(records):
        for s in rec.scene_labels:
            mask[i, s] = 1.0
    return mask


@dataclass
class TrainResult:
    model: CorrespondenceModel
    log_rows: list[dict]
    best_epoch: int
    best_val_srcc: float


def _validation_srcc(model: CorrespondenceModel, val_records: list[ImageRecord]) -> float:
    by_dataset: dict[int, list[ImageRecord]] = {}
    for rec in val_records:
        by_dataset.setdefault(rec.dataset_id, []).append(rec)
    values = []
    for dataset_id in sorted(by_dataset):
        bucket = by_dataset[dataset_id]
        scores, _ = predict_batch(model, bucket, model.config.u_infer, model.config.seed)
        try:
            values.append(srcc(scores, [rec.mos for rec in bucket]))
        except ValueError:
            values.append(0.0)  # constant predictions carry no ranking signal
    return float(np.mean(values)) if values else 0.0


def train(train_records: list[ImageRecord], val_records: list[ImageRecord],
          config: TrainConfig, log_path: str | Path | None = None) -> TrainResult:
    """Optimize the model on ``train_records``; keep the best validation epoch."""
    if not train_records:
        raise ValueError("no training records")
    _check_features(config, train_records)
    model = CorrespondenceModel(config)
    by_dataset: dict[int, list[ImageRecord]] = {}
    for rec in train_records:
        by_dataset.setdefault(rec.dataset_id, []).append(rec)
    sizes = {m: config.batch_size for m in by_dataset}
    iterations = max(len(by_dataset[m]) // sizes[m] for m in sizes)
    iterations = max(iterations, 1)
    total_steps = config.epochs * iterations

    optimizer = AdamW(model.trainable_parameters(), lr=config.lr,
                      betas=(config.beta1, config.beta2), eps=config.eps,
                      weight_decay=config.weight_decay)
    weights = _initial_weights(config)
    averager = None
    if config.weighting == "dwa":
        averager = DynamicWeightAverager(config.tasks, tau=config.tau2,
                                         window=config.dwa_window)
        weights = dict(averager.weights)

    batch_rng = np.random.default_rng((config.seed, 1))
    crop_rng = np.random.default_rng((config.seed, 2))
    log_rows: list[dict] = []
    best_val = -np.inf
    best_epoch = 0
    best_state: dict[str, np.ndarray] = {}
    global_step = 0

    for epoch in range(1, config.epochs + 1):
        epoch_losses: dict[str, list[float]] = {t: [] for t in config.tasks}
        for iteration, batch in enumerate(epoch_batches(by_dataset, sizes, batch_rng)):
            records = batch.all_records()
            pooled = _pool_training_crops(records, config.u_train, config.crop_size, crop_rng)
            outputs = model_outputs(model, pooled, config.u_train)

            task_means: dict[str, Tensor] = {}
            if "quality" in config.tasks:
                lefts, rights, labels = pair_index_arrays(batch)
                p_hat = thurstone_probability(ad.take(outputs.score, lefts),
                                              ad.take(outputs.score, rights))
                task_means["quality"] = ad.mean(quality_pair_losses(labels, p_hat))
            if "scene" in config.tasks:
                mask = _scene_mask(records, model.space.n_scenes)
                task_means["scene"] = ad.mean(
                    scene_losses(mask, outputs.scene, config.scene_loss_variant))
            if "distortion" in config.tasks:
                targets = np.asarray([rec.distortion for rec in records])
                task_means["distortion"] = ad.mean(
                    distortion_losses(targets, outputs.distortion))

            loss = total_loss(task_means, weights)
            if not np.isfinite(loss.data):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, iteration {iteration}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step(lr=cosine_lr(global_step, total_steps, config.lr))
            global_step += 1

            iteration_losses = {t: float(task_means[t].data) for t in config.tasks}
            for t, v in iteration_losses.items():
                epoch_losses[t].append(v)
            if averager is not None:
                averager.observe_iteration(iteration_losses)

        if averager is not None:
            weights = averager.end_epoch()
        val_srcc = _validation_srcc(model, val_records) if val_records else 0.0
        row = {"epoch": epoch, "lr": cosine_lr(global_step, total_steps, config.lr),
               "val_srcc": val_srcc}
        for t in TASKS:
            row[f"loss_{t}"] = float(np.mean(epoch_losses[t])) if t in config.tasks else None
            row[f"lambda_{t}"] = float(weights[t]) if t in config.tasks else 0.0
        log_rows.append(row)

        if val_srcc > best_val:
            best_val = val_srcc
            best_epoch = epoch
            best_state = {name: p.data.copy() for name, p in model.all_parameters().items()}

    if best_state:
        for name, p in model.all_parameters().items():
            p.data[...] = best_state[name]
    if log_path is not None:
        write_train_log(log_path, log_rows)
    return TrainResult(model=model, log_rows=log_rows, best_epoch=best_epoch,
                       best_val_srcc=float(best_val))


_LOG_COLUMNS = (["epoch"] + [f"loss_{t}" for t in TASKS]
                + [f"lambda_{t}" for t in TASKS] + ["lr", "val_srcc"])


def write_train_log(path: str | Path, rows: list[dict]) -> None:
    """Per-epoch CSV: task losses, task weights, learning rate, validation SRCC."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_LOG_COLUMNS)
        for row in rows:
            out = []
            for col in _LOG_COLUMNS:
                value = row.get(col)
                if value is None:
                    out.append("")
                elif col == "epoch":
                    out.append(str(value))
                else:
                    out.append(f"{value:.10g}")
            writer.writerow(out)


# -- checkpoints -------------------------------------------------------------------


def save_checkpoint(path: str | Path, model: CorrespondenceModel,
                    epoch: int = 0, val_metric: float = float("nan")) -> None:
    """Serialize parameters (name-indexed, float64) plus the training config."""
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    blob += struct.pack("<Q", model.space.digest())
    blob += struct.pack("<Id", epoch, val_metric)
    params = model.all_parameters()
    blob += struct.pack("<I", len(params))
    for name in sorted(params):
        data = params[name].data
        encoded = name.encode("utf-8")
        blob += struct.pack("<I", len(encoded))
        blob += encoded
        blob += struct.pack("<I", data.ndim)
        for dim in data.shape:
            blob += struct.pack("<I", dim)
        blob += data.astype("<f8").tobytes()
    config_text = model.config.to_text().encode("utf-8")
    blob += struct.pack("<I", len(config_text))
    blob += config_text
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path: str | Path) -> tuple[CorrespondenceModel, dict]:
    """Rebuild a model from a checkpoint; returns (model, metadata)."""
    blob = Path(path).read_bytes()
    if blob[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise DataFormatError(f"{path}: bad checkpoint magic at byte 0")
    offset = len(CHECKPOINT_MAGIC)

    def unpack(fmt: str):
        nonlocal offset
        size = struct.calcsize(fmt)
        if len(blob) < offset + size:
            raise DataFormatError(f"{path}: truncated checkpoint at byte {offset}")
        values = struct.unpack_from(fmt, blob, offset)
        offset += size
        return values

    (version,) = unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise DataFormatError(f"{path}: unsupported checkpoint version {version}")
    (digest,) = unpack("<Q")
    epoch, val_metric = unpack("<Id")
    (n_tensors,) = unpack("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        (name_len,) = unpack("<I")
        if len(blob) < offset + name_len:
            raise DataFormatError(f"{path}: truncated tensor name at byte {offset}")
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = unpack("<I")
        shape = tuple(unpack("<" + "I" * rank)) if rank else ()
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if len(blob) < offset + nbytes:
            raise DataFormatError(f"{path}: truncated tensor data at byte {offset}")
        data = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += nbytes
        tensors[name] = data.astype(np.float64)
    (config_len,) = unpack("<I")
    if len(blob) < offset + config_len:
        raise DataFormatError(f"{path}: truncated config text at byte {offset}")
    config = TrainConfig.from_text(blob[offset:offset + config_len].decode("utf-8"))
    offset += config_len
    if offset != len(blob):
        raise DataFormatError(f"{path}: {len(blob) - offset} trailing bytes at byte {offset}")

    model = CorrespondenceModel(config)
    if model.space.digest() != digest:
        raise DataFormatError(f"{path}: label-space digest mismatch")
    params = model.all_parameters()
    if set(params) != set(tensors):
        raise DataFormatError(f"{path}: checkpoint tensors do not match the model")
    for name, p in params.items():
        if tensors[name].shape != p.data.shape:
            raise DataFormatError(
                f"{path}: tensor '{name}' has shape {tensors[name].shape}, "
                f"model expects {p.data.shape}")
        p.data[...] = tensors[name]
    meta = {"epoch": int(epoch), "val_metric": float(val_metric), "digest": int(digest)}
    return model, meta
