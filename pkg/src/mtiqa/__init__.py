"""Multitask blind image quality assessment through image-text correspondence.

A from-scratch, desk-scale system: a hand-written reverse-mode autodiff
engine drives toy image/text encoders whose cosine correspondence over a
joint (quality, scene, distortion) sentence space yields quality scores and
label predictions, trained on synthetic multi-dataset corpora.
"""

from .autodiff import GradCheckReport, NonFiniteError, ShapeError, Tensor, grad_check
from .correspondence import (JointDistribution, LabelPrediction, Temperature,
                             correspondence_logits, head_distributions,
                             joint_probabilities, quality_score)
from .datasets import (DataFormatError, GeneratorConfig, ImageRecord, SplitSpec,
                       generate, load_dataset, save_dataset, split_records)
from .encoders import FeatureImage, ImageEncoder, TextEncoder, crop_means, sample_crops
from .evaluation import (GmadPair, MonotoneFit, evaluate_model, fit_monotone_map,
                         gmad_pairs, label_accuracy, plcc, run_sessions, srcc)
from .labels import LabelSpace, UnknownWordError, Vocabulary
from .losses import (DynamicWeightAverager, distortion_loss, dwa_weights,
                     fidelity_quality, pair_label, scene_loss, thurstone_probability,
                     total_loss)
from .optim import AdamW, cosine_lr
from .training import (CorrespondenceModel, TrainConfig, TrainResult,
                       TrainingDivergedError, load_checkpoint, predict_batch,
                       predict_rows, save_checkpoint, train)

__version__ = "0.1.0"
