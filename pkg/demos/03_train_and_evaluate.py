#!/usr/bin/env python3
"""End-to-end training run with the default configuration.

Generates the default three-dataset corpus, splits it by reference group,
trains the multitask vision-language correspondence model, and reports
quality correlation plus scene/distortion accuracy on the held-out test
split. Finishes in a few minutes on one CPU core.
"""

import argparse
import time

from mtiqa.datasets import GeneratorConfig, SplitSpec, generate, split_records
from mtiqa.evaluation import evaluate_model
from mtiqa.training import TrainConfig, train


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=None,
                        help="override the default epoch count")
    args = parser.parse_args()

    records = generate(GeneratorConfig(), seed=args.seed)
    train_recs, val_recs, test_recs = split_records(records, SplitSpec(seed=args.seed))
    print(f"split: {len(train_recs)} train / {len(val_recs)} val / "
          f"{len(test_recs)} test")

    cfg = TrainConfig(seed=args.seed)
    if args.epochs is not None:
        cfg = TrainConfig(seed=args.seed, epochs=args.epochs)

    started = time.perf_counter()
    result = train(train_recs, val_recs, cfg)
    elapsed = time.perf_counter() - started
    print(f"trained {cfg.epochs} epochs in {elapsed:.1f} s; best validation "
          f"SRCC {result.best_val_srcc:.3f} at epoch {result.best_epoch}")

    print("\nepoch  loss_q  loss_s  loss_d  val_srcc")
    for row in result.log_rows[:: max(1, cfg.epochs // 6)]:
        print(f"{row['epoch']:>5}  {row['loss_quality']:.4f}  "
              f"{row['loss_scene']:.4f}  {row['loss_distortion']:.4f}  "
              f"{row['val_srcc']:.4f}")

    print("\ntest-split metrics:")
    for m in evaluate_model(result.model, test_recs, u_infer=cfg.u_infer,
                            seed=cfg.seed):
        print(f"  dataset {m.dataset_id}: SRCC {m.srcc:.3f}  PLCC {m.plcc:.3f}  "
              f"scene acc {m.scene_acc:.3f}  distortion acc {m.distortion_acc:.3f}")


if __name__ == "__main__":
    main()
