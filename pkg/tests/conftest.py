"""Shared fixtures: a small synthetic corpus and a quickly trained model."""

import pytest

from mtiqa.datasets import GeneratorConfig, SplitSpec, generate, split_records
from mtiqa.training import TrainConfig, train


@pytest.fixture(scope="session")
def tiny_gen_cfg():
    return GeneratorConfig(n_datasets=2, images_per_dataset=40)


@pytest.fixture(scope="session")
def tiny_records(tiny_gen_cfg):
    return generate(tiny_gen_cfg, seed=0)


@pytest.fixture(scope="session")
def tiny_splits(tiny_records):
    return split_records(tiny_records, SplitSpec(seed=0))


@pytest.fixture(scope="session")
def tiny_train_cfg():
    return TrainConfig(epochs=3, batch_size=4, u_train=2, u_infer=4, crop_size=2,
                       embed_dim=16, hidden_dim=16, token_dim=8, seed=0)


@pytest.fixture(scope="session")
def tiny_result(tiny_splits, tiny_train_cfg):
    tr, va, _ = tiny_splits
    return train(tr, va, tiny_train_cfg)
