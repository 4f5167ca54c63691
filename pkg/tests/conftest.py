"""
Shared fixtures: tiny configurations, a generated benchmark, seeded fakers.
"""

import copy
import random

import factory.random
import pytest
import torch
import yaml
from faker import Faker

from app.core.config import PipelineConfig
from app.modules.evaluation.synthetic import benchmark_encoder, generate_synthetic_benchmark

TINY_CONFIG = {
    "encoder": {"dim": 16},
    "model": {"k": 6, "encoder_layers": 1, "decoder_layers": 1, "ffn_dim": 16},
    "train": {
        "stage1_iterations": 3,
        "stage2_iterations": 3,
        "stage1_images": 4,
        "stage2_negatives": 2,
        "log_every": 1,
    },
    "benchmark": {
        "images": 6,
        "objects_per_image": 2,
        "grid": 6,
        "stride": 16,
        "min_box": 0.3,
        "max_box": 0.4,
    },
}


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow trend checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def seeded():
    random.seed(0)
    torch.manual_seed(0)
    factory.random.reseed_random(0)
    Faker.seed(0)


@pytest.fixture
def fake():
    fake = Faker()
    fake.seed_instance(0)
    return fake


@pytest.fixture
def tiny_dict():
    return copy.deepcopy(TINY_CONFIG)


@pytest.fixture
def tiny_config(tiny_dict) -> PipelineConfig:
    return PipelineConfig.model_validate(tiny_dict)


@pytest.fixture
def tiny_config_file(tmp_path, tiny_dict):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(tiny_dict), encoding="utf-8")
    return str(path)


@pytest.fixture
def tiny_dataset(tiny_config):
    return generate_synthetic_benchmark(tiny_config.benchmark, seed=0)


@pytest.fixture
def tiny_encoder(tiny_config, tiny_dataset):
    return benchmark_encoder(tiny_config.encoder, tiny_dataset.manifest)
