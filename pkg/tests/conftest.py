import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from imagepoet.model import ModelConfig, init_params
from imagepoet.rng import SeededRng


def toy_config(**overrides):
    base = dict(vocab_size=20, hidden_dim=8, memory_dim=8, topic_weight=0.5,
                visual_count=4, visual_dim=6, lines_per_poem=4,
                chars_per_line=5)
    base.update(overrides)
    return ModelConfig(**base).validate()


@pytest.fixture
def config():
    return toy_config()


@pytest.fixture
def model(config):
    return init_params(config, SeededRng(42))


@pytest.fixture
def rng():
    return SeededRng(1234)
