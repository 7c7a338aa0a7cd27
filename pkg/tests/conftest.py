import pytest

from models.schemas import BlockSpec, LossConfig, ModelConfig, SynthSpec, TrainConfig
from services.synthetic import generate_synthetic
from services.training import init_params


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow end-to-end tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def tiny_config() -> ModelConfig:
    return ModelConfig(
        n_rois=8,
        kernel_widths=(1, 2),
        n_filters=4,
        n_slices=2,
        capsule_len=3,
        routing_iterations=3,
    )


@pytest.fixture
def tiny_params(tiny_config):
    return init_params(tiny_config, seed=7)


@pytest.fixture
def loss_config() -> LossConfig:
    return LossConfig()


@pytest.fixture
def quick_train() -> TrainConfig:
    return TrainConfig(epochs=2, learning_rate=0.05, batch_size=4, seed=3)


@pytest.fixture
def small_spec() -> SynthSpec:
    return SynthSpec(
        n_rois=8,
        n_timepoints=60,
        n_per_class=6,
        blocks=[BlockSpec(start=0, stop=3, coupling_sz=0.8, coupling_hc=0.0)],
        seed=11,
    )


@pytest.fixture
def small_dataset(small_spec):
    _, matrices = generate_synthetic(small_spec)
    return matrices
