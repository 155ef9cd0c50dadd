import pytest

from fcdnet.data import generate_planted, make_planted_system
from fcdnet.model import ModelConfig
from fcdnet.training import TrainConfig


def small_model_config(**kw) -> ModelConfig:
    base = dict(period=16, levels=3, wavelet_order=2, input_len=12, horizon=4, fft_features=3,
                gru_hidden=4, residual_channels=4, end_channels=8, ltfe_channels=3, ltfe_hidden=4)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture
def tiny_frame():
    system = make_planted_system(N=4, seed=0, noise_std=0.2, season_period=16)
    frame, _ = generate_planted(system, 240, seed=0)
    return frame


@pytest.fixture
def tiny_configs():
    return small_model_config(), TrainConfig(epochs=2, batch_size=8, seed=0)
