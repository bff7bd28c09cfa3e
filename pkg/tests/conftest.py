import datetime
import logging

import numpy as np
import pytest

from toddlerlab.config import AgentConfig, RenderConfig, RunConfig


@pytest.fixture(autouse=True, scope="session")
def configure_logging():
    logging.basicConfig(
        format="%(asctime)s [%(levelname)s] %(message)s",
        level=logging.INFO,
        datefmt="%H:%M:%S",
    )


@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_runtest_protocol(item, nextitem):
    start = datetime.datetime.now().strftime("%H:%M:%S.%f")[:-3]
    print(f"[{start}] START {item.nodeid}")
    _ = yield
    end = datetime.datetime.now().strftime("%H:%M:%S.%f")[:-3]
    print(f"[{end}] END {item.nodeid}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_agent_config():
    """16x16 stack: 16 -> 7 -> 5, which the decoder maps back to 16."""
    return AgentConfig(
        feature_dim=6,
        hidden_units=16,
        conv_channels=[4, 8],
        conv_kernels=[4, 3],
        conv_strides=[2, 1],
    )


@pytest.fixture
def small_render_config():
    return RenderConfig(resolution=16)


@pytest.fixture
def small_run_config(small_agent_config, small_render_config):
    return RunConfig.model_validate(
        {
            "seed": 3,
            "render": small_render_config.model_dump(),
            "agent": small_agent_config.model_dump(),
            "sac": {
                "batch_size": 4,
                "warmup": 8,
                "total_frames": 24,
                "buffer_capacity": 64,
                "log_interval": 10,
                "metrics_window": 2,
                "eval_episodes": 2,
            },
            "env": {"t_max": 12},
            "transfer": {
                "dataset_size": 16,
                "epochs": 2,
                "batch_size": 4,
                "autoencoder_frames": 12,
                "autoencoder_holdout": 4,
                "autoencoder_epochs": 1,
                "autoencoder_batch_size": 4,
                "seeds": [0, 1],
            },
        }
    )
