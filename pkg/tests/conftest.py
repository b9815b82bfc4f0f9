from dataclasses import dataclass

import numpy as np
import pytest

from airlink.data import Dataset
from airlink.nn import Layer, Network, init_network
from airlink.pipeline import DESK_SIZES, desk_config, desk_task, train_noise_injection, train_plain

DESK_SEEDS = (0, 1, 2, 3, 4)

# criterion number -> report line, filled by test_acceptance.py
ACCEPTANCE = {}


@dataclass
class DeskRun:
    train: Dataset
    test: Dataset
    noisy: Network  # injection-trained at 5 dB
    plain: Network
    history: list  # per-epoch log of the injection run


def random_net(sizes, seed, bias_scale=0.1):
    rng = np.random.default_rng(seed)
    net = init_network(sizes, seed)
    return net.map_layers(
        lambda _, layer: Layer(layer.weights, bias_scale * rng.standard_normal(layer.n_out),
                               layer.activation)
    )


@pytest.fixture
def small_net():
    return random_net([2, 4, 3], 7)


@pytest.fixture(scope="session")
def desk_models():
    """Desk-task models for every seed in DESK_SEEDS, trained once per session."""
    out = {}
    for seed in DESK_SEEDS:
        train, test = desk_task(seed)
        init = init_network(DESK_SIZES, seed)
        history = []
        noisy = train_noise_injection(init, train, desk_config(seed=seed, snr_train_db=5.0), history)
        plain = train_plain(init, train, desk_config(seed=seed))
        out[seed] = DeskRun(train, test, noisy, plain, history)
    return out


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
