import numpy as np
import pytest

from dpsim.config import AlgoConfig, SystemConfig
from dpsim.channel import correlation_for_config, draw_channel
from dpsim.optimizer import ObjectiveContext
from dpsim.propagation import build_propagation
from dpsim.stack import PhaseStack


@pytest.fixture(scope="session")
def desk_system():
    # small instance: 16 units per layer, 2 layers each side, 4 streams
    return SystemConfig(streams_per_pol=2, tx_layers=2, rx_layers=2,
                        tx_units_per_layer=16, rx_units_per_layer=16)


@pytest.fixture(scope="session")
def desk_prop(desk_system):
    return build_propagation(desk_system)


@pytest.fixture(scope="session")
def desk_corr(desk_system):
    return correlation_for_config(desk_system)


def make_context(sys_cfg, prop, corr, seed, pathloss=1.0):
    rng = np.random.default_rng(seed)
    chan = draw_channel(rng, sys_cfg, corr, pathloss)
    return ObjectiveContext(prop, chan), rng


def random_stack(sys_cfg, seed, alpha=1 + 0j):
    return PhaseStack.random(np.random.default_rng(seed), sys_cfg, alpha=alpha)
