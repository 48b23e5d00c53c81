import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def desk_network():
    from nashbo.cellular import NetworkConfig

    return NetworkConfig(
        num_bs=3,
        num_ue_per_bs=2,
        tx_antennas=4,
        rx_antennas=2,
        topology_seed=11,
        channel_seed=22,
    )
