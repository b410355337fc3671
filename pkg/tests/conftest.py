import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from thermosteer import flows, geometry
from thermosteer.modes import LibraryConfig, ModeLibrary


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture(scope="session")
def partition_example():
    """The reference arithmetic configuration on omega = T x (1, 3)."""
    return geometry.build_partition(1.0, 3.0)


@pytest.fixture(scope="session")
def commensurate16():
    """Grid-aligned strip with K = 16 at n = 64."""
    a, b = geometry.commensurate_strip(64, 16)
    part, cut = geometry.build_partition(a, b)
    strat = flows.ConvectionStrategy.build(part)
    return part, cut, strat


@pytest.fixture(scope="session")
def commensurate8():
    """Grid-aligned strip with K = 8 at n = 64 (steering geometry)."""
    a, b = geometry.commensurate_strip(64, 8)
    part, cut = geometry.build_partition(a, b)
    strat = flows.ConvectionStrategy.build(part)
    return part, cut, strat


@pytest.fixture(scope="session")
def library16(commensurate16):
    part, cut, strat = commensurate16
    gf = flows.build_generating()
    return ModeLibrary(strat, gf, cut, 64, LibraryConfig(k_store=21, time_nodes=257))


@pytest.fixture(scope="session")
def library8(commensurate8):
    part, cut, strat = commensurate8
    gf = flows.build_generating()
    return ModeLibrary(strat, gf, cut, 64, LibraryConfig(k_store=21, time_nodes=257))
