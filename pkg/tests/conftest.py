import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from r2d2mri import dcf, nufft, traj


@pytest.fixture(scope="session")
def radial16():
    """Unweighted 16x16 plan on a 10-spoke R=16 trajectory."""
    t = traj.radial_trajectory(10, 16)
    return t, nufft.plan(t.points, 16, 16)


@pytest.fixture(scope="session")
def weighted16(radial16):
    """Same plan with 10-iteration density weights attached."""
    t, p = radial16
    return t, dcf.attach_weights(p, dcf.pipe_menon(p).d)


@pytest.fixture(scope="session")
def weighted32_64spokes():
    """Well-sampled 32x32 problem: 64 spokes, R=32, weights attached."""
    t = traj.radial_trajectory(64, 32)
    p = nufft.plan(t.points, 32, 32)
    return t, dcf.attach_weights(p, dcf.pipe_menon(p).d)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
