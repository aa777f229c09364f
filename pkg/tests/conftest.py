# SPDX-FileCopyrightText: 2024 dabridge contributors
# SPDX-License-Identifier: Apache-2.0

"""Global fixtures for dabridge tests."""

from pathlib import Path

import numpy as np
import pytest

from dabridge.approximator import MlpApproximator
from dabridge.approximator import MlpConfig
from dabridge.approximator import PairedSample
from dabridge.approximator import analytic_forward_oracle
from dabridge.approximator import analytic_reverse_oracle
from dabridge.bridge_math import BridgeSchedule
from dabridge.const import ENV_THREADS
from dabridge.const import ROLE_FORWARD
from dabridge.datasets import gen_gaussian_pairs

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    """Keep worker pools at one thread unless a test asks otherwise."""
    monkeypatch.delenv(ENV_THREADS, raising=False)


@pytest.fixture
def fixtures_dir() -> Path:
    """Directory of the committed golden files."""
    return FIXTURES


@pytest.fixture
def pair() -> PairedSample:
    """A fixed 3-d pair."""
    return PairedSample(np.array([0.25, -1.0, 0.5]), np.array([1.5, 0.75, -0.25]))


@pytest.fixture
def oracles(pair):
    """Exact forward and reverse approximators for pair at T=100."""

    def build(T: int = 100):
        schedule = BridgeSchedule(T)
        return (
            analytic_forward_oracle(pair, T),
            analytic_reverse_oracle(pair, schedule),
            schedule,
        )

    return build


@pytest.fixture
def gaussian_data():
    """512 one-dimensional pairs with y = x0 + 2."""
    return gen_gaussian_pairs(512, 1, 0.0, 1.0, 2.0, seed=3)


@pytest.fixture
def small_mlp():
    """Randomly initialized [3, 8, 2] forward approximator."""
    config = MlpConfig.for_data(2, [8], init_seed=11, zero_final=False)
    return MlpApproximator(config, 20, ROLE_FORWARD)
