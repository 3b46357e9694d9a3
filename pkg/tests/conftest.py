"""Shared fixtures: small random CSI datasets and tap windows."""

import numpy as np
import pytest

from chartlab.dataset import CsiDataset, TapWindow


def make_dataset(L=12, B=2, M=3, N=8, seed=0):
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((L, B, M, N)) + 1j * rng.standard_normal((L, B, M, N))
    x = rng.uniform(0, 10, size=(L, 2))
    t = np.sort(rng.uniform(0, 100, size=L))
    return CsiDataset(H, x, t)


@pytest.fixture
def small_ds():
    return make_dataset()


@pytest.fixture
def window():
    return TapWindow(3, 6)
