"""Shared fixtures for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from aneuseg.volume import LabelMask, Volume3


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_volume(rng):
    """A 12x10x8 random volume with 0.5 mm spacing."""
    vox = rng.normal(size=(12, 10, 8)).astype(np.float32)
    return Volume3(vox, (0.5, 0.5, 0.5))


@pytest.fixture
def small_mask(small_volume):
    """A centered 4x4x4 block mask matching ``small_volume``."""
    arr = np.zeros(small_volume.dims, dtype=np.uint8)
    arr[4:8, 3:7, 2:6] = 1
    return LabelMask(arr, small_volume.spacing)


def make_volume(shape, spacing=(1.0, 1.0, 1.0), seed=0):
    vox = np.random.default_rng(seed).normal(size=shape).astype(np.float32)
    return Volume3(vox, spacing)


def make_mask(shape, fg_slices=None, spacing=(1.0, 1.0, 1.0)):
    arr = np.zeros(shape, dtype=np.uint8)
    if fg_slices is not None:
        arr[fg_slices] = 1
    return LabelMask(arr, spacing)
