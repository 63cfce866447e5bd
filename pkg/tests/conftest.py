"""Shared fixtures and small helpers for the test suite."""
import numpy as np
import pytest

from ntkgan import EmpiricalMeasure


def rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def random_cloud(n: int, dim: int, seed: int, scale: float = 1.0) -> np.ndarray:
    return scale * rng(seed).standard_normal((n, dim))


def random_measure(n: int, dim: int, seed: int, uniform: bool = True) -> EmpiricalMeasure:
    pts = random_cloud(n, dim, seed)
    if uniform:
        return EmpiricalMeasure.uniform(pts)
    w = rng(seed + 1).random(n) + 0.1
    return EmpiricalMeasure(pts, w / w.sum())


@pytest.fixture
def rng0():
    return rng(0)
