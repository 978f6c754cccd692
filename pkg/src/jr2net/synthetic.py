"""Parametric low-rank spectral scenes for desk-scale experiments.

A scene is a sum of 3-5 rank-one terms, each a smooth non-negative spectral
signature times a smooth non-negative abundance map (low-pass filtered
noise), scaled so the cube maximum is 1.
"""
import numpy as np
from scipy.ndimage import gaussian_filter

from .core import normalize


def _signature(C, rng):
    bands = np.arange(C)
    s = np.full(C, rng.uniform(0.05, 0.3))
    for _ in range(rng.integers(1, 3)):
        centre = rng.uniform(-0.2, 1.2) * (C - 1)
        width = rng.uniform(0.15, 0.6) * C
        s += rng.uniform(0.3, 1.0) * np.exp(-0.5 * ((bands - centre) / width) ** 2)
    return s


def _abundance(H, W, rng):
    sigma = rng.uniform(1.5, 6.0)
    field = gaussian_filter(rng.standard_normal((H, W)), sigma, mode="wrap")
    field = (field - field.mean()) / (field.std() + 1e-12)
    # soft rectification keeps the map non-negative with sharp-ish region edges
    return np.logaddexp(0, 3 * field) / 3


def generate_scene(H, W, C, seed=None):
    rng = np.random.default_rng(seed)
    cube = np.zeros((H, W, C))
    for _ in range(rng.integers(3, 6)):
        cube += _abundance(H, W, rng)[..., None] * _signature(C, rng)
    return normalize(cube)


def generate_dataset(n_scenes, H, W, C, seed=0):
    """``n_scenes`` cubes with per-scene seeds drawn from ``seed``."""
    seeds = np.random.SeedSequence(seed).generate_state(n_scenes)
    return [generate_scene(H, W, C, int(s)) for s in seeds], [int(s) for s in seeds]


def split_validation(cubes, per=10):
    """Hold out the last scene of every ``per`` scenes (1 of 10) for validation."""
    val_idx = [i for i in range(len(cubes)) if i % per == per - 1]
    if not val_idx and len(cubes) > 1:
        val_idx = [len(cubes) - 1]
    train = [c for i, c in enumerate(cubes) if i not in val_idx]
    return train, [cubes[i] for i in val_idx]
