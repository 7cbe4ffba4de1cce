"""Shared fixtures: synthetic image generators and a session pristine model.

Fitting the pristine model dominates qoe test time, so it is built once
per session from a fixed-seed corpus.
"""

import numpy as np
import pytest

from lightcom.source_codec import Image
from lightcom.qoe import fit_pristine_model

CORPUS_SIZE = 384
CORPUS_SEEDS = tuple(range(10))


def synth_image(seed: int, size: int = CORPUS_SIZE) -> Image:
    """Structured grayscale test image: oriented sinusoids, Gaussian blobs,
    one step edge, mild sensor-like noise. Normalized to [0, 255]."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size))
    for _ in range(6):
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(0.02, 0.2)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(5, 25)
        img += amp * np.sin(2 * np.pi * freq
                            * (x * np.cos(theta) + y * np.sin(theta)) + phase)
    for _ in range(40):
        cx, cy = rng.uniform(0, size, 2)
        s = rng.uniform(2, 14)
        img += rng.uniform(-60, 60) * np.exp(-((x - cx) ** 2 + (y - cy) ** 2)
                                             / (2 * s * s))
    img += np.where(x > rng.uniform(0.3, 0.7) * size, rng.uniform(10, 40), 0.0)
    img += rng.normal(0, 6.0, img.shape)
    lo, hi = img.min(), img.max()
    img = (img - lo) / (hi - lo) * 255.0
    return Image.from_array(np.clip(np.rint(img), 0, 255).astype(np.int64))


def blur_image(img: Image, width: int = 9) -> Image:
    from scipy.ndimage import uniform_filter
    arr = img.samples[:, :, 0].astype(np.float64)
    arr = uniform_filter(arr, width, mode="nearest")
    return Image.from_array(np.clip(np.rint(arr), 0, 255).astype(np.int64))


def random_image(seed: int, h: int, w: int, channels: int = 1,
                 bit_depth: int = 8) -> Image:
    rng = np.random.default_rng(seed)
    shape = (h, w) if channels == 1 else (h, w, channels)
    return Image.from_array(
        rng.integers(0, 2 ** bit_depth, shape, dtype=np.int64),
        bit_depth=bit_depth)


@pytest.fixture(scope="session")
def pristine_corpus():
    return [synth_image(s) for s in CORPUS_SEEDS]


@pytest.fixture(scope="session")
def pristine_model(pristine_corpus):
    return fit_pristine_model(pristine_corpus, corpus_id="test-corpus-v1")
