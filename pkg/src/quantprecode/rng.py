"""Named, counter-based random streams.

Every stochastic ingredient of an experiment (channel draws, symbol draws,
Gumbel noise, weight init, quantizer starts) pulls from its own Philox
substream keyed by ``(seed, label, *indices)``.  Streams are independent of
each other and of draw order, so per-channel work can run in any order (or
in parallel) without changing results.

Gaussian variates come from numpy's ziggurat sampler; datasets are therefore
portable across implementations only through the persisted files, not
through seed equality.
"""

from __future__ import annotations

import zlib

import numpy as np


def _label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def stream(seed: int, label: str, *indices: int) -> np.random.Generator:
    """Independent Philox generator for the tuple (seed, label, *indices)."""
    entropy = (int(seed) & 0xFFFFFFFFFFFFFFFF, _label_key(label)) + tuple(
        int(i) & 0xFFFFFFFFFFFFFFFF for i in indices
    )
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def substream_seed(seed: int, label: str, *indices: int) -> int:
    """64-bit seed derived from (seed, label, *indices), for APIs taking seeds."""
    entropy = (int(seed) & 0xFFFFFFFFFFFFFFFF, _label_key(label)) + tuple(
        int(i) & 0xFFFFFFFFFFFFFFFF for i in indices
    )
    state = np.random.SeedSequence(entropy).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """I.i.d. circularly-symmetric complex Gaussian, unit variance per entry."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)
