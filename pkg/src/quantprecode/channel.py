"""Channel and symbol generation plus binary dataset persistence.

Channels are either i.i.d. Rayleigh (CN(0,1) entries) or pure line-of-sight
for a half-wavelength uniform linear array, where antenna m toward user
angle phi carries the phase ramp exp(-j*m*pi*cos(phi)).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import rng

RAYLEIGH = "rayleigh"
LOS_ULA = "los_ula"

_MAGIC = b"QPCHDSET"
_VERSION = 1
_DTYPE_C128 = 1
_MODEL_CODES = {RAYLEIGH: 0, LOS_ULA: 1}
_MODEL_NAMES = {v: k for k, v in _MODEL_CODES.items()}
_HEADER = struct.Struct("<8sIIIIIQQ")  # magic, version, dtype, model, M, K, count, seed


class DatasetIOError(Exception):
    """Base class for dataset file problems."""


class DatasetVersionError(DatasetIOError):
    """Magic or version field does not match the current format."""


class DatasetTruncatedError(DatasetIOError):
    """File ends before the payload announced in the header."""


class DatasetDimensionError(DatasetIOError):
    """Stored dimensions disagree with what the caller expects."""


@dataclass(frozen=True)
class ChannelMatrix:
    """Complex M x K channel, column k holding user k's antenna gains."""

    entries: np.ndarray
    model_tag: str = RAYLEIGH

    def __post_init__(self):
        h = np.asarray(self.entries, dtype=np.complex128)
        if h.ndim != 2 or h.shape[0] < 1 or h.shape[1] < 1:
            raise ValueError(f"channel must be a 2-D M x K matrix, got shape {h.shape}")
        if self.model_tag not in _MODEL_CODES:
            raise ValueError(f"unknown model tag {self.model_tag!r}")
        if self.model_tag == LOS_ULA:
            err = np.max(np.abs(np.abs(h) - 1.0))
            if err > 1e-12:
                raise ValueError(f"LOS entries must be unit modulus, worst error {err:.3e}")
        object.__setattr__(self, "entries", h)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def k(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class SymbolBatch:
    """N_s x K i.i.d. CN(0,1) transmit symbols with the seed that produced them."""

    symbols: np.ndarray
    seed: int

    def __post_init__(self):
        s = np.asarray(self.symbols, dtype=np.complex128)
        if s.ndim != 2:
            raise ValueError(f"symbols must be N_s x K, got shape {s.shape}")
        object.__setattr__(self, "symbols", s)

    @property
    def n_s(self) -> int:
        return self.symbols.shape[0]

    @property
    def k(self) -> int:
        return self.symbols.shape[1]


def gen_rayleigh(m: int, k: int, seed: int) -> ChannelMatrix:
    """Single i.i.d. CN(0,1) channel; deterministic per (m, k, seed)."""
    if m < 1 or k < 1:
        raise ValueError(f"need M >= 1 and K >= 1, got M={m}, K={k}")
    h = rng.complex_normal(rng.stream(seed, "channel", 0), (m, k))
    return ChannelMatrix(h, RAYLEIGH)


def gen_los_ula(m: int, angles_deg) -> ChannelMatrix:
    """Pure LOS ULA channel at half-wavelength spacing for the given user angles."""
    if m < 1:
        raise ValueError(f"need M >= 1, got M={m}")
    phi = np.atleast_1d(np.asarray(angles_deg, dtype=float))
    if phi.ndim != 1 or phi.size < 1:
        raise ValueError("angles_deg must be a flat, non-empty list")
    if np.any(phi < 0.0) or np.any(phi > 180.0):
        raise ValueError(f"user angles must lie in [0, 180] degrees, got {phi}")
    ant = np.arange(m)[:, None]
    h = np.exp(-1j * ant * np.pi * np.cos(np.deg2rad(phi))[None, :])
    return ChannelMatrix(h, LOS_ULA)


def los_steering(m: int, angles_deg) -> np.ndarray:
    """Raw steering matrix (no dataclass wrapper), used for radiation grids."""
    return gen_los_ula(m, angles_deg).entries


def gen_symbols(k: int, n_s: int, seed: int) -> SymbolBatch:
    """N_s x K i.i.d. CN(0,1) symbol batch; deterministic per seed."""
    if n_s < 1:
        raise ValueError(f"need N_s >= 1, got {n_s}")
    if k < 1:
        raise ValueError(f"need K >= 1, got {k}")
    s = rng.complex_normal(rng.stream(seed, "symbols"), (n_s, k))
    return SymbolBatch(s, seed)


@dataclass
class ChannelDataset:
    """Stack of channel realizations sharing one model and dimensions."""

    channels: np.ndarray  # (count, M, K) complex128
    model_tag: str
    seed: int
    los_angles_deg: np.ndarray | None = field(default=None)

    def __post_init__(self):
        h = np.ascontiguousarray(np.asarray(self.channels, dtype=np.complex128))
        if h.ndim != 3:
            raise ValueError(f"channels must be (count, M, K), got shape {h.shape}")
        self.channels = h

    def __len__(self) -> int:
        return self.channels.shape[0]

    def __getitem__(self, i: int) -> ChannelMatrix:
        return ChannelMatrix(self.channels[i], self.model_tag)

    @property
    def m(self) -> int:
        return self.channels.shape[1]

    @property
    def k(self) -> int:
        return self.channels.shape[2]


def generate_dataset(
    model: str, m: int, k: int, count: int, seed: int
) -> ChannelDataset:
    """Deterministic dataset; channel i comes from substream (seed, 'channel', i).

    LOS user angles follow the discrete uniform distribution over {0,...,180}
    degrees.  Coinciding user angles are allowed (nothing rejects them), which
    matters only for multi-user LOS draws.
    """
    if m < 1 or k < 1:
        raise ValueError(f"need M >= 1 and K >= 1, got M={m}, K={k}")
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    if model not in _MODEL_CODES:
        raise ValueError(f"unknown channel model {model!r}")
    out = np.empty((count, m, k), dtype=np.complex128)
    angles = None
    if model == LOS_ULA:
        angles = np.empty((count, k), dtype=float)
    for i in range(count):
        g = rng.stream(seed, "channel", i)
        if model == RAYLEIGH:
            out[i] = rng.complex_normal(g, (m, k))
        else:
            phi = g.integers(0, 181, size=k).astype(float)
            angles[i] = phi
            out[i] = gen_los_ula(m, phi).entries
    return ChannelDataset(out, model, seed, angles)


def save_dataset(path, dataset: ChannelDataset) -> None:
    """Little-endian binary dump; complex entries stored interleaved (re, im) f64."""
    count = len(dataset)
    header = _HEADER.pack(
        _MAGIC,
        _VERSION,
        _DTYPE_C128,
        _MODEL_CODES[dataset.model_tag],
        dataset.m,
        dataset.k,
        count,
        int(dataset.seed) & 0xFFFFFFFFFFFFFFFF,
    )
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(dataset.channels.astype("<c16")).tobytes())
    os.replace(tmp, path)


def load_dataset(path, expect_m: int | None = None, expect_k: int | None = None) -> ChannelDataset:
    """Inverse of save_dataset; round-trips bit-exactly."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DatasetTruncatedError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, version, dtype, model, m, k, count, seed = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != _VERSION:
        raise DatasetVersionError(
            f"{path}: bad magic/version (got {magic!r} v{version}, want {_MAGIC!r} v{_VERSION})"
        )
    if dtype != _DTYPE_C128:
        raise DatasetVersionError(f"{path}: unsupported dtype code {dtype}")
    if model not in _MODEL_NAMES:
        raise DatasetVersionError(f"{path}: unknown model code {model}")
    if (expect_m is not None and m != expect_m) or (expect_k is not None and k != expect_k):
        raise DatasetDimensionError(
            f"{path}: stored dims M={m}, K={k} but expected M={expect_m}, K={expect_k}"
        )
    need = count * m * k * 16
    body = raw[_HEADER.size :]
    if len(body) < need:
        raise DatasetTruncatedError(f"{path}: payload holds {len(body)} bytes, need {need}")
    channels = np.frombuffer(body[:need], dtype="<c16").reshape(count, m, k)
    return ChannelDataset(channels.astype(np.complex128), _MODEL_NAMES[model], seed)
