"""The message-passing precoder network.

The transmitter graph is complete bipartite: one node per antenna, one per
user, an edge per antenna/user pair.  Edge inputs are the channel
coefficients (real and imaginary), user inputs the intended symbol, antenna
inputs zero.  After one input layer, N_h hidden layers and one output layer,
each antenna node holds 2 * 2**b logits; the first half scores the DAC
levels for the real part, the second half for the imaginary part, and a
softmax per half turns them into probability vectors.

All node/edge updates share weights across the graph, which makes the
network equivariant to antenna reordering and invariant to user reordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import gnn_core, rng
from .quantizer import ScalarQuantizer

N_MATS = 7  # per-layer weight slots: edge, bs, ue, self_bs, neigh_bs, self_ue, neigh_ue


@dataclass(frozen=True)
class GnnConfig:
    m: int
    k: int
    bits: int
    d_h: int = 128
    n_h: int = 4
    leaky_slope: float = 0.01

    def __post_init__(self):
        if self.m < 1 or self.k < 1:
            raise ValueError(f"need M, K >= 1, got M={self.m}, K={self.k}")
        if self.bits < 1:
            raise ValueError(f"need bits >= 1, got {self.bits}")
        if self.d_h < 1 or self.n_h < 1:
            raise ValueError(f"need d_h, N_h >= 1, got d_h={self.d_h}, N_h={self.n_h}")

    @property
    def n_levels(self) -> int:
        return 2**self.bits

    @property
    def d_out(self) -> int:
        return 2 ** (self.bits + 1)

    @property
    def n_layers(self) -> int:
        return self.n_h + 2

    def layer_dims(self) -> list[tuple[int, int]]:
        """(d_in, d_out) of every weighted layer: input, hidden..., output."""
        dims = [(2, self.d_h)]
        dims += [(self.d_h, self.d_h)] * self.n_h
        dims.append((self.d_h, self.d_out))
        return dims

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "k": self.k,
            "bits": self.bits,
            "d_h": self.d_h,
            "n_h": self.n_h,
            "leaky_slope": self.leaky_slope,
        }


@dataclass
class LayerWeights:
    """Seven (five at the output layer) weight matrices of one layer."""

    w_edge: np.ndarray      # (d_out, d_in)
    w_bs: np.ndarray        # (d_out, d_in)
    w_ue: np.ndarray        # (d_out, d_in)
    w_self_bs: np.ndarray   # (d_out, d_in)
    w_neigh_bs: np.ndarray  # (d_out, d_out)
    w_self_ue: np.ndarray | None = None   # absent at the output layer
    w_neigh_ue: np.ndarray | None = None

    def as_tuple(self):
        return (
            self.w_edge,
            self.w_bs,
            self.w_ue,
            self.w_self_bs,
            self.w_neigh_bs,
            self.w_self_ue,
            self.w_neigh_ue,
        )

    def arrays(self):
        return [a for a in self.as_tuple() if a is not None]


MAT_NAMES = ("w_edge", "w_bs", "w_ue", "w_self_bs", "w_neigh_bs", "w_self_ue", "w_neigh_ue")


@dataclass
class GnnWeights:
    config: GnnConfig
    layers: list[LayerWeights] = field(default_factory=list)

    def validate(self):
        dims = self.config.layer_dims()
        if len(self.layers) != len(dims):
            raise ValueError(f"expected {len(dims)} layers, got {len(self.layers)}")
        for li, (lw, (d_in, d_out)) in enumerate(zip(self.layers, dims)):
            is_out = li == len(dims) - 1
            for name in MAT_NAMES[:3] + ("w_self_bs",):
                a = getattr(lw, name)
                if a.shape != (d_out, d_in):
                    raise ValueError(f"layer {li} {name}: shape {a.shape} != {(d_out, d_in)}")
            if lw.w_neigh_bs.shape != (d_out, d_out):
                raise ValueError(f"layer {li} w_neigh_bs: shape {lw.w_neigh_bs.shape}")
            if is_out:
                if lw.w_self_ue is not None or lw.w_neigh_ue is not None:
                    raise ValueError("output layer must not carry user-update matrices")
            else:
                if lw.w_self_ue.shape != (d_out, d_in) or lw.w_neigh_ue.shape != (d_out, d_out):
                    raise ValueError(f"layer {li} user matrices have wrong shape")
            for a in lw.arrays():
                if not np.all(np.isfinite(a)):
                    raise ValueError(f"layer {li} contains non-finite weights")
        return self

    def arrays(self):
        out = []
        for lw in self.layers:
            out.extend(lw.arrays())
        return out

    def astype(self, dtype) -> "GnnWeights":
        """Deep copy with the requested dtype (always copies)."""
        layers = []
        for lw in self.layers:
            layers.append(
                LayerWeights(
                    *[None if a is None else np.array(a, dtype=dtype, order="C") for a in lw.as_tuple()]
                )
            )
        return GnnWeights(self.config, layers)


@dataclass(frozen=True)
class ProbOutput:
    """Level probabilities per antenna, one row per antenna, one column per level."""

    p_re: np.ndarray
    p_im: np.ndarray

    def __post_init__(self):
        for name, p in (("p_re", self.p_re), ("p_im", self.p_im)):
            if np.any(p < 0.0) or np.any(p > 1.0):
                raise ValueError(f"{name} entries must lie in [0, 1]")
            err = np.max(np.abs(p.sum(axis=1) - 1.0))
            if err > 1e-9:
                raise ValueError(f"{name} rows must sum to 1, worst error {err:.3e}")


def zeros_like_weights(weights: GnnWeights) -> list:
    """Per-layer tuples of zero arrays matching the weight slots (None where absent)."""
    out = []
    for lw in weights.layers:
        out.append(tuple(None if a is None else np.zeros_like(a) for a in lw.as_tuple()))
    return out


def init_weights(config: GnnConfig, seed: int, dtype=np.float64) -> GnnWeights:
    """Glorot-uniform init, one substream per matrix so layouts are seed-stable."""
    layers = []
    for li, (d_in, d_out) in enumerate(config.layer_dims()):
        is_out = li == config.n_layers - 1
        mats = []
        for si, name in enumerate(MAT_NAMES):
            if is_out and name in ("w_self_ue", "w_neigh_ue"):
                mats.append(None)
                continue
            shape = (d_out, d_out) if name in ("w_neigh_bs", "w_neigh_ue") else (d_out, d_in)
            a = np.sqrt(6.0 / (shape[0] + shape[1]))
            g = rng.stream(seed, "init", li, si)
            mats.append(g.uniform(-a, a, size=shape).astype(dtype))
        layers.append(LayerWeights(*mats))
    return GnnWeights(config, layers).validate()


class GraphState(NamedTuple):
    """Per-layer features in the core's feature-major layout.

    z_edge: (d, NI*M*K) edge features; z_bs: (d, NI*M) antenna features;
    z_ue: (d, NI*K) user features.  NI counts stacked graph instances.
    """

    z_edge: np.ndarray
    z_bs: np.ndarray
    z_ue: np.ndarray


def init_inputs(h, s, dtype=np.float64) -> GraphState:
    """Input features of one graph instance.

    h: (M, K) complex channel; s: (K,) complex symbols.  Edge features get
    the channel coefficient (real, imag), user features the symbol, antenna
    features zero.
    """
    hm = h.entries if hasattr(h, "entries") else np.asarray(h, dtype=np.complex128)
    sv = np.asarray(s, dtype=np.complex128).reshape(-1)
    m, k = hm.shape
    if sv.shape != (k,):
        raise ValueError(f"symbol vector must have K={k} entries, got {sv.shape}")
    return batched_inputs(hm[None, :, :], sv[None, :], dtype)


def batched_inputs(h_stack: np.ndarray, s_stack: np.ndarray, dtype=np.float64) -> GraphState:
    """Stack NI graph instances: h_stack (NI, M, K), s_stack (NI, K)."""
    ni, m, k = h_stack.shape
    e0 = np.empty((2, ni * m * k), dtype=dtype)
    e0[0] = h_stack.real.reshape(-1)
    e0[1] = h_stack.imag.reshape(-1)
    zb0 = np.zeros((2, ni * m), dtype=dtype)
    zu0 = np.empty((2, ni * k), dtype=dtype)
    zu0[0] = s_stack.real.reshape(-1)
    zu0[1] = s_stack.imag.reshape(-1)
    return GraphState(e0, zb0, zu0)


def forward_stack(weights: GnnWeights, e0, zb0, zu0, ni: int, want_cache: bool = False, exact: bool = False):
    """Run all layers; returns (logits (d_out, NI*M), caches or None).

    Logit rows 0..L-1 score the real-part levels, rows L..2L-1 the
    imaginary-part levels.  ``exact`` selects the core's order-invariant
    reductions (bit-exact permutation behaviour); inference uses it, the
    trainer keeps the fast path.
    """
    cfg = weights.config
    e, zb, zu = e0, zb0, zu0
    caches = [] if want_cache else None
    n = cfg.n_layers
    for li, lw in enumerate(weights.layers):
        is_out = li == n - 1
        e, zb_new, zu_new, cache = gnn_core.layer_forward(
            lw.as_tuple(), e, zb, zu, ni, cfg.m, cfg.k, cfg.leaky_slope, is_out, exact
        )
        if want_cache:
            caches.append(cache)
        zb = zb_new
        if not is_out:
            zu = zu_new
    return zb, caches


def _softmax_rows(a: np.ndarray) -> np.ndarray:
    z = a - a.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=-1, keepdims=True)
    return z


def weight_dtype(weights: GnnWeights):
    return weights.layers[0].w_edge.dtype


def forward(h, s, weights: GnnWeights, config: GnnConfig | None = None) -> ProbOutput:
    """Level probabilities for one channel/symbol pair."""
    cfg = config or weights.config
    e0, zb0, zu0 = init_inputs(h, s, dtype=weight_dtype(weights))
    logits, _ = forward_stack(weights, e0, zb0, zu0, ni=1, exact=True)
    L = cfg.n_levels
    a = logits.reshape(2 * L, cfg.m)  # (2L, M)
    p_re = _softmax_rows(a[:L].T)
    p_im = _softmax_rows(a[L:].T)
    return ProbOutput(p_re, p_im)


def infer(h, s, weights: GnnWeights, config: GnnConfig | None, q: ScalarQuantizer) -> np.ndarray:
    """Hard precoded output: per antenna the argmax level of each half.

    Ties resolve to the lowest level index.  The output alphabet is exactly
    the L x L complex lattice of the quantizer levels.
    """
    cfg = config or weights.config
    y = infer_batch(h, np.asarray(s, dtype=np.complex128).reshape(1, -1), weights, cfg, q)
    return y[:, 0]


def infer_batch(h, s_batch, weights: GnnWeights, config: GnnConfig | None, q: ScalarQuantizer) -> np.ndarray:
    """Hard outputs for a batch of symbol vectors on one channel: (M, N_s)."""
    cfg = config or weights.config
    if q.n_levels != cfg.n_levels:
        raise ValueError(f"quantizer has {q.n_levels} levels but config wants {cfg.n_levels}")
    hm = h.entries if hasattr(h, "entries") else np.asarray(h, dtype=np.complex128)
    sb = np.asarray(s_batch, dtype=np.complex128)
    n_s = sb.shape[0]
    h_stack = np.broadcast_to(hm[None, :, :], (n_s, cfg.m, cfg.k))
    e0, zb0, zu0 = batched_inputs(h_stack, sb, dtype=weight_dtype(weights))
    logits, _ = forward_stack(weights, e0, zb0, zu0, ni=n_s, exact=True)
    L = cfg.n_levels
    a = logits.reshape(2 * L, n_s, cfg.m)
    idx_re = np.argmax(a[:L], axis=0)  # (n_s, M); first max = lowest index
    idx_im = np.argmax(a[L:], axis=0)
    y = q.levels[idx_re] + 1j * q.levels[idx_im]
    return y.T
