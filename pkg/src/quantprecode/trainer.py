"""Self-supervised training of the message-passing precoder.

Per channel realization the network precodes N_s symbol vectors.  Each
antenna's level logits get standard Gumbel noise; the forward pass takes the
hard argmax selection (a categorical sample, by the Gumbel-max property)
while the backward pass differentiates the tempered softmax of the same
noisy logits - the straight-through estimator.  The selected levels are
scaled so the batch satisfies the average power constraint, and the loss is
the negative achievable sum rate computed from the batch's least-squares
linear-gain/distortion split.  Gradients flow analytically through the rate,
the sample means, the power normalization and all network layers; Adam does
the updates.

Everything stochastic is keyed by (seed, purpose, epoch, channel index), so
runs resume bit-exactly from checkpoints and batch chunking is a pure
speed/memory knob.
"""

from __future__ import annotations

import csv
import json
import os
import struct
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import gnn_core, metrics, rng
from .channel import ChannelDataset
from .gnn import (
    MAT_NAMES,
    GnnConfig,
    GnnWeights,
    LayerWeights,
    batched_inputs,
    forward_stack,
    infer_batch,
    init_weights,
    zeros_like_weights,
)
from .quantizer import ScalarQuantizer, lloyd_max

_LN2 = float(np.log(2.0))
_GUMBEL_EPS = 1e-12


class TrainingError(Exception):
    pass


@dataclass(frozen=True)
class AdamParams:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainConfig:
    m: int
    k: int
    bits: int
    d_h: int = 128
    n_h: int = 4
    lr: float = 5e-3
    batch_channels: int = 128
    n_s: int = 125
    tau: float = 1.0
    epochs: int = 20
    p_t: float | None = None
    snr_train_db: float = 20.0
    seed: int = 0
    adam: AdamParams = field(default_factory=AdamParams)
    chunk_channels: int = 16
    dtype: str = "float32"

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ValueError(f"temperature must be positive, got {self.tau}")
        if self.n_s < self.k + 1:
            raise ValueError(f"need N_s >= K+1, got N_s={self.n_s}, K={self.k}")
        if self.p_t is None:
            self.p_t = float(self.m)

    @property
    def sigma_v2(self) -> float:
        return self.p_t / 10.0 ** (self.snr_train_db / 10.0)

    def gnn_config(self) -> GnnConfig:
        return GnnConfig(self.m, self.k, self.bits, self.d_h, self.n_h)

    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32


def gumbel_sample(shape, seed: int | None = None, generator=None) -> np.ndarray:
    """Standard Gumbel(0,1) noise: -ln(-ln(u)), u uniform clamped away from {0,1}."""
    g = generator if generator is not None else rng.stream(seed, "gumbel")
    u = np.clip(g.random(shape), _GUMBEL_EPS, 1.0 - _GUMBEL_EPS)
    return -np.log(-np.log(u))


def st_gumbel_softmax(logits: np.ndarray, g: np.ndarray, tau: float):
    """Hard one-hot draw plus its tempered-softmax relaxation.

    The loss is evaluated on the hard selection but differentiated as if the
    soft one were used; this helper exposes both so callers (and tests) can
    exercise either path.  Argmax ties go to the lowest index.
    """
    if tau <= 0.0:
        raise ValueError("temperature must be positive")
    b = np.asarray(logits, dtype=float) + np.asarray(g, dtype=float)
    idx = int(np.argmax(b))
    hard = np.zeros_like(b)
    hard[idx] = 1.0
    z = (b - b.max()) / tau
    soft = np.exp(z)
    soft /= soft.sum()
    return hard, soft


# ---------------------------------------------------------------------------
# loss forward/backward for one chunk of channels
# ---------------------------------------------------------------------------


def _rate_loss_and_grad(h, s_mat, y, sigma_v2):
    """Negative sum rate of one channel batch plus d(loss)/dY*.

    h: (M, K) complex; s_mat: (K, N_s); y: (M, N_s) already power-normalized.
    The gradient convention for complex arrays is dJ/d(conj(z)); for real
    parameters downstream, dJ/d(Re z) = 2 Re g and dJ/d(Im z) = 2 Im g.
    """
    m, n_s = y.shape
    k = s_mat.shape[0]
    css = (s_mat @ s_mat.conj().T) / n_s
    css_inv = np.linalg.inv(css)
    r = (y @ s_mat.conj().T) / n_s
    g_mat = r @ css_inv
    q = y - g_mat @ s_mat
    cq = (q @ q.conj().T) / n_s
    cq = 0.5 * (cq + cq.conj().T)

    t = h.T @ g_mat  # (K, K), t[k, k'] = h_k^T g_k'
    sig = np.abs(np.diag(t)) ** 2
    interf = np.sum(np.abs(t) ** 2, axis=1) - sig
    u = h.conj()  # columns u_k
    dist = np.einsum("mk,mn,nk->k", h, cq, h.conj()).real
    den = interf + dist + sigma_v2
    snidr = sig / den
    j = -float(np.sum(np.log2(1.0 + snidr)))
    if not np.isfinite(j):
        raise TrainingError(f"non-finite loss (snidr={snidr})")

    # dJ/dsnidr_k, then into the quadratic forms
    c1 = -1.0 / ((1.0 + snidr) * _LN2)
    g_sig = c1 / den
    g_den = -c1 * sig / den**2

    g_t = (g_den[:, None] * t).astype(np.complex128)
    np.fill_diagonal(g_t, g_sig * np.diag(t))
    g_cq = (u * (0.5 * g_den)[None, :]) @ u.conj().T  # sum_k (g_den_k/2) u_k u_k^H

    g_g = h.conj() @ g_t  # from t = h^T g
    g_q = (2.0 / n_s) * (g_cq @ q)  # g_cq is Hermitian
    g_y = g_q.copy()
    g_g -= g_q @ s_mat.conj().T
    g_r = g_g @ css_inv  # css Hermitian
    g_y += g_r @ s_mat / n_s
    return j, g_y


def _power_normalize_and_grad(y_raw, p_t):
    """alpha * y_raw with alpha = sqrt(P_T / mean_n ||y_n||^2); returns closure data."""
    n_s = y_raw.shape[1]
    pbar = float(np.sum(np.abs(y_raw) ** 2)) / n_s
    if pbar <= 0.0:
        raise TrainingError("all-zero network output; cannot normalize power")
    alpha = float(np.sqrt(p_t / pbar))
    return alpha, pbar


@dataclass
class ChunkResult:
    loss_sum: float
    grads: list  # per-layer tuples matching weight slots
    n_channels: int


def _chunk_loss_and_grads(
    weights: GnnWeights,
    cfg: TrainConfig,
    levels: np.ndarray,
    h_chunk: np.ndarray,
    s_chunk: np.ndarray,
    noise: np.ndarray,
    soft_forward: bool = False,
    want_grads: bool = True,
):
    """Loss and weight gradients summed over a chunk of channels.

    h_chunk: (C, M, K) complex
    s_chunk: (C, N_s, K) complex
    noise:   (2, L, C, N_s, M) standard Gumbel draws
    """
    gcfg = weights.config
    m, k, L = gcfg.m, gcfg.k, gcfg.n_levels
    c_ch, n_s = s_chunk.shape[:2]
    ni = c_ch * n_s
    dtype = weights.layers[0].w_edge.dtype
    lev = levels.astype(dtype)

    h_stack = np.broadcast_to(h_chunk[:, None, :, :], (c_ch, n_s, m, k)).reshape(ni, m, k)
    e0, zb0, zu0 = batched_inputs(h_stack, s_chunk.reshape(ni, k), dtype=dtype)
    logits, caches = forward_stack(weights, e0, zb0, zu0, ni, want_cache=want_grads)

    a = logits.reshape(2, L, c_ch, n_s, m)
    b = a + noise.astype(dtype)
    idx = np.argmax(b, axis=1)  # (2, C, N_s, M)
    y_hard = lev[idx]
    z = b / cfg.tau
    z -= z.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    soft = z / z.sum(axis=1, keepdims=True)  # (2, L, C, N_s, M)
    y_soft = np.einsum("l,plcnm->pcnm", lev, soft)
    y_val = y_soft if soft_forward else y_hard

    # per-channel complex outputs (M, N_s)
    loss_sum = 0.0
    g_y_all = np.zeros((2, c_ch, n_s, m), dtype=dtype) if want_grads else None
    for c in range(c_ch):
        y_raw = (y_val[0, c] + 1j * y_val[1, c]).T.astype(np.complex128)  # (M, N_s)
        alpha, pbar = _power_normalize_and_grad(y_raw, cfg.p_t)
        y_norm = alpha * y_raw
        s_mat = s_chunk[c].T  # (K, N_s)
        j, g_ynorm = _rate_loss_and_grad(h_chunk[c], s_mat, y_norm, cfg.sigma_v2)
        loss_sum += j
        if not want_grads:
            continue
        g_alpha = 2.0 * float(np.sum((g_ynorm.conj() * y_raw).real))
        g_pbar = g_alpha * (-alpha / (2.0 * pbar))
        g_yraw = alpha * g_ynorm + (g_pbar / n_s) * y_raw
        g_y_all[0, c] = 2.0 * g_yraw.real.T
        g_y_all[1, c] = 2.0 * g_yraw.imag.T

    if not want_grads:
        return ChunkResult(loss_sum, [], c_ch), None

    # straight-through: route dJ/dy through the soft selection
    g_soft = g_y_all[:, None, :, :, :] * lev[None, :, None, None, None]  # (2, L, C, N_s, M)
    inner = np.sum(g_soft * soft, axis=1, keepdims=True)
    g_b = soft * (g_soft - inner) / cfg.tau
    g_logits = np.ascontiguousarray(g_b.reshape(2 * L, ni * m), dtype=dtype)

    # backprop through the layer stack
    grads: list = [None] * gcfg.n_layers
    g_e, g_zb, g_zu = None, g_logits, None
    for li in range(gcfg.n_layers - 1, -1, -1):
        is_out = li == gcfg.n_layers - 1
        lw = weights.layers[li]
        lg, g_e, g_zb, g_zu = gnn_core.layer_backward(
            lw.as_tuple(), caches[li], g_e, g_zb, g_zu, ni, m, k, gcfg.leaky_slope, is_out
        )
        grads[li] = lg
    return ChunkResult(loss_sum, grads, c_ch), None


def _accumulate(total: list, part: list, scale: float = 1.0):
    for li, tup in enumerate(part):
        tot = total[li]
        for si, g in enumerate(tup):
            if g is not None:
                tot[si] += scale * g
    return total


def loss_and_grad(
    h,
    s,
    weights: GnnWeights,
    cfg: TrainConfig,
    q: ScalarQuantizer,
    noise: np.ndarray | None = None,
    noise_seed: int = 0,
    soft_forward: bool = False,
):
    """Loss J = -R_sum and gradients for one channel realization.

    ``noise`` freezes the Gumbel draws (shape (2, L, 1, N_s, M)); otherwise
    they come from the stream (noise_seed, 'gumbel').  ``soft_forward``
    evaluates the loss on the soft selections too, which makes the whole
    computation the differentiable surrogate used for gradient checking.
    """
    hm = h.entries if hasattr(h, "entries") else np.asarray(h, dtype=np.complex128)
    sym = s.symbols if hasattr(s, "symbols") else np.asarray(s, dtype=np.complex128)
    gcfg = weights.config
    L = gcfg.n_levels
    n_s = sym.shape[0]
    if noise is None:
        g = rng.stream(noise_seed, "gumbel")
        noise = gumbel_sample((2, L, 1, n_s, gcfg.m), generator=g)
    res, _ = _chunk_loss_and_grads(
        weights, cfg, q.levels, hm[None], sym[None], noise, soft_forward=soft_forward
    )
    grads = [tuple(g / res.n_channels if g is not None else None for g in tup) for tup in res.grads]
    return res.loss_sum / res.n_channels, grads


def forward_train(h, s, weights: GnnWeights, cfg: TrainConfig, q: ScalarQuantizer, noise_seed: int = 0):
    """Power-normalized straight-through outputs for one channel: (M, N_s).

    The returned values are exactly the hard selections scaled by the batch
    power constant, i.e. the quantities the training loss is evaluated on.
    """
    hm = h.entries if hasattr(h, "entries") else np.asarray(h, dtype=np.complex128)
    sym = s.symbols if hasattr(s, "symbols") else np.asarray(s, dtype=np.complex128)
    gcfg = weights.config
    L = gcfg.n_levels
    n_s = sym.shape[0]
    g = rng.stream(noise_seed, "gumbel")
    noise = gumbel_sample((2, L, 1, n_s, gcfg.m), generator=g)
    dtype = weights.layers[0].w_edge.dtype
    h_stack = np.broadcast_to(hm[None, :, :], (n_s, gcfg.m, gcfg.k))
    e0, zb0, zu0 = batched_inputs(h_stack, sym, dtype=dtype)
    logits, _ = forward_stack(weights, e0, zb0, zu0, n_s)
    a = logits.reshape(2, L, 1, n_s, gcfg.m)
    idx = np.argmax(a + noise.astype(dtype), axis=1)
    y_raw = (q.levels[idx[0, 0]] + 1j * q.levels[idx[1, 0]]).T
    alpha, _ = _power_normalize_and_grad(y_raw, cfg.p_t)
    return alpha * y_raw


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    t: int
    m: list
    v: list

    @classmethod
    def zeros(cls, weights: GnnWeights) -> "AdamState":
        return cls(0, zeros_like_weights(weights), zeros_like_weights(weights))


def adam_step(weights: GnnWeights, grads: list, state: AdamState, lr: float, params: AdamParams) -> None:
    """One bias-corrected Adam update, in place."""
    state.t += 1
    b1, b2, eps = params.beta1, params.beta2, params.eps
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for li, lw in enumerate(weights.layers):
        mats = lw.as_tuple()
        for si, w in enumerate(mats):
            if w is None:
                continue
            g = grads[li][si]
            m_ = state.m[li][si]
            v_ = state.v[li][si]
            m_ *= b1
            m_ += (1.0 - b1) * g
            v_ *= b2
            v_ += (1.0 - b2) * np.square(g)
            w -= lr * (m_ / c1) / (np.sqrt(v_ / c2) + eps)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"QPGNNCKP"
_CKPT_VERSION = 1
_CKPT_HEAD = struct.Struct("<8sII")  # magic, version, header json length


class CheckpointError(Exception):
    pass


def save_checkpoint(path, weights: GnnWeights, q: ScalarQuantizer, metadata: dict, opt: AdamState | None = None):
    """Versioned container; see README for the byte layout.

    Weight (and optimizer-moment) matrices are stored row-major as 32-bit
    little-endian floats, in the array order announced by the JSON header.
    """
    arrays = []
    names = []
    for li, lw in enumerate(weights.layers):
        for si, name in enumerate(MAT_NAMES):
            a = lw.as_tuple()[si]
            if a is None:
                continue
            names.append({"name": f"layer{li}/{name}", "shape": list(a.shape)})
            arrays.append(a)
    if opt is not None:
        for kind, store in (("adam_m", opt.m), ("adam_v", opt.v)):
            for li, tup in enumerate(store):
                for si, a in enumerate(tup):
                    if a is None:
                        continue
                    names.append({"name": f"{kind}/layer{li}/{MAT_NAMES[si]}", "shape": list(a.shape)})
                    arrays.append(a)
    header = {
        "config": weights.config.to_dict(),
        "quantizer": {
            "b": q.bits,
            "levels": [float(f"{v:.17g}") for v in q.levels],
            "thresholds": [float(f"{v:.17g}") for v in q.thresholds],
        },
        "metadata": dict(metadata),
        "adam_t": opt.t if opt is not None else None,
        "arrays": names,
    }
    blob = json.dumps(header).encode("utf-8")
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(_CKPT_HEAD.pack(_CKPT_MAGIC, _CKPT_VERSION, len(blob)))
        fh.write(blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path, dtype=np.float32):
    """Returns (weights, quantizer, metadata, AdamState-or-None)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _CKPT_HEAD.size:
        raise CheckpointError(f"{path}: shorter than fixed header")
    magic, version, hlen = _CKPT_HEAD.unpack_from(raw)
    if magic != _CKPT_MAGIC or version != _CKPT_VERSION:
        raise CheckpointError(f"{path}: bad magic/version ({magic!r} v{version})")
    header = json.loads(raw[_CKPT_HEAD.size : _CKPT_HEAD.size + hlen].decode("utf-8"))
    cfg = GnnConfig(**header["config"])
    qz = ScalarQuantizer(
        int(header["quantizer"]["b"]),
        np.asarray(header["quantizer"]["levels"], dtype=float),
        np.asarray(header["quantizer"]["thresholds"], dtype=float),
    )
    offset = _CKPT_HEAD.size + hlen
    stored = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape))
        a = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shape)
        stored[spec["name"]] = np.array(a, dtype=dtype)  # writable copy
        offset += count * 4
    layers = []
    for li in range(cfg.n_layers):
        is_out = li == cfg.n_layers - 1
        mats = []
        for name in MAT_NAMES:
            key = f"layer{li}/{name}"
            if key not in stored:
                if is_out and name in ("w_self_ue", "w_neigh_ue"):
                    mats.append(None)
                    continue
                raise CheckpointError(f"{path}: missing array {key}")
            mats.append(stored[key])
        layers.append(LayerWeights(*mats))
    weights = GnnWeights(cfg, layers).validate()
    opt = None
    if header.get("adam_t") is not None:
        m_store, v_store = [], []
        for kind, bucket in (("adam_m", m_store), ("adam_v", v_store)):
            for li in range(cfg.n_layers):
                tup = []
                for name in MAT_NAMES:
                    tup.append(stored.get(f"{kind}/layer{li}/{name}"))
                bucket.append(tup)
        opt = AdamState(int(header["adam_t"]), m_store, v_store)
    return weights, qz, header["metadata"], opt


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------


def validate_rate(weights: GnnWeights, q: ScalarQuantizer, channels: ChannelDataset, cfg: TrainConfig, n_sym: int = 125) -> float:
    """Mean achievable rate over held-out channels, hard outputs, batch-normalized."""
    rates = []
    for i in range(len(channels)):
        h = channels.channels[i]
        sym = rng.complex_normal(rng.stream(cfg.seed, "val-sym", i), (n_sym, cfg.k))
        y = infer_batch(h, sym, weights, weights.config, q)
        scale = np.sqrt(cfg.p_t * n_sym / np.sum(np.abs(y) ** 2))
        est = metrics.estimate_bussgang(sym, scale * y)
        rates.append(metrics.sum_rate(h, est, cfg.sigma_v2))
    return float(np.mean(rates))


def train(
    train_ds: ChannelDataset,
    val_ds: ChannelDataset | None,
    cfg: TrainConfig,
    out_path,
    q: ScalarQuantizer | None = None,
    log_path=None,
    resume_from=None,
    progress=None,
) -> dict:
    """Epoch/batch SGD over the channel dataset; returns the final metadata.

    Writes ``out_path`` (best validation checkpoint) and ``out_path.last``
    (latest epoch, with optimizer state for bit-exact resume) plus a CSV log
    of (epoch, step, loss, val_rate, wall_ms).
    """
    if len(train_ds) == 0:
        raise TrainingError("empty training dataset")
    if q is None:
        q = lloyd_max(cfg.bits)
    dtype = cfg.np_dtype()
    gcfg = cfg.gnn_config()
    if (train_ds.m, train_ds.k) != (cfg.m, cfg.k):
        raise TrainingError(
            f"dataset is M={train_ds.m}, K={train_ds.k} but config wants M={cfg.m}, K={cfg.k}"
        )

    start_epoch = 0
    if resume_from is not None:
        weights, q, meta, opt = load_checkpoint(resume_from, dtype=dtype)
        if opt is None:
            raise CheckpointError("checkpoint lacks optimizer state; cannot resume")
        state = opt
        start_epoch = int(meta["epoch"]) + 1
        best_val = float(meta.get("best_val", -np.inf))
    else:
        weights = init_weights(gcfg, cfg.seed, dtype=dtype)
        state = AdamState.zeros(weights)
        best_val = -np.inf

    n_train = len(train_ds)
    L = gcfg.n_levels
    step = 0
    log_rows = []
    last_meta = {}
    for epoch in range(start_epoch, cfg.epochs):
        order = rng.stream(cfg.seed, "shuffle", epoch).permutation(n_train)
        t_epoch = time.perf_counter()
        for b0 in range(0, n_train, cfg.batch_channels):
            t0 = time.perf_counter()
            batch_idx = order[b0 : b0 + cfg.batch_channels]
            total = [
                [None if a is None else np.zeros_like(a) for a in lw.as_tuple()]
                for lw in weights.layers
            ]
            loss_sum = 0.0
            n_done = 0
            for c0 in range(0, batch_idx.size, cfg.chunk_channels):
                chunk = batch_idx[c0 : c0 + cfg.chunk_channels]
                h_chunk = train_ds.channels[chunk]
                s_chunk = np.stack(
                    [
                        rng.complex_normal(rng.stream(cfg.seed, "train-sym", int(ci)), (cfg.n_s, cfg.k))
                        for ci in chunk
                    ]
                )
                noise = np.stack(
                    [
                        gumbel_sample(
                            (2, L, cfg.n_s, cfg.m),
                            generator=rng.stream(cfg.seed, "gumbel", epoch, int(ci)),
                        )
                        for ci in chunk
                    ],
                    axis=2,
                )
                res, _ = _chunk_loss_and_grads(weights, cfg, q.levels, h_chunk, s_chunk, noise)
                loss_sum += res.loss_sum
                n_done += res.n_channels
                _accumulate(total, res.grads)
            grads = [
                tuple(None if g is None else g / n_done for g in tup) for tup in total
            ]
            adam_step(weights, grads, state, cfg.lr, cfg.adam)
            step += 1
            wall_ms = (time.perf_counter() - t0) * 1e3
            log_rows.append((epoch, step, loss_sum / n_done, "", f"{wall_ms:.1f}"))
            if progress:
                progress(epoch, step, loss_sum / n_done, wall_ms)

        val_rate = ""
        if val_ds is not None and len(val_ds) > 0:
            val_rate = validate_rate(weights, q, val_ds, cfg)
            log_rows.append((epoch, step, "", val_rate, f"{(time.perf_counter() - t_epoch) * 1e3:.1f}"))
        improved = val_rate != "" and val_rate > best_val
        if improved:
            best_val = float(val_rate)
        meta = {
            "epoch": epoch,
            "step": step,
            "seed": cfg.seed,
            "val_rate": val_rate if val_rate != "" else None,
            "best_val": best_val,
            "train": asdict(cfg),
        }
        last_meta = meta
        save_checkpoint(f"{out_path}.last", weights, q, meta, opt=state)
        if improved or val_ds is None or len(val_ds) == 0:
            save_checkpoint(out_path, weights, q, meta, opt=state)
        if log_path is not None:
            with open(log_path, "w", newline="") as fh:
                wr = csv.writer(fh)
                wr.writerow(["epoch", "step", "loss", "val_rate", "wall_ms"])
                wr.writerows(log_rows)
    return last_meta
