"""Experiment orchestration: seeded sweeps, CSV emission, provenance.

Every output CSV starts with one provenance comment line (tool version, git
describe, config hash, seed); the body below it is a pure function of
(config, seed, input files), so reruns are byte-identical apart from that
comment.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
from pathlib import Path

import numpy as np

from . import metrics, rng, trainer
from .channel import ChannelDataset, gen_los_ula, load_dataset
from .gnn import GnnWeights, infer_batch
from .precoders import linear_quantized_tx
from .quantizer import ScalarQuantizer, lloyd_max

INF_BITS = "inf"


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=10, cwd=Path(__file__).parent,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.TimeoutExpired):
        pass
    return "unknown"


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def fmt(v) -> str:
    if isinstance(v, float) or isinstance(v, np.floating):
        if np.isposinf(v):
            return "inf"
        if np.isneginf(v):
            return "-inf"
        return f"{v:.12g}"
    return str(v)


def write_csv(path, columns, rows, provenance: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# provenance: " + json.dumps(provenance, sort_keys=True, default=str)]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_manifest(path, manifest: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def provenance_block(config: dict, seed) -> dict:
    return {"git": git_describe(), "config_hash": config_hash(config), "seed": seed}


# ---------------------------------------------------------------------------
# evaluation primitives
# ---------------------------------------------------------------------------


def sigma_v2_of(snr_db: float, p_t: float) -> float:
    return p_t / 10.0 ** (snr_db / 10.0)


def _parse_bits(token) -> int | None:
    if token in (INF_BITS, None):
        return None
    return int(token)


def eval_linear_channel(h, precoder, q, s, p_t, snr_db, with_nmse=False):
    y = linear_quantized_tx(h, precoder, q, s, p_t, bypass=q is None)
    return metrics.eval_report(h, s, y, sigma_v2_of(snr_db, p_t), snr_db, with_nmse)


def eval_gnn_channel(h, weights: GnnWeights, q, s, p_t, snr_db, with_nmse=False):
    y = infer_batch(h, s, weights, weights.config, q)
    scale = np.sqrt(p_t * s.shape[0] / np.sum(np.abs(y) ** 2))
    return metrics.eval_report(h, s, scale * y, sigma_v2_of(snr_db, p_t), snr_db, with_nmse)


def rate_sweep(
    ds: ChannelDataset,
    series: str,
    snr_list_db,
    n_eval: int,
    seed: int,
    p_t: float | None = None,
    precoder: str | None = None,
    bits=None,
    weights: GnnWeights | None = None,
    q: ScalarQuantizer | None = None,
):
    """Mean/std of the sum rate over a channel set, one row per SNR point."""
    p_t = float(ds.m) if p_t is None else p_t
    if weights is None and q is None and _parse_bits(bits) is not None:
        q = lloyd_max(_parse_bits(bits))
    rows = []
    per_channel = np.empty((len(snr_list_db), len(ds)))
    for i in range(len(ds)):
        h = ds.channels[i]
        s = rng.complex_normal(rng.stream(seed, "eval-sym", i), (n_eval, ds.k))
        if weights is not None:
            y = infer_batch(h, s, weights, weights.config, q)
            y = y * np.sqrt(p_t * n_eval / np.sum(np.abs(y) ** 2))
        else:
            y = linear_quantized_tx(h, precoder, q, s, p_t, bypass=q is None)
        est = metrics.estimate_bussgang(s, y)
        for j, snr in enumerate(snr_list_db):
            per_channel[j, i] = metrics.sum_rate(h, est, sigma_v2_of(snr, p_t))
    for j, snr in enumerate(snr_list_db):
        vals = per_channel[j]
        std = float(np.std(vals, ddof=1)) if len(ds) > 1 else 0.0
        rows.append((series, snr, float(np.mean(vals)), std, len(ds)))
    return rows


def nmse_over_set(
    ds: ChannelDataset,
    n_eval: int,
    seed: int,
    p_t: float | None = None,
    precoder: str | None = None,
    bits=None,
    weights: GnnWeights | None = None,
    q: ScalarQuantizer | None = None,
) -> float:
    """Pooled noiseless NMSE (dB) over channels, per-channel scalar equalizers."""
    p_t = float(ds.m) if p_t is None else p_t
    if weights is None and q is None and _parse_bits(bits) is not None:
        q = lloyd_max(_parse_bits(bits))
    num = np.zeros(ds.k)
    den = np.zeros(ds.k)
    for i in range(len(ds)):
        h = ds.channels[i]
        s = rng.complex_normal(rng.stream(seed, "eval-sym", i), (n_eval, ds.k))
        if weights is not None:
            y = infer_batch(h, s, weights, weights.config, q)
            y = y * np.sqrt(p_t * n_eval / np.sum(np.abs(y) ** 2))
        else:
            y = linear_quantized_tx(h, precoder, q, s, p_t, bypass=q is None)
        r = h.T @ y
        s_hat, _ = metrics.equalize(s, r)
        sm = s.T
        num += np.sum(np.abs(sm - s_hat) ** 2, axis=1)
        den += np.sum(np.abs(sm) ** 2, axis=1)
    val = float(np.mean(num / den))
    if val <= 10.0 ** (metrics.NMSE_FLOOR_DB / 10.0):
        return metrics.NMSE_FLOOR_DB
    return float(10.0 * np.log10(val))


def radiation_run(
    m: int,
    user_angles_deg,
    n_sym: int,
    seed: int,
    grid_step_deg: float = 0.5,
    p_t: float | None = None,
    precoder: str | None = None,
    bits=None,
    weights: GnnWeights | None = None,
    q: ScalarQuantizer | None = None,
):
    """Per-angle intended/distortion/SDR rows for one LOS channel realization."""
    p_t = float(m) if p_t is None else p_t
    if weights is None and q is None and _parse_bits(bits) is not None:
        q = lloyd_max(_parse_bits(bits))
    h = gen_los_ula(m, user_angles_deg)
    k = h.k
    s = rng.complex_normal(rng.stream(seed, "rad-sym"), (n_sym, k))
    if weights is not None:
        y = infer_batch(h, s, weights, weights.config, q)
        y = y * np.sqrt(p_t * n_sym / np.sum(np.abs(y) ** 2))
    else:
        y = linear_quantized_tx(h, precoder, q, s, p_t, bypass=q is None)
    est = metrics.estimate_bussgang(s, y)
    grid = np.arange(0.0, 180.0 + grid_step_deg / 2, grid_step_deg)
    pat = metrics.radiation_pattern(est, grid)
    rows = [
        (a, pl, pd, ps)
        for a, pl, pd, ps in zip(grid, pat["p_lin_db"], pat["p_dist_db"], pat["p_sdr_db"])
    ]
    return rows


def scatter_run(
    h,
    n_sym: int,
    seed: int,
    p_t: float,
    precoder: str | None = None,
    bits=None,
    weights: GnnWeights | None = None,
    q: ScalarQuantizer | None = None,
):
    """(s, s_hat) pairs on one noiseless channel, for constellation plots."""
    if weights is None and q is None and _parse_bits(bits) is not None:
        q = lloyd_max(_parse_bits(bits))
    k = h.shape[1]
    s = rng.complex_normal(rng.stream(seed, "scatter-sym"), (n_sym, k))
    if weights is not None:
        y = infer_batch(h, s, weights, weights.config, q)
        y = y * np.sqrt(p_t * n_sym / np.sum(np.abs(y) ** 2))
    else:
        y = linear_quantized_tx(h, precoder, q, s, p_t, bypass=q is None)
    s_hat, _ = metrics.equalize(s, h.T @ y)
    rows = []
    for n in range(n_sym):
        for kk in range(k):
            rows.append((s[n, kk].real, s[n, kk].imag, s_hat[kk, n].real, s_hat[kk, n].imag))
    return rows


def load_checkpoint_weights(path, dtype=np.float32):
    weights, q, meta, _ = trainer.load_checkpoint(path, dtype=dtype)
    return weights, q, meta


def load_channels(path, expect_m=None, expect_k=None) -> ChannelDataset:
    return load_dataset(path, expect_m=expect_m, expect_k=expect_k)
