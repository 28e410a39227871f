"""Empirical Bussgang decomposition and the rate / NMSE / radiation metrics.

The decomposition is taken with respect to the transmit symbols: the antenna
outputs split as y = G s + q with G the linear gain toward the symbols and q
the residual distortion, uncorrelated with s on the estimation batch.  G is
fit by least squares, G = (Y S^H)(S S^H)^{-1}; using the inverse sample
symbol covariance (instead of assuming it is the identity) matters, because
the sampling error of S S^H / N is beamformed exactly like the signal and
would otherwise masquerade as distortion of order |h^T g|^2 / N.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import SymbolBatch, los_steering

NMSE_FLOOR_DB = -300.0


class MetricsError(Exception):
    pass


@dataclass(frozen=True)
class BussgangEstimate:
    """Linear gain G (M x K), distortion covariance C_q (M x M), sample count."""

    g: np.ndarray
    c_q: np.ndarray
    n_samples: int

    def __post_init__(self):
        g = np.asarray(self.g, dtype=np.complex128)
        c = np.asarray(self.c_q, dtype=np.complex128)
        if g.ndim != 2 or c.shape != (g.shape[0], g.shape[0]):
            raise ValueError(f"inconsistent shapes G {g.shape}, C_q {c.shape}")
        herm = np.max(np.abs(c - c.conj().T)) if c.size else 0.0
        if herm > 1e-10 * max(1.0, float(np.abs(np.trace(c)))):
            raise ValueError(f"C_q not Hermitian, asymmetry {herm:.3e}")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "c_q", c)


@dataclass(frozen=True)
class EvalReport:
    """Per-user SNIDR (linear), the sum rate they imply, and optional NMSE."""

    snidr_per_user: np.ndarray
    r_sum: float
    snr_db: float
    nmse_db: float | None = None


def _sym_matrix(s) -> np.ndarray:
    """Symbols as a K x N_s matrix (one column per channel use)."""
    sym = s.symbols if isinstance(s, SymbolBatch) else np.asarray(s, dtype=np.complex128)
    if sym.ndim == 1:
        sym = sym[None, :]
        return sym
    return sym.T


def estimate_bussgang(s, y: np.ndarray) -> BussgangEstimate:
    """Least-squares Bussgang fit of the outputs y (M x N_s) onto the symbols."""
    sm = _sym_matrix(s)
    y = np.asarray(y, dtype=np.complex128)
    k, n_s = sm.shape
    if y.ndim != 2 or y.shape[1] != n_s:
        raise ValueError(f"outputs shape {y.shape} does not match {n_s} symbols")
    if n_s < k + 1:
        raise ValueError(f"need N_s >= K+1 samples, got N_s={n_s}, K={k}")
    css = (sm @ sm.conj().T) / n_s
    g = np.linalg.solve(css.conj().T, (y @ sm.conj().T).conj().T / n_s).conj().T
    q = y - g @ sm
    c_q = (q @ q.conj().T) / n_s
    c_q = 0.5 * (c_q + c_q.conj().T)
    return BussgangEstimate(g, c_q, n_s)


def per_antenna_bussgang(x: np.ndarray, y: np.ndarray, check_tol: float = 0.05):
    """Per-antenna linear gain alpha_m and quantization NMSQE beta_m.

    beta_m is the direct sample estimate E|x_m - y_m|^2 / E|x_m|^2 and
    alpha_m = 1 - beta_m, so the pair satisfies the gain/error identity
    exactly.  The independent correlation estimate E[y x*]/E|x|^2 must agree
    with alpha within check_tol (estimation tolerance); pass None to skip.
    """
    x = np.asarray(x, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    if x.shape != y.shape or x.ndim != 2:
        raise ValueError(f"need matching M x N arrays, got {x.shape} and {y.shape}")
    px = np.mean(np.abs(x) ** 2, axis=1)
    if np.any(px == 0.0):
        raise MetricsError("zero-power antenna stream")
    beta = np.mean(np.abs(x - y) ** 2, axis=1) / px
    alpha = 1.0 - beta
    if check_tol is not None:
        alpha_corr = np.real(np.mean(y * x.conj(), axis=1)) / px
        worst = float(np.max(np.abs(alpha - alpha_corr)))
        if worst > check_tol:
            raise MetricsError(
                f"gain/error identity violated: |alpha - E[yx*]/E|x|^2| = {worst:.4f}"
            )
    return alpha, beta


def snidr(h, est: BussgangEstimate, sigma_v2: float) -> np.ndarray:
    """Per-user signal to noise, interference and distortion ratio."""
    hm = h.entries if hasattr(h, "entries") else np.asarray(h, dtype=np.complex128)
    if sigma_v2 <= 0.0:
        raise ValueError(f"noise variance must be positive, got {sigma_v2}")
    m, k = hm.shape
    if est.g.shape != (m, k):
        raise ValueError(f"estimate G shape {est.g.shape} does not match channel {hm.shape}")
    t = hm.T @ est.g  # t[k, k'] = h_k^T g_k'
    sig = np.abs(np.diag(t)) ** 2
    interf = np.sum(np.abs(t) ** 2, axis=1) - sig
    dist = np.einsum("mk,mn,nk->k", hm, est.c_q, hm.conj()).real
    return sig / (interf + dist + sigma_v2)


def sum_rate(h, est: BussgangEstimate, sigma_v2: float) -> float:
    """Achievable sum rate sum_k log2(1 + SNIDR_k) in bits per channel use."""
    return float(np.sum(np.log2(1.0 + snidr(h, est, sigma_v2))))


def equalize(s, r: np.ndarray):
    """Per-user scalar equalizer g_k fitted on the batch; returns (s_hat, g)."""
    sm = _sym_matrix(s)
    r = np.asarray(r, dtype=np.complex128)
    if r.shape != sm.shape:
        raise ValueError(f"received shape {r.shape} does not match symbols {sm.shape}")
    den = np.sum(np.abs(sm) ** 2, axis=1)
    g = np.sum(r * sm.conj(), axis=1) / den
    if np.any(~np.isfinite(g)) or np.any(np.abs(g) < 1e-15):
        raise MetricsError("degenerate link: per-user equalizer gain is (near) zero")
    return r / g[:, None], g


def nmse(s, r: np.ndarray) -> float:
    """Normalized MSE in dB between symbols and equalized noiseless receives.

    Per user the error and signal energies are pooled over the batch; the
    per-user ratios are then averaged and floored at -300 dB.
    """
    sm = _sym_matrix(s)
    s_hat, _ = equalize(s, r)
    num = np.sum(np.abs(sm - s_hat) ** 2, axis=1)
    den = np.sum(np.abs(sm) ** 2, axis=1)
    val = float(np.mean(num / den))
    if val <= 10.0 ** (NMSE_FLOOR_DB / 10.0):
        return NMSE_FLOOR_DB
    return 10.0 * np.log10(val)


def radiation_pattern(est: BussgangEstimate, grid_deg: np.ndarray) -> dict:
    """Intended-signal, distortion, and SDR patterns over a LOS angle grid.

    Values are returned both linear and in dB; a zero distortion power maps
    to an infinite SDR sentinel.
    """
    grid = np.asarray(grid_deg, dtype=float)
    m = est.g.shape[0]
    a = los_steering(m, grid)  # (M, n_angles)
    gg = est.g @ est.g.conj().T
    p_lin = np.einsum("ma,mn,na->a", a, gg, a.conj()).real
    p_dist = np.einsum("ma,mn,na->a", a, est.c_q, a.conj()).real
    p_lin = np.maximum(p_lin, 0.0)
    p_dist = np.maximum(p_dist, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        p_sdr = np.where(p_dist > 0.0, p_lin / p_dist, np.inf)
        out = {
            "angle_deg": grid,
            "p_lin": p_lin,
            "p_dist": p_dist,
            "p_sdr": p_sdr,
            "p_lin_db": 10.0 * np.log10(p_lin),
            "p_dist_db": 10.0 * np.log10(p_dist),
            "p_sdr_db": 10.0 * np.log10(p_sdr),
        }
    return out


def eval_report(h, s, y: np.ndarray, sigma_v2: float, snr_db: float, with_nmse: bool = False) -> EvalReport:
    """Bundle SNIDR, sum rate and (optionally) noiseless NMSE for one channel."""
    hm = h.entries if hasattr(h, "entries") else np.asarray(h, dtype=np.complex128)
    est = estimate_bussgang(s, y)
    ratios = snidr(hm, est, sigma_v2)
    r_sum = float(np.sum(np.log2(1.0 + ratios)))
    nm = nmse(s, hm.T @ y) if with_nmse else None
    return EvalReport(ratios, r_sum, snr_db, nm)
