"""MRT and ZF linear precoding plus the quantized linear transmit chain.

Both precoders are scaled so the total transmit power Tr(W W^H) equals the
budget P_T exactly.  The quantized chain normalizes each antenna's DAC input
to unit variance per real dimension: the precoded sample x_m = w_m^T s is
CN(0, ||w_m||^2), so each real dimension carries power ||w_m||^2 / 2, and
that is the per-dimension factor handed to the DAC model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .channel import ChannelMatrix, SymbolBatch
from .quantizer import ScalarQuantizer, quantize_complex_vec

ZF_CONDITION_CAP = 1e10


class PrecoderError(Exception):
    pass


@dataclass(frozen=True)
class PrecodingMatrix:
    """M x K precoder scaled to total power p_t."""

    w: np.ndarray
    p_t: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.complex128)
        if w.ndim != 2:
            raise ValueError(f"precoder must be M x K, got shape {w.shape}")
        power = float(np.trace(w @ w.conj().T).real)
        if abs(power - self.p_t) > 1e-9 * max(1.0, self.p_t):
            raise ValueError(f"Tr(W W^H) = {power} but P_T = {self.p_t}")
        object.__setattr__(self, "w", w)

    @property
    def row_powers(self) -> np.ndarray:
        """||w_m||^2 per antenna; the complex power of antenna m's DAC input."""
        return np.sum(np.abs(self.w) ** 2, axis=1)


def _as_matrix(h) -> np.ndarray:
    if isinstance(h, ChannelMatrix):
        return h.entries
    return np.asarray(h, dtype=np.complex128)


def mrt(h, p_t: float) -> PrecodingMatrix:
    """Maximum ratio transmission: W proportional to H*."""
    hm = _as_matrix(h)
    norm2 = float(np.sum(np.abs(hm) ** 2))
    if norm2 == 0.0:
        raise PrecoderError("MRT undefined for an all-zero channel")
    w = hm.conj() * np.sqrt(p_t / norm2)
    return PrecodingMatrix(w, p_t)


def zf(h, p_t: float) -> PrecodingMatrix:
    """Zero forcing: W proportional to H* (H^T H*)^{-1}, via a Cholesky solve."""
    hm = _as_matrix(h)
    m, k = hm.shape
    if k > m:
        raise PrecoderError(f"ZF infeasible for K={k} > M={m}")
    gram = hm.T @ hm.conj()
    cond = float(np.linalg.cond(gram))
    if not np.isfinite(cond) or cond > ZF_CONDITION_CAP:
        raise PrecoderError(
            f"channel Gram matrix condition number {cond:.3e} exceeds cap {ZF_CONDITION_CAP:.0e}"
        )
    try:
        cf = cho_factor(gram)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - cond cap fires first
        raise PrecoderError(f"singular Gram matrix: {exc}") from exc
    w0 = cho_solve(cf, hm.T).conj().T  # H* (H^T H*)^{-1}
    norm2 = float(np.trace(w0 @ w0.conj().T).real)
    w = w0 * np.sqrt(p_t / norm2)
    return PrecodingMatrix(w, p_t)


def make_precoder(name: str, h, p_t: float) -> PrecodingMatrix:
    if name == "mrt":
        return mrt(h, p_t)
    if name == "zf":
        return zf(h, p_t)
    raise ValueError(f"unknown precoder {name!r} (want 'mrt' or 'zf')")


def dac_row_powers(w: PrecodingMatrix) -> np.ndarray:
    """Per-real-dimension normalization powers for the DAC stage."""
    return w.row_powers / 2.0


def linear_quantized_tx(
    h,
    precoder: str,
    q: ScalarQuantizer | None,
    s: SymbolBatch | np.ndarray,
    p_t: float,
    bypass: bool = False,
) -> np.ndarray:
    """Full linear chain of the quantized transmitter.

    Returns the M x N_s antenna outputs: x = W s per symbol, then each
    antenna's DAC quantizes real and imaginary parts independently after
    per-dimension power normalization.  ``bypass=True`` (or q=None) skips
    the DACs and models infinite resolution.
    """
    w = make_precoder(precoder, h, p_t)
    sym = s.symbols if isinstance(s, SymbolBatch) else np.asarray(s, dtype=np.complex128)
    if sym.ndim == 1:
        sym = sym[None, :]
    if sym.shape[1] != w.w.shape[1]:
        raise ValueError(f"symbols have K={sym.shape[1]} but precoder has K={w.w.shape[1]}")
    x = w.w @ sym.T  # (M, N_s)
    if bypass or q is None:
        return x
    return quantize_complex_vec(x, q, dac_row_powers(w))
