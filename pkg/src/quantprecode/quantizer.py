"""Lloyd-Max scalar quantizers for a standard-normal source.

The real line is split into L = 2**b cells (tau_i, tau_{i+1}] with
tau_0 = -inf and tau_L = +inf; cell i reproduces as level l_i.  Design
iterates the two optimality conditions -- thresholds at level midpoints,
levels at cell conditional means -- with the conditional means evaluated in
closed form through Gaussian partial moments, so tolerances down to 1e-10
converge quickly and deterministically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import rng

_SQRT_2PI = np.sqrt(2.0 * np.pi)


def _phi(x: np.ndarray) -> np.ndarray:
    """Standard normal pdf, with phi(+-inf) = 0."""
    out = np.zeros_like(x, dtype=float)
    finite = np.isfinite(x)
    out[finite] = np.exp(-0.5 * x[finite] ** 2) / _SQRT_2PI
    return out


class LloydMaxError(Exception):
    """Design failed to converge; carries the best iterate found."""

    def __init__(self, message: str, best: "ScalarQuantizer"):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class ScalarQuantizer:
    """Levels and thresholds of one real-dimension DAC."""

    bits: int
    levels: np.ndarray        # (L,) strictly increasing
    thresholds: np.ndarray    # (L+1,) strictly increasing, endpoints +-inf

    def __post_init__(self):
        lev = np.asarray(self.levels, dtype=float)
        thr = np.asarray(self.thresholds, dtype=float)
        b = int(self.bits)
        if b < 1:
            raise ValueError(f"bits must be >= 1, got {b}")
        L = 2**b
        if lev.shape != (L,):
            raise ValueError(f"need {L} levels for b={b}, got shape {lev.shape}")
        if thr.shape != (L + 1,):
            raise ValueError(f"need {L + 1} thresholds for b={b}, got shape {thr.shape}")
        if not (np.isneginf(thr[0]) and np.isposinf(thr[-1])):
            raise ValueError("outer thresholds must be -inf and +inf")
        if np.any(np.diff(lev) <= 0) or np.any(np.diff(thr) <= 0):
            raise ValueError("levels and thresholds must be strictly increasing")
        if np.any(lev < thr[:-1]) or np.any(lev > thr[1:]):
            raise ValueError("each level must lie in the closure of its cell")
        object.__setattr__(self, "levels", lev)
        object.__setattr__(self, "thresholds", thr)

    @property
    def n_levels(self) -> int:
        return self.levels.size

    def cell_index(self, x):
        """Index i with x in (tau_i, tau_{i+1}]; boundaries go to the lower cell."""
        x = np.asarray(x, dtype=float)
        if np.any(np.isnan(x)):
            raise ValueError("cannot quantize NaN input")
        # number of interior thresholds strictly below x
        return np.searchsorted(self.thresholds[1:-1], x, side="left")

    def quantize(self, x):
        """Map reals onto levels."""
        return self.levels[self.cell_index(x)]

    def msqe(self) -> float:
        """E[(x - Q(x))^2] for x ~ N(0,1), by exact per-cell integration."""
        a = self.thresholds[:-1]
        b = self.thresholds[1:]
        m0 = ndtr(b) - ndtr(a)
        m1 = _phi(a) - _phi(b)
        a_safe = np.where(np.isfinite(a), a, 0.0)
        b_safe = np.where(np.isfinite(b), b, 0.0)
        m2 = m0 + a_safe * _phi(a) - b_safe * _phi(b)
        return float(np.sum(m2 - 2.0 * self.levels * m1 + self.levels**2 * m0))


def _conditional_means(thr: np.ndarray) -> np.ndarray:
    """E[x | x in cell] under N(0,1) for cells delimited by thr (with +-inf ends)."""
    a = thr[:-1]
    b = thr[1:]
    m0 = ndtr(b) - ndtr(a)
    m1 = _phi(a) - _phi(b)
    if np.any(m0 <= 0.0):
        raise FloatingPointError("empty quantizer cell during design")
    return m1 / m0


def _fixed_point(levels0: np.ndarray, tol: float, max_iter: int):
    lev = levels0.copy()
    for it in range(max_iter):
        thr = np.concatenate(([-np.inf], 0.5 * (lev[:-1] + lev[1:]), [np.inf]))
        new = _conditional_means(thr)
        delta = float(np.max(np.abs(new - lev)))
        lev = new
        if delta < tol:
            return lev, True, it + 1
    return lev, False, max_iter


def lloyd_max(
    b: int,
    n_init: int = 16,
    tol: float = 1e-10,
    seed: int = 0,
    max_iter: int = 10_000,
) -> ScalarQuantizer:
    """Best-of-n_init Lloyd-Max quantizer for a standard normal source.

    Starts are sorted N(0,1) samples (plus one quantile start).  The design
    is a hill climb, so several starts guard against local optima.
    """
    if not 1 <= b <= 8:
        raise ValueError(f"bits must be in 1..8, got {b}")
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    L = 2**b
    g = rng.stream(seed, "lloyd-init", b)
    starts = [np.array([-2.0 * (L - 1) / L + 4.0 * (i + 0.5) / L for i in range(L)])]
    for _ in range(n_init - 1):
        starts.append(np.sort(g.standard_normal(L)))

    best: ScalarQuantizer | None = None
    best_mse = np.inf
    any_converged = False
    for lev0 in starts:
        if np.any(np.diff(np.sort(lev0)) <= 0):
            continue
        try:
            lev, converged, _ = _fixed_point(np.sort(lev0), tol, max_iter)
        except FloatingPointError:
            continue
        # the optimum for an even density is odd-symmetric; imposing that
        # exactly removes the iteration residue (and zeroes the middle
        # threshold, so the sign boundary behaves per the cell convention)
        lev = 0.5 * (lev - lev[::-1])
        thr = np.concatenate(([-np.inf], 0.5 * (lev[:-1] + lev[1:]), [np.inf]))
        q = ScalarQuantizer(b, lev, thr)
        mse = q.msqe()
        if mse < best_mse:
            best, best_mse = q, mse
        any_converged = any_converged or converged
    if best is None:
        raise LloydMaxError("all initializations failed", best=None)
    if not any_converged:
        raise LloydMaxError(
            f"no start converged within {max_iter} iterations (tol={tol})", best
        )
    return best


def quantize_complex_vec(x: np.ndarray, q: ScalarQuantizer, rho: np.ndarray) -> np.ndarray:
    """Per-antenna complex DAC: scale down by sqrt(rho), quantize each real
    dimension independently, scale back up.

    rho_m is the per-real-dimension input variance to normalize away; the
    quantizer then sees (approximately) N(0,1) in each dimension.
    """
    x = np.asarray(x, dtype=np.complex128)
    rho = np.asarray(rho, dtype=float)
    if rho.shape != x.shape[:1]:
        raise ValueError(f"rho shape {rho.shape} does not match x shape {x.shape}")
    if np.any(~np.isfinite(rho)) or np.any(rho <= 0.0):
        raise ValueError("normalization powers rho must be positive and finite")
    if np.any(np.isnan(x)):
        raise ValueError("cannot quantize NaN input")
    root = np.sqrt(rho)
    scale = root if x.ndim == 1 else root[:, None]
    return scale * (q.quantize(x.real / scale) + 1j * q.quantize(x.imag / scale))


def save_quantizer(path, q: ScalarQuantizer) -> None:
    """Plain-text JSON dump with 17 significant digits."""
    payload = {
        "b": q.bits,
        "levels": [float(f"{v:.17g}") for v in q.levels],
        "thresholds": [float(f"{v:.17g}") for v in q.thresholds],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_quantizer(path) -> ScalarQuantizer:
    with open(path) as fh:
        payload = json.load(fh)
    return ScalarQuantizer(
        int(payload["b"]),
        np.asarray(payload["levels"], dtype=float),
        np.asarray(payload["thresholds"], dtype=float),
    )
