"""FLOP accounting for the precoder network and DAC / processing power models.

FLOP counts charge one multiplication per scalar product term and one
addition per accumulation, per graph instance, layer by layer.  The output
layer computes only the antenna-node path (edge update, antenna messages,
antenna update); activations and softmaxes are not counted.

The DAC model is a current-steering architecture: a static term growing as
2**b - 1 and a dynamic term linear in both the bit width and the sampling
rate.  Baseband DACs sample at four times the bandwidth; RF DACs synthesize
the carrier directly in the n-th Nyquist zone, so their rate is tied to the
carrier frequency instead.  Network processing power divides the per-symbol
FLOP count times the symbol rate by the accelerator efficiency.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class FlopReport:
    mul: int
    add: int
    breakdown: dict = field(default_factory=dict)  # per layer class {mul, add}

    @property
    def total(self) -> int:
        return self.mul + self.add


@dataclass(frozen=True)
class PowerModel:
    v_dd: float = 3.0          # volts
    i_0: float = 10e-6         # amps, LSB current source
    c_p: float = 1e-12         # farads, per-transistor parasitic
    eta: float = 646.6e12      # accelerator efficiency, FLOPs/s/W
    alpha_rol: float = 0.1     # pulse roll-off factor

    def __post_init__(self):
        for name in ("v_dd", "i_0", "c_p", "eta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def gnn_flops(m: int, k: int, d_h: int, n_h: int, b: int) -> FlopReport:
    """Closed-form real-FLOP count of one forward pass of the precoder network."""
    if min(m, k, d_h, n_h, b) < 1:
        raise ValueError("all of m, k, d_h, n_h, b must be >= 1")
    two_b = 2**b

    in_mul = 6 * m * k * d_h + k * d_h + m * d_h + 2 * m * d_h + m * d_h**2 + 2 * k * d_h + k * d_h**2
    in_add = (
        5 * m * k * d_h
        + k * (m - 1) * d_h
        + m * (k - 1) * d_h
        + m * d_h
        + m * d_h**2
        + k * d_h
        + k * d_h**2
    )

    h_mul = 3 * m * k * d_h**2 + k * d_h + m * d_h + 2 * m * d_h**2 + 2 * k * d_h**2
    h_add = (
        (3 * m * k * d_h**2 - m * k * d_h)
        + k * (m - 1) * d_h
        + m * (k - 1) * d_h
        + (2 * m * d_h**2 - m * d_h)
        + (2 * k * d_h**2 - k * d_h)
    )

    out_mul = 6 * m * k * d_h * two_b + 2 * m * two_b + 4 * m * two_b**2 + 2 * m * d_h * two_b
    out_add = (
        (6 * m * k * d_h * two_b - 2 * m * k * two_b)
        + 2 * m * (k - 1) * two_b
        + (4 * m * two_b**2 + 2 * m * d_h * two_b - 2 * m * two_b)
    )

    breakdown = {
        "input": {"mul": in_mul, "add": in_add},
        "hidden": {"mul": n_h * h_mul, "add": n_h * h_add},
        "output": {"mul": out_mul, "add": out_add},
    }
    return FlopReport(in_mul + n_h * h_mul + out_mul, in_add + n_h * h_add + out_add, breakdown)


def dac_power(b: int, f_s: float, model: PowerModel = PowerModel()) -> float:
    """Watts drawn by one DAC at bit width b and sampling rate f_s."""
    if b < 1:
        raise ValueError(f"bit width must be >= 1, got {b}")
    if f_s <= 0:
        raise ValueError(f"sampling rate must be positive, got {f_s}")
    static = 0.5 * model.v_dd * model.i_0 * (2**b - 1)
    dynamic = b * model.c_p * (f_s / 2.0) * model.v_dd**2
    return static + dynamic


def dacs_total_power(m: int, b: int, f_s: float, model: PowerModel = PowerModel()) -> float:
    """All 2M DACs of the array (I and Q per antenna)."""
    return 2 * m * dac_power(b, f_s, model)


def sampling_rate(mode: str, bandwidth: float | None = None, f_c: float | None = None, n_zone: int = 2) -> float:
    """Sampling rate rule per converter type.

    baseband: f_s = 4 B (oversampling factor four);
    rfdac:    f_s = 4 f_c / (2 n - 1), the n-th Nyquist zone (must satisfy f_s >= B).
    """
    if mode == "baseband":
        if bandwidth is None or bandwidth <= 0:
            raise ValueError("baseband mode needs a positive bandwidth")
        return 4.0 * bandwidth
    if mode == "rfdac":
        if f_c is None or f_c <= 0:
            raise ValueError("rfdac mode needs a positive carrier frequency")
        if n_zone < 1:
            raise ValueError("Nyquist zone index must be >= 1")
        f_s = 4.0 * f_c / (2 * n_zone - 1)
        if bandwidth is not None and f_s < bandwidth:
            raise ValueError(
                f"rf-dac rate {f_s:.3e} Hz below the signal bandwidth {bandwidth:.3e} Hz"
            )
        return f_s
    raise ValueError(f"unknown sampling mode {mode!r} (want 'baseband' or 'rfdac')")


def symbol_rate(bandwidth: float, model: PowerModel = PowerModel()) -> float:
    return bandwidth / (1.0 + model.alpha_rol)


def gnn_power(bandwidth: float, flops: FlopReport, model: PowerModel = PowerModel()):
    """(watts, required accelerator FLOPs/s) to precode every symbol at rate B/(1+roll-off)."""
    if bandwidth < 0:
        raise ValueError("bandwidth must be nonnegative")
    rate = symbol_rate(bandwidth, model) * flops.total
    return rate / model.eta, rate
