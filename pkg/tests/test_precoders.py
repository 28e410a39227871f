import numpy as np
import pytest

from quantprecode import metrics, precoders, rng
from quantprecode.channel import gen_symbols
from quantprecode.precoders import PrecoderError, linear_quantized_tx, mrt, zf
from quantprecode.quantizer import lloyd_max


def rand_channel(m, k, seed):
    return rng.complex_normal(rng.stream(seed, "test-h"), (m, k))


def test_mrt_unit_alpha():
    h = np.array([[1.0], [1.0]], dtype=complex)
    w = mrt(h, 2.0)
    assert np.allclose(w.w, h, atol=1e-12)


def test_mrt_conjugates():
    h = np.array([[1j], [0.0]], dtype=complex)
    w = mrt(h, 1.0)
    assert np.allclose(w.w, [[-1j], [0.0]], atol=1e-12)


def test_mrt_power_identity():
    h = rand_channel(16, 3, 2)
    w = mrt(h, 5.0)
    assert np.trace(w.w @ w.w.conj().T).real == pytest.approx(5.0, abs=1e-9)


def test_mrt_rejects_zero_channel():
    with pytest.raises(PrecoderError):
        mrt(np.zeros((4, 2), dtype=complex), 1.0)


def test_mrt_single_user_phase_alignment():
    h = rand_channel(8, 1, 3)
    w = mrt(h, 4.0)
    val = (h.T @ w.w)[0, 0]
    alpha = np.sqrt(4.0 / np.sum(np.abs(h) ** 2))
    assert val == pytest.approx(alpha * np.sum(np.abs(h) ** 2), abs=1e-9)


def test_zf_identity_channel():
    w = zf(np.eye(2, dtype=complex), 2.0)
    assert np.allclose(w.w, np.eye(2), atol=1e-12)


def test_zf_interference_free():
    h = rand_channel(8, 3, 5)
    w = zf(h, 3.0)
    t = h.T @ w.w
    alpha = t[0, 0]
    assert np.linalg.norm(t - alpha * np.eye(3)) < 1e-9
    assert np.trace(w.w @ w.w.conj().T).real == pytest.approx(3.0, abs=1e-9)


def test_zf_infeasible_when_more_users_than_antennas():
    with pytest.raises(PrecoderError):
        zf(rand_channel(2, 3, 1), 1.0)


def test_zf_condition_cap():
    h = rand_channel(8, 2, 7)
    h[:, 1] = h[:, 0]  # rank-deficient Gram
    with pytest.raises(PrecoderError, match="condition"):
        zf(h, 1.0)


def test_tx_bypass_is_exact_linear():
    h = rand_channel(4, 2, 9)
    s = gen_symbols(2, 50, seed=1)
    y = linear_quantized_tx(h, "zf", None, s, 4.0, bypass=True)
    w = zf(h, 4.0)
    assert np.allclose(y, w.w @ s.symbols.T, atol=1e-12)


def test_tx_hand_example_single_symbol():
    # H = [1, 1]^T, s = 1, P_T = 2: x = [1, 1], per-dimension power 1/2,
    # normalized real part sqrt(2) -> upper level, imaginary 0 -> lower level,
    # then scaled back by sqrt(1/2): y_m = (1 - 1j) / sqrt(pi)
    h = np.array([[1.0], [1.0]], dtype=complex)
    q = lloyd_max(1)
    y = linear_quantized_tx(h, "mrt", q, np.array([[1.0 + 0.0j]]), 2.0)
    want = (1.0 - 1.0j) / np.sqrt(np.pi)
    assert np.allclose(y, np.full((2, 1), want), atol=1e-9)


def test_tx_normalized_input_unit_variance_per_dimension():
    h = rand_channel(8, 2, 11)
    w = zf(h, 8.0)
    s = gen_symbols(2, 10_000, seed=4)
    x = w.w @ s.symbols.T
    rho = precoders.dac_row_powers(w)
    xn = x / np.sqrt(rho)[:, None]
    # seeded draw; the sample-variance fluctuation at 10k symbols is ~1.4%
    assert np.max(np.abs(np.var(xn.real, axis=1) - 1.0)) < 0.02
    assert np.max(np.abs(np.var(xn.imag, axis=1) - 1.0)) < 0.02


def test_bussgang_orthogonality_of_distortion():
    # residual after removing the per-antenna linear gain is uncorrelated
    # with the DAC input
    h = rand_channel(4, 1, 13)
    q = lloyd_max(1)
    s = gen_symbols(1, 200_000, seed=6)
    w = mrt(h, 4.0)
    x = w.w @ s.symbols.T
    y = linear_quantized_tx(h, "mrt", q, s, 4.0)
    alpha, _ = metrics.per_antenna_bussgang(x, y)
    qres = y - alpha[:, None] * x
    for m in range(4):
        corr = np.mean(x[m] * qres[m].conj()) / np.sqrt(
            np.mean(np.abs(x[m]) ** 2) * np.mean(np.abs(qres[m]) ** 2)
        )
        assert abs(corr) < 0.01


def test_unknown_precoder_name():
    with pytest.raises(ValueError):
        linear_quantized_tx(rand_channel(2, 1, 1), "mmse", None, gen_symbols(1, 10, 0), 1.0)
