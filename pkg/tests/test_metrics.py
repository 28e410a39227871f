import numpy as np
import pytest

from quantprecode import metrics, rng
from quantprecode.channel import gen_los_ula, gen_symbols
from quantprecode.metrics import (
    MetricsError,
    estimate_bussgang,
    nmse,
    per_antenna_bussgang,
    radiation_pattern,
    snidr,
    sum_rate,
)
from quantprecode.precoders import linear_quantized_tx, mrt
from quantprecode.quantizer import lloyd_max


def test_scalar_linear_map_recovered_exactly():
    s = gen_symbols(1, 500, seed=1)
    y = 2.0 * s.symbols.T
    est = estimate_bussgang(s, y)
    assert est.g[0, 0] == pytest.approx(2.0, abs=1e-12)
    assert abs(est.c_q[0, 0]) < 1e-24


def test_linear_system_recovered_exactly():
    w = rng.complex_normal(rng.stream(2, "w"), (4, 2))
    s = gen_symbols(2, 300, seed=3)
    est = estimate_bussgang(s, w @ s.symbols.T)
    assert np.max(np.abs(est.g - w)) < 1e-10
    assert np.max(np.abs(est.c_q)) < 1e-20


def test_one_bit_gain_matches_arcsine_scaling():
    # 1-bit DACs on Gaussian input: linear gain (1 - beta) W with beta = 1 - 2/pi
    h = rng.complex_normal(rng.stream(5, "h"), (32, 1))
    q = lloyd_max(1)
    s = gen_symbols(1, 100_000, seed=7)
    y = linear_quantized_tx(h, "mrt", q, s, 32.0)
    w = mrt(h, 32.0)
    est = estimate_bussgang(s, y)
    expect = (2.0 / np.pi) * w.w
    assert np.max(np.abs(est.g - expect)) / np.max(np.abs(expect)) < 0.02


def test_batch_size_guard():
    s = gen_symbols(3, 3, seed=0)
    with pytest.raises(ValueError):
        estimate_bussgang(s, np.zeros((2, 3), dtype=complex))


def test_per_antenna_identity_map():
    x = rng.complex_normal(rng.stream(1, "x"), (3, 1000))
    alpha, beta = per_antenna_bussgang(x, x)
    assert np.allclose(alpha, 1.0, atol=1e-12)
    assert np.allclose(beta, 0.0, atol=1e-12)


def test_per_antenna_one_bit_nmsqe():
    q = lloyd_max(1)
    g = rng.stream(3, "g")
    x = (g.standard_normal((2, 200_000)) + 1j * g.standard_normal((2, 200_000))) / np.sqrt(2)
    rho = np.array([0.5, 0.5])  # unit variance per real dimension
    root = np.sqrt(rho)[:, None]
    y = root * (q.quantize(x.real / root) + 1j * q.quantize(x.imag / root))
    alpha, beta = per_antenna_bussgang(x, y)
    assert np.allclose(beta, 1.0 - 2.0 / np.pi, rtol=0.02)
    assert np.max(np.abs(alpha + beta - 1.0)) < 1e-12


def test_per_antenna_zero_power_errors():
    with pytest.raises(MetricsError):
        per_antenna_bussgang(np.zeros((1, 10), dtype=complex), np.zeros((1, 10), dtype=complex))


def test_snidr_distortion_free_single_user():
    h = rng.complex_normal(rng.stream(4, "h"), (8, 1))
    g = 0.7 * h.conj()
    est = metrics.BussgangEstimate(g, np.zeros((8, 8), dtype=complex), 100)
    val = snidr(h, est, sigma_v2=0.5)
    want = np.abs(h.T @ g) ** 2 / 0.5
    assert val[0] == pytest.approx(float(want.real[0, 0]), rel=1e-12)


def test_unit_snidr_is_one_bit():
    h = np.ones((1, 1), dtype=complex)
    est = metrics.BussgangEstimate(np.ones((1, 1), dtype=complex), np.zeros((1, 1), dtype=complex), 10)
    assert sum_rate(h, est, sigma_v2=1.0) == pytest.approx(1.0)


def test_snidr_rejects_nonpositive_noise():
    h = np.ones((1, 1), dtype=complex)
    est = metrics.BussgangEstimate(np.ones((1, 1), dtype=complex), np.zeros((1, 1), dtype=complex), 10)
    with pytest.raises(ValueError):
        snidr(h, est, 0.0)


def test_sum_rate_trivia():
    h = np.eye(2, dtype=complex)
    est = metrics.BussgangEstimate(np.zeros((2, 2), dtype=complex), np.zeros((2, 2), dtype=complex), 10)
    assert sum_rate(h, est, 1.0) == 0.0
    est2 = metrics.BussgangEstimate(np.sqrt(3.0) * np.eye(2, dtype=complex), np.zeros((2, 2)), 10)
    assert sum_rate(h, est2, 1.0) == pytest.approx(4.0)


def test_user_permutation_equivariance():
    g = rng.stream(6, "perm")
    h = rng.complex_normal(g, (8, 3))
    s = gen_symbols(3, 400, seed=8)
    y = rng.complex_normal(g, (8, 400))
    est = estimate_bussgang(s, y)
    vals = snidr(h, est, 0.3)
    perm = np.array([2, 0, 1])
    est_p = estimate_bussgang(s.symbols[:, perm], y)
    vals_p = snidr(h[:, perm], est_p, 0.3)
    assert np.allclose(vals_p, vals[perm], rtol=1e-10)


def test_estimator_consistency_rate():
    # error of the linear-gain estimate shrinks like 1/sqrt(N)
    w = rng.complex_normal(rng.stream(9, "w"), (4, 1))
    q = lloyd_max(2)
    errs = {n: [] for n in (500, 8000)}
    for trial in range(20):
        for n in errs:
            s = gen_symbols(1, n, seed=100 + trial)
            x = w @ s.symbols.T
            root = np.sqrt(np.sum(np.abs(w) ** 2, axis=1) / 2)[:, None]
            y = root * (q.quantize(x.real / root) + 1j * q.quantize(x.imag / root))
            est = estimate_bussgang(s, y)
            ref = estimate_bussgang(gen_symbols(1, 200_000, seed=999),
                                    _apply(w, q, gen_symbols(1, 200_000, seed=999)))
            errs[n].append(np.linalg.norm(est.g - ref.g))
    ratio = np.mean(errs[8000]) / np.mean(errs[500])
    assert ratio < 0.6  # expect ~ 1/4


def _apply(w, q, s):
    x = w @ s.symbols.T
    root = np.sqrt(np.sum(np.abs(w) ** 2, axis=1) / 2)[:, None]
    return root * (q.quantize(x.real / root) + 1j * q.quantize(x.imag / root))


def test_cq_hermitian_psd():
    h = rng.complex_normal(rng.stream(12, "h"), (16, 2))
    q = lloyd_max(1)
    s = gen_symbols(2, 2000, seed=13)
    y = linear_quantized_tx(h, "zf", q, s, 16.0)
    est = estimate_bussgang(s, y)
    assert np.max(np.abs(est.c_q - est.c_q.conj().T)) < 1e-12
    eig = np.linalg.eigvalsh(est.c_q)
    assert eig.min() >= -1e-8 * np.trace(est.c_q).real


def test_rate_monotone_in_noise():
    h = rng.complex_normal(rng.stream(14, "h"), (8, 2))
    s = gen_symbols(2, 1500, seed=15)
    y = linear_quantized_tx(h, "zf", lloyd_max(1), s, 8.0)
    est = estimate_bussgang(s, y)
    rates = [sum_rate(h, est, sv) for sv in (1.0, 0.5, 0.1, 0.01)]
    assert all(b >= a for a, b in zip(rates, rates[1:]))


def test_nmse_floor_for_perfect_link():
    s = gen_symbols(2, 100, seed=16)
    assert nmse(s, s.symbols.T) == metrics.NMSE_FLOOR_DB


def test_nmse_degenerate_link_errors():
    s = gen_symbols(1, 100, seed=17)
    with pytest.raises(MetricsError):
        nmse(s, np.zeros((1, 100), dtype=complex))


def test_radiation_mainlobe_at_user():
    h = gen_los_ula(32, [70.0])
    w = mrt(h, 32.0)
    s = gen_symbols(1, 3000, seed=18)
    est = estimate_bussgang(s, w.w @ s.symbols.T)
    grid = np.arange(0.0, 180.5, 0.5)
    pat = radiation_pattern(est, grid)
    assert grid[np.argmax(pat["p_lin"])] == pytest.approx(70.0, abs=0.5)
    assert np.all(pat["p_lin"] >= 0.0)
    assert np.all(pat["p_dist"] >= 0.0)


def test_radiation_zero_distortion_sdr_sentinel():
    h = gen_los_ula(8, [90.0])
    w = mrt(h, 8.0)
    est = metrics.BussgangEstimate(w.w, np.zeros((8, 8), dtype=complex), 100)
    pat = radiation_pattern(est, np.array([45.0, 90.0]))
    assert np.all(np.isinf(pat["p_sdr"]))


def test_radiation_unquantized_distortion_below_floor():
    h = gen_los_ula(8, [90.0])
    w = mrt(h, 8.0)
    s = gen_symbols(1, 500, seed=19)
    est = estimate_bussgang(s, w.w @ s.symbols.T)
    pat = radiation_pattern(est, np.arange(0.0, 180.5, 0.5))
    assert np.all(pat["p_dist_db"] < -100.0)
