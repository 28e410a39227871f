#!/usr/bin/env python3
"""Benchmark the compiled layer kernels against the pure-numpy fallback.

Times one representative training-shaped layer (forward + backward) per
backend and dtype, plus an end-to-end per-channel loss/gradient pass, and
prints a small table.  Run after an editable install:

    python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from quantprecode import channel, rng, trainer
from quantprecode.gnn_core import numpy_core

try:
    from quantprecode.gnn_core import _fast
except ImportError:
    _fast = None


def time_layer(core, dtype, ni, m, k, d, reps):
    g = rng.stream(0, "bench")
    mk = lambda *s: np.ascontiguousarray(g.standard_normal(s), dtype=dtype)
    mats = (mk(d, d), mk(d, d), mk(d, d), mk(d, d), mk(d, d), mk(d, d), mk(d, d))
    e = mk(d, ni * m * k)
    zb = mk(d, ni * m)
    zu = mk(d, ni * k)
    g_e = mk(d, ni * m * k)
    g_zb = mk(d, ni * m)
    g_zu = mk(d, ni * k)
    core.layer_forward(mats, e, zb, zu, ni, m, k, 0.01, False)  # warm
    t0 = time.perf_counter()
    for _ in range(reps):
        out = core.layer_forward(mats, e, zb, zu, ni, m, k, 0.01, False)
    t_fwd = (time.perf_counter() - t0) / reps
    cache = out[3]
    core.layer_backward(mats, cache, g_e, g_zb, g_zu, ni, m, k, 0.01, False)
    t0 = time.perf_counter()
    for _ in range(reps):
        core.layer_backward(mats, cache, g_e, g_zb, g_zu, ni, m, k, 0.01, False)
    t_bwd = (time.perf_counter() - t0) / reps
    return t_fwd, t_bwd


def time_end_to_end(backend_name, m, n_channels, reps):
    import quantprecode.gnn_core as gc

    mod = numpy_core if backend_name == "numpy" else _fast
    saved = (gc.layer_forward, gc.layer_backward)
    gc.layer_forward, gc.layer_backward = mod.layer_forward, mod.layer_backward
    try:
        cfg = trainer.TrainConfig(m=m, k=1, bits=1, d_h=128, n_h=4, n_s=125,
                                  batch_channels=n_channels, chunk_channels=n_channels,
                                  epochs=1, lr=1e-3, seed=1)
        ds = channel.generate_dataset("rayleigh", m, 1, n_channels, seed=9)
        trainer.train(ds, None, cfg, "/tmp/bench_kernels.ckpt")  # warm
        t0 = time.perf_counter()
        for _ in range(reps):
            trainer.train(ds, None, cfg, "/tmp/bench_kernels.ckpt")
        return (time.perf_counter() - t0) / reps / n_channels
    finally:
        gc.layer_forward, gc.layer_backward = saved


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    reps = 3 if args.quick else 10

    backends = [("numpy", numpy_core)] + ([("fast", _fast)] if _fast else [])
    print(f"{'layer kernel':<34}{'fwd ms':>10}{'bwd ms':>10}")
    for dtype in (np.float32, np.float64):
        for name, core in backends:
            f, b = time_layer(core, dtype, ni=1000, m=8, k=1, d=128, reps=reps)
            label = f"{name} {np.dtype(dtype).name} ni=1000 m=8 d=128"
            print(f"{label:<34}{f * 1e3:>10.2f}{b * 1e3:>10.2f}")

    print()
    print(f"{'end-to-end loss+grad (f32)':<34}{'ms/channel':>12}")
    for name, _ in backends:
        t = time_end_to_end(name, m=8, n_channels=8 if args.quick else 32, reps=1)
        print(f"{name:<34}{t * 1e3:>12.1f}")


if __name__ == "__main__":
    main()
