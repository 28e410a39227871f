"""Command-line front end.

Subcommands: gen-channels, design-quantizer, eval-linear, train, eval-gnn,
radiation, nmse, power, run.  Every data-producing subcommand writes CSV
files (provenance comment + deterministic body) plus a JSON run manifest.
``run`` executes a preset config file (the configs/ directory ships one per
reproduced figure or table).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config_io, energy, experiments, trainer
from .channel import generate_dataset, load_dataset, save_dataset
from .config_io import (
    ConfigError,
    bool_field,
    float_field,
    groups_field,
    int_field,
    list_field,
    str_field,
)
from .quantizer import lloyd_max, save_quantizer

DEFAULT_SNR_LIST = [-30.0, -20.0, -10.0, 0.1, 10.0, 20.0, 30.0]


def _bits_token(tok: str):
    return tok if tok == "inf" else int(tok)


def _split_list(text, conv):
    return [conv(t.strip()) for t in str(text).split(",") if t.strip() != ""]


def _manifest(args_dict: dict, outputs: list, command: str) -> dict:
    prov = experiments.provenance_block(args_dict, args_dict.get("seed"))
    return dict(prov, command=command, config=args_dict, outputs=[str(o) for o in outputs])


# ---------------------------------------------------------------------------
# subcommand bodies (shared by flags and preset configs)
# ---------------------------------------------------------------------------


def do_gen_channels(model, m, k, count, seed, out):
    model = {"los": "los_ula", "los_ula": "los_ula", "rayleigh": "rayleigh"}[model]
    ds = generate_dataset(model, m, k, count, seed)
    save_dataset(out, ds)
    return [out]


def do_design_quantizer(bits, out, n_init=16, tol=1e-10, seed=0):
    q = lloyd_max(bits, n_init=n_init, tol=tol, seed=seed)
    save_quantizer(out, q)
    return [out]


def _load_weights_list(ckpts):
    loaded = []
    for path in ckpts or []:
        weights, q, _meta = experiments.load_checkpoint_weights(path)
        loaded.append((Path(path).stem, weights, q))
    return loaded


def do_rate_sweep(
    channels,
    out,
    precoder=None,
    bits_list=None,
    snr_list=None,
    n_eval=1000,
    seed=0,
    p_t=None,
    ckpts=None,
    config_dict=None,
):
    channel_files = channels if isinstance(channels, (list, tuple)) else [channels]
    expect = (config_dict or {}).get("m"), (config_dict or {}).get("k")
    datasets = [load_dataset(path, expect_m=expect[0], expect_k=expect[1]) for path in channel_files]
    snr_list = snr_list or DEFAULT_SNR_LIST
    rows = []
    for ds in datasets:
        ktag = f"_k{ds.k}" if len(datasets) > 1 else ""
        for bits in bits_list or []:
            series = f"{precoder}{ktag}_b{bits}"
            rows += experiments.rate_sweep(
                ds, series, snr_list, n_eval, seed, p_t=p_t, precoder=precoder, bits=bits
            )
        for name, weights, q in _load_weights_list(ckpts):
            rows += experiments.rate_sweep(
                ds, f"gnn_{name}{ktag}", snr_list, n_eval, seed, p_t=p_t, weights=weights, q=q
            )
    config_dict = config_dict or {}
    experiments.write_csv(
        out,
        ("series", "snr_db", "rate_mean", "rate_std", "n_channels"),
        rows,
        experiments.provenance_block(config_dict, seed),
    )
    return [out]


def do_radiation(
    out_prefix,
    m,
    angle_groups,
    n_sym=10_000,
    seed=0,
    grid_step=0.5,
    p_t=None,
    precoder=None,
    bits=None,
    ckpt=None,
    config_dict=None,
):
    outputs = []
    weights = q = None
    if ckpt:
        weights, q, _ = experiments.load_checkpoint_weights(ckpt)
    for angles in angle_groups:
        rows = experiments.radiation_run(
            m, angles, n_sym, seed, grid_step_deg=grid_step, p_t=p_t,
            precoder=precoder, bits=bits, weights=weights, q=q,
        )
        tag = "k%d" % len(angles) if len(angle_groups) > 1 else None
        path = Path(f"{out_prefix}_{tag}.csv") if tag else Path(f"{out_prefix}.csv")
        experiments.write_csv(
            path,
            ("angle_deg", "p_lin_db", "p_dist_db", "p_sdr_db"),
            rows,
            experiments.provenance_block(config_dict or {}, seed),
        )
        outputs.append(path)
    return outputs


def do_nmse(
    channels,
    out,
    precoder="mrt",
    bits_list=(1, 2, 3, 4),
    n_eval=1000,
    seed=0,
    p_t=None,
    ckpts=None,
    scatter_out=None,
    scatter_n=250,
    config_dict=None,
):
    ds = load_dataset(channels)
    rows = []
    for bits in bits_list:
        val = experiments.nmse_over_set(ds, n_eval, seed, p_t=p_t, precoder=precoder, bits=bits)
        rows.append((precoder, bits, val))
    for name, weights, q in _load_weights_list(ckpts):
        val = experiments.nmse_over_set(ds, n_eval, seed, p_t=p_t, weights=weights, q=q)
        rows.append((f"gnn_{name}", weights.config.bits, val))
    prov = experiments.provenance_block(config_dict or {}, seed)
    experiments.write_csv(out, ("precoder", "b", "nmse_db"), rows, prov)
    outputs = [out]
    if scatter_out:
        h = ds.channels[0]
        p_t_val = float(ds.m) if p_t is None else p_t
        srows = experiments.scatter_run(
            h, scatter_n, seed, p_t_val, precoder=precoder, bits=bits_list[0]
        )
        tagged = [(f"{precoder}_b{bits_list[0]}",) + r for r in srows]
        for name, weights, q in _load_weights_list(ckpts):
            srows = experiments.scatter_run(h, scatter_n, seed, p_t_val, weights=weights, q=q)
            tagged += [(f"gnn_{name}",) + r for r in srows]
        experiments.write_csv(
            scatter_out,
            ("series", "s_re", "s_im", "shat_re", "shat_im"),
            tagged,
            prov,
        )
        outputs.append(scatter_out)
    return outputs


def do_power(
    out,
    mode="baseband",
    bits=1,
    m=32,
    k=1,
    d_h=128,
    n_h=4,
    bandwidth_list=None,
    f_c=3.5e9,
    n_zone=2,
    include_gnn=True,
    config_dict=None,
):
    bandwidth_list = bandwidth_list or [1e6]
    flops = energy.gnn_flops(m, k, d_h, n_h, bits) if include_gnn else None
    rows = []
    for bw in bandwidth_list:
        f_s = energy.sampling_rate(mode, bandwidth=bw, f_c=f_c, n_zone=n_zone)
        p_dacs = energy.dacs_total_power(m, bits, f_s)
        if flops is not None:
            p_gnn, req = energy.gnn_power(bw, flops)
        else:
            p_gnn, req = 0.0, 0.0
        rows.append((bw, p_dacs, p_gnn, p_dacs + p_gnn, req))
    experiments.write_csv(
        out,
        ("b_hz", "p_dacs_w", "p_gnn_w", "p_total_w", "req_flops_per_s"),
        rows,
        experiments.provenance_block(config_dict or {}, None),
    )
    return [out]


def do_train(
    channels,
    out,
    m,
    k,
    bits,
    d_h=128,
    n_h=4,
    epochs=20,
    val=None,
    seed=0,
    lr=5e-3,
    batch_channels=128,
    n_s=125,
    chunk_channels=16,
    resume=None,
    log=None,
    quiet=False,
):
    train_ds = load_dataset(channels, expect_m=m, expect_k=k)
    val_ds = load_dataset(val, expect_m=m, expect_k=k) if val else None
    cfg = trainer.TrainConfig(
        m=m, k=k, bits=bits, d_h=d_h, n_h=n_h, epochs=epochs, seed=seed, lr=lr,
        batch_channels=batch_channels, n_s=n_s, chunk_channels=chunk_channels,
    )
    log = log or f"{out}.log.csv"

    def progress(epoch, step, loss, wall_ms):
        if not quiet:
            print(f"epoch {epoch} step {step} loss {loss:.4f} ({wall_ms:.0f} ms)", flush=True)

    trainer.train(train_ds, val_ds, cfg, out, log_path=log, resume_from=resume, progress=progress)
    return [out, log]


# ---------------------------------------------------------------------------
# preset configs (the `run` subcommand)
# ---------------------------------------------------------------------------

_COMMON = {
    "scenario": str_field(required=True),
    "seed": int_field(default=0),
    "out": str_field(required=True),
}

SCENARIO_SCHEMAS = {
    "gen_channels": dict(
        _COMMON,
        model=str_field(required=True),
        m=int_field(required=True),
        k=int_field(required=True),
        count=int_field(required=True),
    ),
    "rate_sweep": dict(
        _COMMON,
        channels=list_field(str, required=True),
        precoder=str_field(),
        bits=list_field(_bits_token, default=[]),
        snr_db=list_field(float, default=DEFAULT_SNR_LIST),
        n_eval=int_field(default=1000),
        p_t=float_field(),
        ckpts=list_field(str, default=[]),
    ),
    "radiation": dict(
        _COMMON,
        m=int_field(required=True),
        user_angles=groups_field(float, required=True),
        precoder=str_field(),
        bits=str_field(),
        ckpt=str_field(),
        n_sym=int_field(default=10_000),
        grid_step=float_field(default=0.5),
        p_t=float_field(),
    ),
    "nmse": dict(
        _COMMON,
        channels=str_field(required=True),
        precoder=str_field(default="mrt"),
        bits=list_field(int, default=[1, 2, 3, 4]),
        n_eval=int_field(default=1000),
        p_t=float_field(),
        ckpts=list_field(str, default=[]),
        scatter_out=str_field(),
        scatter_n=int_field(default=250),
    ),
    "power": dict(
        _COMMON,
        mode=str_field(default="baseband"),
        series=list_field(str, required=True),
        bandwidth_hz=list_field(float, required=True),
        f_c=float_field(default=3.5e9),
        n_zone=int_field(default=2),
        m=int_field(default=32),
        k=int_field(default=1),
    ),
    "train": dict(
        _COMMON,
        channels=str_field(required=True),
        val=str_field(),
        m=int_field(required=True),
        k=int_field(required=True),
        bits=int_field(required=True),
        d_h=int_field(default=128),
        n_h=int_field(default=4),
        epochs=int_field(default=20),
        lr=float_field(default=5e-3),
        batch_channels=int_field(default=128),
        n_s=int_field(default=125),
        chunk_channels=int_field(default=16),
    ),
}

# per-series keys for the power scenario: name.bits, name.d_h, name.n_h, name.gnn
_POWER_SERIES_KEYS = {
    "bits": int_field(required=True),
    "d_h": int_field(default=128),
    "n_h": int_field(default=4),
    "gnn": bool_field(default=True),
}


def run_preset(config_path, out_dir=None):
    text = Path(config_path).read_text()
    head = config_io.parse_config(
        "\n".join(
            line for line in text.splitlines() if line.split("#")[0].strip().startswith("scenario")
        ),
        {"scenario": str_field(required=True)},
        source=str(config_path),
    )
    scenario = head["scenario"]
    if scenario not in SCENARIO_SCHEMAS:
        raise ConfigError(f"{config_path}: unknown scenario {scenario!r}")
    schema = dict(SCENARIO_SCHEMAS[scenario])
    if scenario == "power":
        mini = config_io.parse_config(
            "\n".join(
                line
                for line in text.splitlines()
                if line.split("#")[0].strip().startswith("series")
            ),
            {"series": list_field(str, required=True)},
            source=str(config_path),
        )
        for name in mini["series"]:
            for key, field in _POWER_SERIES_KEYS.items():
                schema[f"{name}.{key}"] = field
    cfg = config_io.load_config(config_path, schema)
    out = cfg["out"] if out_dir is None else str(Path(out_dir) / cfg["out"])
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    seed = cfg["seed"]

    if scenario == "gen_channels":
        outputs = do_gen_channels(cfg["model"], cfg["m"], cfg["k"], cfg["count"], seed, out)
    elif scenario == "rate_sweep":
        outputs = do_rate_sweep(
            cfg["channels"], out, precoder=cfg["precoder"], bits_list=cfg["bits"],
            snr_list=cfg["snr_db"], n_eval=cfg["n_eval"], seed=seed, p_t=cfg["p_t"],
            ckpts=cfg["ckpts"], config_dict=cfg,
        )
    elif scenario == "radiation":
        outputs = do_radiation(
            out.removesuffix(".csv"), cfg["m"], cfg["user_angles"], n_sym=cfg["n_sym"],
            seed=seed, grid_step=cfg["grid_step"], p_t=cfg["p_t"], precoder=cfg["precoder"],
            bits=cfg["bits"], ckpt=cfg["ckpt"], config_dict=cfg,
        )
    elif scenario == "nmse":
        outputs = do_nmse(
            cfg["channels"], out, precoder=cfg["precoder"], bits_list=cfg["bits"],
            n_eval=cfg["n_eval"], seed=seed, p_t=cfg["p_t"], ckpts=cfg["ckpts"],
            scatter_out=cfg["scatter_out"], scatter_n=cfg["scatter_n"], config_dict=cfg,
        )
    elif scenario == "power":
        outputs = []
        for name in cfg["series"]:
            path = Path(out.removesuffix(".csv") + f"_{name}.csv")
            outputs += do_power(
                path, mode=cfg["mode"], bits=cfg[f"{name}.bits"], m=cfg["m"], k=cfg["k"],
                d_h=cfg[f"{name}.d_h"], n_h=cfg[f"{name}.n_h"],
                bandwidth_list=cfg["bandwidth_hz"], f_c=cfg["f_c"], n_zone=cfg["n_zone"],
                include_gnn=cfg[f"{name}.gnn"], config_dict=cfg,
            )
    elif scenario == "train":
        outputs = do_train(
            cfg["channels"], out, cfg["m"], cfg["k"], cfg["bits"], d_h=cfg["d_h"],
            n_h=cfg["n_h"], epochs=cfg["epochs"], val=cfg["val"], seed=seed, lr=cfg["lr"],
            batch_channels=cfg["batch_channels"], n_s=cfg["n_s"],
            chunk_channels=cfg["chunk_channels"],
        )
    else:  # pragma: no cover
        raise ConfigError(f"unhandled scenario {scenario}")

    manifest_path = Path(str(outputs[0]) + ".manifest.json")
    experiments.write_manifest(manifest_path, _manifest(cfg, outputs, f"run:{scenario}"))
    return outputs + [manifest_path]


# ---------------------------------------------------------------------------
# argparse wiring
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quantprecode", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen-channels", help="generate and persist a channel dataset")
    g.add_argument("--model", choices=["rayleigh", "los"], required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    d = sub.add_parser("design-quantizer", help="Lloyd-Max design for a standard normal source")
    d.add_argument("--bits", type=int, required=True)
    d.add_argument("--n-init", type=int, default=16)
    d.add_argument("--tol", type=float, default=1e-10)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)

    e = sub.add_parser("eval-linear", help="rate sweep for MRT/ZF with quantized DACs")
    e.add_argument("--precoder", choices=["mrt", "zf"], required=True)
    e.add_argument("--bits", default="1", help="comma list, e.g. 1,2,3,4,inf")
    e.add_argument("--m", type=int, default=None, help="expected antenna count (validated against the channel file)")
    e.add_argument("--k", type=int, default=None, help="expected user count (validated against the channel file)")
    e.add_argument("--snr-list", default=",".join(str(v) for v in DEFAULT_SNR_LIST))
    e.add_argument("--channels", required=True)
    e.add_argument("--n-eval", type=int, default=1000)
    e.add_argument("--p-t", type=float, default=None)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train the neural precoder")
    t.add_argument("--m", type=int, required=True)
    t.add_argument("--k", type=int, required=True)
    t.add_argument("--bits", type=int, required=True)
    t.add_argument("--dh", type=int, default=128)
    t.add_argument("--nh", type=int, default=4)
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--lr", type=float, default=5e-3)
    t.add_argument("--batch", type=int, default=128)
    t.add_argument("--ns", type=int, default=125)
    t.add_argument("--chunk", type=int, default=16)
    t.add_argument("--channels", required=True)
    t.add_argument("--val", default=None)
    t.add_argument("--resume", default=None)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--quiet", action="store_true")
    t.add_argument("--out", required=True)

    ge = sub.add_parser("eval-gnn", help="rate sweep for a trained checkpoint")
    ge.add_argument("--ckpt", required=True, nargs="+")
    ge.add_argument("--channels", required=True)
    ge.add_argument("--snr-list", default=",".join(str(v) for v in DEFAULT_SNR_LIST))
    ge.add_argument("--n-eval", type=int, default=1000)
    ge.add_argument("--p-t", type=float, default=None)
    ge.add_argument("--seed", type=int, default=0)
    ge.add_argument("--out", required=True)

    r = sub.add_parser("radiation", help="LOS radiation patterns on a 0.5 deg grid")
    r.add_argument("--m", type=int, required=True)
    r.add_argument("--angles", required=True, help="user angle groups, e.g. '55,110|25,55,85'")
    r.add_argument("--precoder", choices=["mrt", "zf"])
    r.add_argument("--bits", default=None)
    r.add_argument("--ckpt", default=None)
    r.add_argument("--n-sym", type=int, default=10_000)
    r.add_argument("--grid-step", type=float, default=0.5)
    r.add_argument("--p-t", type=float, default=None)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True, help="output path or prefix")

    n = sub.add_parser("nmse", help="noiseless NMSE table rows")
    n.add_argument("--channels", required=True)
    n.add_argument("--precoder", choices=["mrt", "zf"], default="mrt")
    n.add_argument("--bits", default="1,2,3,4")
    n.add_argument("--ckpt", nargs="*", default=[])
    n.add_argument("--n-eval", type=int, default=1000)
    n.add_argument("--p-t", type=float, default=None)
    n.add_argument("--scatter", default=None, help="also dump an s vs s-hat scatter CSV")
    n.add_argument("--scatter-n", type=int, default=250)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--out", required=True)

    w = sub.add_parser("power", help="DAC + processing power over bandwidth")
    w.add_argument("--mode", choices=["baseband", "rfdac"], default="baseband")
    w.add_argument("--bits", type=int, required=True)
    w.add_argument("--m", type=int, default=32)
    w.add_argument("--k", type=int, default=1)
    w.add_argument("--dh", type=int, default=128)
    w.add_argument("--nh", type=int, default=4)
    w.add_argument("--no-gnn", action="store_true", help="DACs only (linear baseline)")
    w.add_argument("--bandwidth-list", required=True, help="comma list in Hz")
    w.add_argument("--f-c", type=float, default=3.5e9)
    w.add_argument("--n-zone", type=int, default=2)
    w.add_argument("--out", required=True)

    ru = sub.add_parser("run", help="run a preset config file")
    ru.add_argument("--config", required=True)
    ru.add_argument("--out-dir", default=None)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    vargs = {k: v for k, v in vars(args).items() if k != "cmd"}
    try:
        if args.cmd == "gen-channels":
            outputs = do_gen_channels(args.model, args.m, args.k, args.count, args.seed, args.out)
        elif args.cmd == "design-quantizer":
            outputs = do_design_quantizer(args.bits, args.out, args.n_init, args.tol, args.seed)
        elif args.cmd == "eval-linear":
            outputs = do_rate_sweep(
                args.channels, args.out, precoder=args.precoder,
                bits_list=_split_list(args.bits, _bits_token),
                snr_list=_split_list(args.snr_list, float), n_eval=args.n_eval,
                seed=args.seed, p_t=args.p_t, config_dict=vargs,
            )
        elif args.cmd == "train":
            outputs = do_train(
                args.channels, args.out, args.m, args.k, args.bits, d_h=args.dh, n_h=args.nh,
                epochs=args.epochs, val=args.val, seed=args.seed, lr=args.lr,
                batch_channels=args.batch, n_s=args.ns, chunk_channels=args.chunk,
                resume=args.resume, quiet=args.quiet,
            )
        elif args.cmd == "eval-gnn":
            outputs = do_rate_sweep(
                args.channels, args.out, snr_list=_split_list(args.snr_list, float),
                n_eval=args.n_eval, seed=args.seed, p_t=args.p_t, ckpts=args.ckpt,
                config_dict=vargs,
            )
        elif args.cmd == "radiation":
            groups = [
                [float(t) for t in grp.split(",") if t.strip()] for grp in args.angles.split("|")
            ]
            outputs = do_radiation(
                args.out.removesuffix(".csv"), args.m, groups, n_sym=args.n_sym, seed=args.seed,
                grid_step=args.grid_step, p_t=args.p_t, precoder=args.precoder,
                bits=args.bits, ckpt=args.ckpt, config_dict=vargs,
            )
        elif args.cmd == "nmse":
            outputs = do_nmse(
                args.channels, args.out, precoder=args.precoder,
                bits_list=_split_list(args.bits, int), n_eval=args.n_eval, seed=args.seed,
                p_t=args.p_t, ckpts=args.ckpt, scatter_out=args.scatter,
                scatter_n=args.scatter_n, config_dict=vargs,
            )
        elif args.cmd == "power":
            outputs = do_power(
                args.out, mode=args.mode, bits=args.bits, m=args.m, k=args.k, d_h=args.dh,
                n_h=args.nh, bandwidth_list=_split_list(args.bandwidth_list, float),
                f_c=args.f_c, n_zone=args.n_zone, include_gnn=not args.no_gnn,
                config_dict=vargs,
            )
        elif args.cmd == "run":
            outputs = run_preset(args.config, args.out_dir)
        else:  # pragma: no cover
            raise SystemExit(2)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.cmd != "run":
        manifest_path = Path(str(outputs[0]) + ".manifest.json")
        experiments.write_manifest(manifest_path, _manifest(vargs, outputs, args.cmd))
        outputs = list(outputs) + [manifest_path]
    for o in outputs:
        print(o)
    return 0


if __name__ == "__main__":
    sys.exit(main())
