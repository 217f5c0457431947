"""Command line entry point: ``run``, ``latency`` and ``moments``."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import latency as lat
from .asymptotics import MAX_ORDER, moment_table, write_moments_csv
from .channel import SystemConfig, build_covariance_model, variance_profile
from .experiment import builtin_scenarios, emit, load_spec, run_experiment
from .power_control import conventional_power
from .scenarios import SCENARIO_NAMES
from .tpe import solve_weights, write_weights_csv

DEFAULT_SWEEP = tuple((M, K, J) for M in (40, 80, 160) for K in (8, 16) for J in (2, 4))


def _triple(text):
    try:
        M, K, J = (int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected M,K,J integers, got {text!r}") from None
    return M, K, J


def _load(args):
    if (args.spec is None) == (args.scenario is None):
        raise SystemExit("give exactly one of --spec or --scenario")
    return load_spec(args.spec) if args.spec else builtin_scenarios(args.scenario)


def cmd_run(args):
    spec = _load(args)
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.trials is not None:
        kw["trials"] = args.trials
    spec = replace(spec, **kw)
    table = run_experiment(spec, workers=args.workers)
    out = Path(args.out)
    paths = emit(table, out, tuple(args.format.split(",")))
    for prec, snr, user, mean, se in table.rows():
        if user == "sum":
            print(f"{prec:>14s} {snr:6.1f} dB  sum rate {mean:9.4f} +- {se:.4f}")
    print(f"wrote {len(paths)} files to {out}")
    if table.failures:
        for (prec, snr), reason in sorted(table.failures.items()):
            print(f"FAILED {prec} @ {snr:g} dB: {reason}", file=sys.stderr)
        return 1
    return 0


def cmd_latency(args):
    base = lat.LatencyParams(f_d=args.f_d, B=args.blocks, s=args.symbols)
    rep = lat.unit_latencies(replace(base, M=args.M, K=args.K, J=args.J, U=args.U))
    print(f"M={args.M} K={args.K} J={args.J} U={args.U}")
    for name in ("gc", "tr", "pc", "qrh", "tpe", "rzf", "p", "dtpe"):
        print(f"  L_{name:<5s}{getattr(rep, name):8d} cycles")
    print(f"  alpha {rep.alpha:.4f}  dtpep alpha {rep.alpha_dtpep:.4f}")
    print(f"  wall clock tpe {1e6 * lat.wall_clock(base, rep.tpe):.2f} us, rzf {1e6 * lat.wall_clock(base, rep.rzf):.2f} us")
    if args.out:
        rows = lat.amplification_sweep(args.config or DEFAULT_SWEEP, base)
        with open(args.out, "w", newline="") as fh:
            lat.write_sweep_csv(fh, rows)
        print(f"wrote {len(rows)} sweep rows to {args.out}")
    return 0


def cmd_moments(args):
    spec = _load(args)
    cfg = SystemConfig(spec.M, spec.K, 10.0 ** (args.snr_db / 10.0), spec.antenna_spacing_ratio)
    cov = build_covariance_model(spec.geometry, cfg, spec.unit_pathloss)
    p = conventional_power(cov.pathloss) if args.power == "conventional" else np.ones(cfg.K)
    table = moment_table(variance_profile(cov, p), args.order)
    with open(args.out, "w", newline="") as fh:
        write_moments_csv(fh, table)
    print(f"wrote moments up to order {args.order} for {cfg.K} users to {args.out}")
    if args.weights is not None:
        J = args.weights
        if 2 * J + 1 > args.order:
            raise SystemExit(f"TPE order {J} needs --order >= {2 * J + 1}")
        weights = solve_weights(table.rho, J, cfg.nu, p)
        with open(args.weights_out, "w", newline="") as fh:
            write_weights_csv(fh, weights)
        print(f"wrote order-{J} weights to {args.weights_out}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="tpemimo", description="TPE precoding simulator and cost model")
    sub = ap.add_subparsers(dest="command", required=True)

    def scenario_args(p):
        p.add_argument("--spec", help="INI experiment file")
        p.add_argument("--scenario", choices=SCENARIO_NAMES, help="built-in geometry")

    r = sub.add_parser("run", help="Monte Carlo ergodic-rate experiment")
    scenario_args(r)
    r.add_argument("--seed", type=int)
    r.add_argument("--trials", type=int)
    r.add_argument("--out", default="results")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--format", default="csv,json", help="comma list of csv, json")
    r.set_defaults(func=cmd_run)

    la = sub.add_parser("latency", help="clock-cycle model and amplification sweep")
    la.add_argument("--M", type=int, default=160)
    la.add_argument("--K", type=int, default=16)
    la.add_argument("--J", type=int, default=4)
    la.add_argument("--U", type=int, default=4)
    la.add_argument("--f-d", dest="f_d", type=float, default=300e6)
    la.add_argument("--blocks", type=int, default=100, help="precoders per coherence block")
    la.add_argument("--symbols", type=int, default=12, help="symbols per precoder for DTPEP")
    la.add_argument("--config", type=_triple, action="append", help="sweep point M,K,J (repeatable)")
    la.add_argument("--out", help="sweep CSV path")
    la.set_defaults(func=cmd_latency)

    m = sub.add_parser("moments", help="large-system moments (and optionally TPE weights)")
    scenario_args(m)
    m.add_argument("--order", type=int, default=7, choices=range(0, MAX_ORDER + 1), metavar="L")
    m.add_argument("--snr-db", dest="snr_db", type=float, default=10.0)
    m.add_argument("--power", choices=("uniform", "conventional"), default="uniform")
    m.add_argument("--out", default="moments.csv")
    m.add_argument("--weights", type=int, help="also solve TPE weights of this order")
    m.add_argument("--weights-out", dest="weights_out", default="weights.csv")
    m.set_defaults(func=cmd_moments)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
