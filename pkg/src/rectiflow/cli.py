"""Command-line front end: simulate | statemap | ber | energy."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .circuit_core import CircuitParams, load_params
from .harness import (
    ExperimentConfig,
    emit_outputs,
    run_ber_experiment,
    run_energy_experiment,
    run_symbol_trace,
)
from .statemap import build_state_maps, save_state_map


def _load_circuit(args) -> CircuitParams:
    params = load_params(args.config) if args.config else CircuitParams()
    if getattr(args, "cap", None) is not None:
        params = params.with_capacitance(args.cap)
    return params


def _parse_ebn0(spec: str) -> tuple:
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError("--ebn0 expects start:step:stop")
    start, step, stop = (float(p) for p in parts)
    if step <= 0.0:
        raise ValueError("--ebn0 step must be positive")
    if stop < start:
        raise ValueError("--ebn0 stop must not precede start")
    return tuple(np.arange(start, stop + 0.5 * step, step))


def _cmd_simulate(args) -> int:
    params = _load_circuit(args)
    bits, traj = run_symbol_trace(params, args.bits, dt=args.dt)
    out = Path(args.out)
    lines = [f"# transient trace bits={args.bits} "
             f"C_p={params.C_p:.17g} C_n={params.C_n:.17g}",
             "t,V_p,V_n,V_L,mode"]
    for i in range(traj.times.shape[0]):
        lines.append(f"{traj.times[i]:.17g},{traj.V_p[i]:.17g},"
                     f"{traj.V_n[i]:.17g},{traj.V_L[i]:.17g},"
                     f"{int(traj.modes[i])}")
    out.write_text("\n".join(lines) + "\n")
    sym_path = out.with_name(out.stem + "_symbols" + out.suffix)
    slines = ["k,bit,x_k"]
    for k in range(traj.end_V_L.shape[0]):
        slines.append(f"{k},{int(bits[k])},{traj.end_V_L[k]:.17g}")
    sym_path.write_text("\n".join(slines) + "\n")
    print(f"wrote {out} ({traj.times.shape[0]} samples) and {sym_path} "
          f"({traj.end_V_L.shape[0]} symbols)")
    return 0


def _cmd_statemap(args) -> int:
    params = _load_circuit(args)
    smap = build_state_maps(params, N=args.grid)
    save_state_map(smap, args.out)
    print(f"wrote {args.out}: N={smap.grid.shape[0]} "
          f"v_L={smap.v_L:.6f} V v_H={smap.v_H:.6f} V")
    return 0


def _cmd_ber(args) -> int:
    params = load_params(args.config) if args.config else CircuitParams()
    caps = tuple(float(c) for c in args.cap.split(",")) if args.cap \
        else (2e-9, 10e-9)
    cfg = ExperimentConfig(
        circuit=params,
        capacitance_list=caps,
        ebn0_grid=_parse_ebn0(args.ebn0),
        detectors=tuple(args.detectors.split(",")),
        min_errors=args.min_errors,
        max_symbols=args.max_symbols,
        seed=args.seed,
    )
    curves = run_ber_experiment(cfg)
    files = emit_outputs({"ber": curves, "config": cfg}, args.outdir)
    for curve in curves:
        head = f"C={curve.capacitance * 1e9:g}nF {curve.detector}"
        for pt in curve.points:
            flag = " (budget)" if pt.budget_exhausted else ""
            print(f"{head}: Eb/N0={pt.ebn0_db:g} dB  BER={pt.ber:.3e} "
                  f"({pt.errors}/{pt.symbols}){flag}")
    print(f"wrote {len(files)} files to {args.outdir}")
    return 0


def _cmd_energy(args) -> int:
    params = _load_circuit(args)
    cap = args.cap if args.cap is not None else params.C_p
    cfg = ExperimentConfig(
        circuit=params,
        capacitance_list=(cap,),
        symbols_per_trial=args.symbols,
        seed=args.seed,
    )
    table = run_energy_experiment(cfg)
    rep = table[(cap, args.node)]
    out = Path(args.out) if args.out else Path(
        f"energy_{args.node}_C{cap * 1e9:g}n.csv")
    lines = [f"# per-symbol harvested power node={args.node} "
             f"capacitance={cap:.17g} K={rep.K}",
             "k,P_W"]
    for k, pw in enumerate(rep.per_symbol):
        lines.append(f"{k},{pw:.17g}")
    out.write_text("\n".join(lines) + "\n")
    print(f"P_bar({args.node}, C={cap * 1e9:g} nF) = "
          f"{rep.P_bar * 1e6:.2f} uW over {rep.K} symbols; wrote {out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rectiflow",
        description="Dual-diode differential rectifier simulation toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="dense transient trace of a bit string")
    sim.add_argument("--config", help="key=value circuit constants file")
    sim.add_argument("--bits", default="101100111000101",
                     help="bit string to transmit")
    sim.add_argument("--dt", type=float, default=None, help="grid step [s]")
    sim.add_argument("--cap", type=float, default=None,
                     help="set both filter capacitors [F]")
    sim.add_argument("--out", default="trace.csv", help="trace CSV path")
    sim.set_defaults(func=_cmd_simulate)

    smp = sub.add_parser("statemap", help="tabulate the transition maps")
    smp.add_argument("--config", help="key=value circuit constants file")
    smp.add_argument("--cap", type=float, default=None,
                     help="set both filter capacitors [F]")
    smp.add_argument("--grid", type=int, default=201, help="grid size N")
    smp.add_argument("--out", default="statemap.csv", help="map CSV path")
    smp.set_defaults(func=_cmd_statemap)

    ber = sub.add_parser("ber", help="Monte Carlo BER sweep")
    ber.add_argument("--config", help="key=value circuit constants file")
    ber.add_argument("--cap", default=None,
                     help="comma-separated capacitances [F] "
                          "(default 2e-9,10e-9)")
    ber.add_argument("--detectors", default="ml_vp,ml_vl,caad,mlsd",
                     help="comma-separated detector names")
    ber.add_argument("--ebn0", default="0:2:20",
                     help="Eb/N0 grid as start:step:stop [dB]")
    ber.add_argument("--min-errors", type=int, default=100,
                     help="bit errors to accumulate per point")
    ber.add_argument("--max-symbols", type=int, default=10_000_000,
                     help="symbol budget per point")
    ber.add_argument("--seed", type=int, default=1234, help="master RNG seed")
    ber.add_argument("--outdir", default="ber_out", help="output directory")
    ber.set_defaults(func=_cmd_ber)

    en = sub.add_parser("energy", help="average harvested power")
    en.add_argument("--config", help="key=value circuit constants file")
    en.add_argument("--cap", type=float, default=None,
                    help="set both filter capacitors [F]")
    en.add_argument("--node", choices=("vl", "vp"), default="vl",
                    help="observation node")
    en.add_argument("--symbols", type=int, default=10_000,
                    help="stream length K")
    en.add_argument("--seed", type=int, default=1234, help="master RNG seed")
    en.add_argument("--out", default=None, help="per-symbol power CSV path")
    en.set_defaults(func=_cmd_energy)
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface validation failures as diagnostics
        print(f"rectiflow: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
