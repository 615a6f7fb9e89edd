"""Command line interface: simulate, sweep, ode, verify, report.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.  Every
output file gets a metadata record sufficient to replay it; identical
argv and seed produce byte-identical data files (timestamps live in a
separate metadata field).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import experiments as _exp
from .engine import RunConfig, run, save_run
from .ode import integrate
from .rules import load_table_json, make_rule

EXPERIMENTS = ("event_c", "event_l", "coalescence", "windows", "surplus",
               "sim_ode", "de_method", "two_giants")


class _CliError(Exception):
    pass


def _default_jobs() -> int:
    env = os.environ.get("ACHLIOPTAS_LAB_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _build_rule(args) -> object:
    if getattr(args, "rule_file", None):
        return load_table_json(args.rule_file,
                               tie_break=getattr(args, "tie_break", "first_listed"))
    try:
        return make_rule(args.rule, ell=getattr(args, "ell", None),
                         r=getattr(args, "r", None),
                         tie_break=getattr(args, "tie_break", "first_listed"))
    except ValueError as exc:
        raise _CliError(str(exc)) from None


def _add_rule_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rule", required=True,
                   help="rule name (erdos_renyi, product, sum, bohman_frieze, "
                        "dcdgm, join_two_smallest, forced_only_smallest, "
                        "min_rule_custom) or bounded_size_table via --rule-file")
    p.add_argument("--rule-file", default=None,
                   help="JSON decision table for bounded_size_table rules")
    p.add_argument("--ell", type=int, default=None)
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--tie-break", choices=("first_listed", "random"),
                   default="first_listed")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="achlab",
        description="Simulation and ODE laboratory for Achlioptas-type "
                    "random graph processes")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("simulate", help="run one trajectory and write CSV")
    _add_rule_args(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--grid", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--sampling", default="iid_uniform",
                   choices=("iid_uniform", "distinct_vertices", "distinct_new_pairs"))
    p.add_argument("--record-ks", default=None,
                   help="comma-separated size thresholds (default 1..10,100)")
    p.add_argument("--bins-b", type=int, default=2)
    p.add_argument("--surplus-k", type=int, default=100)

    p = sub.add_parser("sweep", help="transition-window sweep over n")
    _add_rule_args(p)
    p.add_argument("--ns", required=True, help="comma-separated vertex counts")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t-max", type=float, default=1.5)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("ode", help="integrate the rule-induced ODE system")
    _add_rule_args(p)
    p.add_argument("--kmax", type=int, default=1000)
    p.add_argument("--h", type=float, default=1e-4)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--out-dt", type=float, default=0.01)
    p.add_argument("--kprint", type=int, default=10)
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify", help="run a scripted experiment from JSON config")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="results directory")
    p.add_argument("--jobs", type=int, default=None)

    p = sub.add_parser("report", help="summarize a results directory")
    p.add_argument("--in", dest="indir", required=True)
    return ap


def _cmd_simulate(args) -> int:
    rule = _build_rule(args)
    ks = tuple(int(x) for x in args.record_ks.split(",")) if args.record_ks \
        else RunConfig.__dataclass_fields__["record_ks"].default
    try:
        cfg = RunConfig(n=args.n, rule=rule, seed=args.seed, t_max=args.t_max,
                        grid_dt=args.grid, sampling=args.sampling,
                        record_ks=ks, bins_B=args.bins_b,
                        surplus_K=args.surplus_k)
    except ValueError as exc:
        raise _CliError(str(exc)) from None
    t0 = time.time()
    traj = run(cfg)
    save_run(traj, args.out, wall_time_s=time.time() - t0)
    print(f"wrote {args.out} ({len(traj)} rows, final l1/n = "
          f"{traj.l1[-1] / cfg.n:.6f})", file=sys.stderr)
    return 0


def _cmd_sweep(args) -> int:
    rule = _build_rule(args)
    try:
        ns = [int(x) for x in args.ns.split(",")]
    except ValueError as exc:
        raise _CliError(f"bad --ns: {exc}") from None
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        report = _exp.sweep_windows(rule, ns, args.a, args.b, args.runs,
                                    seed=args.seed, t_max=args.t_max)
    except ValueError as exc:
        raise _CliError(str(exc)) from None
    report.to_csv(outdir / "windows.csv")
    with open(outdir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(_exp._jsonable(report.to_dict()), fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump({"experiment": "windows",
                   "files": ["report.json", "windows.csv"]}, fh, indent=1,
                  sort_keys=True)
        fh.write("\n")
    for n in ns:
        print(f"n={n}: mean delta/n = {report.mean_delta_norm[n]:.6g} "
              f"(flagged {report.flagged[n]})", file=sys.stderr)
    return 0


def _cmd_ode(args) -> int:
    rule = _build_rule(args)
    try:
        sol = integrate(rule, args.t_max, kmax=args.kmax, h=args.h,
                        out_dt=args.out_dt)
    except ValueError as exc:
        raise _CliError(str(exc)) from None
    sol.to_csv(args.out, kprint=args.kprint)
    meta = sol.metadata()
    meta["timing"] = {"written_unix": time.time()}
    with open(str(args.out) + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"wrote {args.out} (tc estimate: {meta['tc_estimate']})", file=sys.stderr)
    return 0


def _cmd_verify(args) -> int:
    cfg_path = Path(args.config)
    if not cfg_path.exists():
        raise _CliError(f"config file not found: {cfg_path}")
    with open(cfg_path, encoding="utf-8") as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise _CliError(f"bad config JSON: {exc}") from None
    outdir = Path(args.out) if args.out else cfg_path.parent / f"results_{args.experiment}"
    if args.jobs is not None:
        config["jobs"] = args.jobs
    elif "jobs" not in config:
        config["jobs"] = _default_jobs()
    try:
        report = _exp.run_experiment(args.experiment, config, outdir)
    except ValueError as exc:
        raise _CliError(str(exc)) from None
    print(json.dumps(report, indent=1, sort_keys=True))
    return 0


def _cmd_report(args) -> int:
    indir = Path(args.indir)
    if not indir.is_dir():
        raise _CliError(f"not a directory: {indir}")
    manifests = sorted(indir.rglob("manifest.json"))
    metas = sorted(indir.rglob("*.meta.json"))
    if not manifests and not metas:
        raise _CliError(f"no manifests or metadata records under {indir}")
    for man in manifests:
        with open(man, encoding="utf-8") as fh:
            m = json.load(fh)
        rep_path = man.parent / "report.json"
        line = f"{man.parent.name}: experiment={m.get('experiment')}"
        if rep_path.exists():
            with open(rep_path, encoding="utf-8") as fh:
                rep = json.load(fh)
            for key in ("frequency", "sup_gap_rho", "stability_factor",
                        "max_abs_z", "mean_l2_over_l1"):
                if key in rep and rep[key] is not None:
                    line += f" {key}={rep[key]:.6g}"
        print(line)
    for meta in metas:
        with open(meta, encoding="utf-8") as fh:
            m = json.load(fh)
        if m.get("schema") == "achlab-trajectory-v1":
            fin = m.get("final", {})
            print(f"{meta.name}: trajectory rule={m['config']['rule']['kind']} "
                  f"n={m['config']['n']} seed={m['seed']} "
                  f"final_l1={fin.get('l1')}")
        elif m.get("schema") == "achlab-ode-v1":
            print(f"{meta.name}: ode rule={m.get('rule')} kmax={m.get('kmax')} "
                  f"tc={m.get('tc_estimate')}")
    return 0


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {"simulate": _cmd_simulate, "sweep": _cmd_sweep,
                "ode": _cmd_ode, "verify": _cmd_verify, "report": _cmd_report}
    try:
        return handlers[args.cmd](args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures keep a distinct exit code
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
