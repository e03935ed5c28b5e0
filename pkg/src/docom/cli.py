"""Command-line front end: ``docom {run,sweep,preset,topology,stepsizes}``.

Exit codes: 0 success; 1 a run diverged or failed; 2 malformed config or
other construction error; 3 unknown key or preset; 4 value out of range;
5 missing required field.
"""

from __future__ import annotations

import argparse
import sys
import warnings

from .compression import parse_compressor
from .config import PRESETS, ConfigError, ExperimentConfig, RangeError, config_to_text, parse_config
from .sweep import run_one, run_sweep
from .theory import safe_step_sizes, theory_constants
from .topology import make_topology

__all__ = ["main", "build_parser"]

RUN_FLAGS = {
    "algo": str, "n": int, "topology": str, "compressor": str, "eta": float, "gamma": float,
    "beta": float, "b0": str, "batch": int, "iters": int, "seed": int, "stride": int,
    "out": str, "workers": int,
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    for name, kind in RUN_FLAGS.items():
        p.add_argument(f"--{name}", type=kind, default=None)
    p.add_argument("--preset", default=None, help="named preset; see `preset list`")
    p.add_argument("--config", default=None, help="flat key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="docom", description="Decentralized compressed optimization simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment")
    _add_config_flags(p)

    p = sub.add_parser("sweep", help="run several experiments and combine their plots")
    _add_config_flags(p)
    p.add_argument("--presets", default=None, help="comma-separated preset names (one run each)")
    p.add_argument("--algos", default=None, help="comma-separated algorithms applied to the base config")
    p.add_argument("--seeds", default=None, help="comma-separated seeds")
    p.add_argument("--jobs", type=int, default=1, help="runs executed concurrently")
    p.add_argument("--x-axis", choices=("iteration", "floats"), default="floats")

    p = sub.add_parser("preset", help="inspect presets")
    psub = p.add_subparsers(dest="preset_command", required=True)
    psub.add_parser("list", help="list preset names and their settings")
    show = psub.add_parser("show", help="print the fully resolved config of a preset")
    show.add_argument("name")

    p = sub.add_parser("topology", help="inspect mixing matrices")
    tsub = p.add_subparsers(dest="topology_command", required=True)
    insp = tsub.add_parser("inspect", help="print n, rho and omega_bar")
    insp.add_argument("--topology", default="ring", help="ring, complete or file:<path>")
    insp.add_argument("--n", type=int, default=25)

    p = sub.add_parser("stepsizes", help="safe step sizes and analysis constants")
    p.add_argument("--L", type=float, required=True, help="smoothness constant")
    p.add_argument("--beta", type=float, required=True, help="momentum parameter in (0, 1)")
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--omega-bar", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--topology", default=None, help="derive n, rho, omega_bar from a topology")
    p.add_argument("--compressor", default=None, help="derive delta from a compressor spec (needs --d)")
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--eta", type=float, default=None, help="also evaluate constants at this eta")
    p.add_argument("--gamma", type=float, default=None, help="also evaluate constants at this gamma")
    return parser


def _overrides(args) -> dict:
    out = {name: getattr(args, name) for name in RUN_FLAGS if getattr(args, name, None) is not None}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _resolve(args, preset=None, defaults=None) -> ExperimentConfig:
    overrides = _overrides(args)
    for key, value in (defaults or {}).items():
        overrides.setdefault(key, value)
    return parse_config(args.config, overrides, preset or args.preset)


def _cmd_run(args) -> int:
    cfg = _resolve(args)
    result = run_one(cfg, cfg.out)
    if not result.ok:
        print(f"{result.label}: {result.status}: {result.error}", file=sys.stderr)
        return 1 if result.status == "diverged" else 2
    last = result.records[-1]
    print(f"{result.label}: t={last.iter} worst_loss={last.worst_loss:.6g} consensus_gap={last.consensus_gap:.6g} "
          f"grad_norm_sq={last.grad_norm_sq:.6g} -> {cfg.out}")
    return 0


def _split(text):
    return [s.strip() for s in text.split(",") if s.strip()] if text else []


def _cmd_sweep(args) -> int:
    presets = _split(args.presets) or [args.preset]
    algos = _split(args.algos)
    # --algos stands in for a missing --algo; each run then replaces it
    base = [_resolve(args, p, {"algo": algos[0]} if algos and p is None else None) for p in presets]
    if algos:
        base = [cfg.replace(algo=a) for cfg in base for a in algos]
    seeds = [int(s) for s in _split(args.seeds)]
    if seeds:
        base = [cfg.replace(seed=s) for cfg in base for s in seeds]
    out = args.out or "runs/sweep"
    results = run_sweep(base, out, max_workers=args.jobs, x_axis=args.x_axis)
    for r in results:
        tail = f"worst_loss={r.records[-1].worst_loss:.6g}" if r.ok else r.error
        print(f"{r.label}: {r.status} {tail}")
    print(f"summary -> {out}/summary.csv")
    return 0 if all(r.ok for r in results) else 1


def _cmd_preset(args) -> int:
    if args.preset_command == "list":
        for name, values in PRESETS.items():
            settings = " ".join(f"{k}={v}" for k, v in values.items())
            print(f"{name}: {settings}")
        return 0
    if args.name not in PRESETS:
        raise ConfigError(f"unknown preset {args.name!r}")
    print(config_to_text(parse_config(preset=args.name)), end="")
    return 0


def _cmd_topology(args) -> int:
    topo = make_topology(args.topology, args.n)
    for key, value in topo.summary().items():
        print(f"{key} = {value}")
    return 0


def _cmd_stepsizes(args) -> int:
    rho, omega_bar, n, delta = args.rho, args.omega_bar, args.n, args.delta
    if args.topology is not None:
        if n is None:
            raise RangeError("--topology needs --n")
        topo = make_topology(args.topology, n)
        rho, omega_bar = topo.rho, topo.omega_bar
    if args.compressor is not None:
        if args.d is None:
            raise RangeError("--compressor needs --d")
        delta = parse_compressor(args.compressor, args.d).delta
    missing = [name for name, v in (("rho", rho), ("omega-bar", omega_bar), ("delta", delta), ("n", n)) if v is None]
    if missing:
        raise RangeError("missing " + ", ".join(f"--{m}" for m in missing))
    eta_max, gamma_max = safe_step_sizes(args.L, rho, delta, omega_bar, n, args.beta)
    print(f"rho = {rho!r}")
    print(f"omega_bar = {omega_bar!r}")
    print(f"delta = {delta!r}")
    print(f"gamma_max = {gamma_max!r}")
    print(f"eta_max = {eta_max!r}")
    eta = args.eta if args.eta is not None else eta_max
    gamma = args.gamma if args.gamma is not None else gamma_max
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        k = theory_constants(args.L, rho, delta, omega_bar, n, args.beta, eta, gamma)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    for key in ("eta", "gamma", "beta_bar", "C_sigma", "C_gbar", "a", "b", "c"):
        print(f"{key} = {getattr(k, key)!r}")
    return 0


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "preset": _cmd_preset, "topology": _cmd_topology, "stepsizes": _cmd_stepsizes}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
