"""Command line entry point: ``qma simulate | markov | replay-example | validate-config``."""

from __future__ import annotations

import argparse
import csv
import os
import sys
from decimal import Decimal, InvalidOperation

import numpy as np

from . import markov
from .config import PRESETS, ConfigError, ScenarioConfig, load_config, preset
from .metrics import confidence_interval
from .replay import format_tables, replay
from .simulation import run

SEED_ENV = "QMA_SEED"


def parse_range(text: str) -> list[float]:
    """``a:b:step`` (inclusive, decimal-exact) or a comma separated list."""
    try:
        if ":" in text:
            parts = [Decimal(x) for x in text.split(":")]
            if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
                raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}")
            start, stop, step = parts
            out = []
            x = start
            while x <= stop:
                out.append(float(x))
                x += step
            return out
        return [float(Decimal(x)) for x in text.split(",")]
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}") from None


def _scenario(args) -> ScenarioConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = preset(args.preset)
    changes: dict = {}
    if args.mac:
        changes["mac"] = args.mac
    if args.reps is not None:
        changes["repetitions"] = args.reps
    if args.duration is not None:
        changes["duration_s"] = args.duration
    if changes:
        cfg = cfg.replace(**changes)
    lc = cfg.learning
    for name in ("alpha", "gamma", "xi"):
        v = getattr(args, name)
        if v is not None:
            setattr(lc, name, v)
    if args.gamma is not None and not 0.0 <= args.gamma < 1.0:
        raise ConfigError("learning.gamma", "gamma must satisfy 0 <= gamma < 1")
    if args.alpha is not None and not 0.0 <= args.alpha <= 1.0:
        raise ConfigError("learning.alpha", "alpha must lie in [0, 1]")
    if args.xi is not None and args.xi < 0:
        raise ConfigError("learning.xi", "xi must be >= 0")
    if args.delta is not None:
        if args.delta <= 0:
            raise ConfigError("traffic.rate", "delta must be > 0")
        cfg.traffic.rate = args.delta
    if args.packets is not None:
        cfg.traffic.budget = args.packets
    return cfg


def _fmt_ci(samples) -> str:
    vals = [x for x in samples if x is not None]
    if not vals:
        return "n/a"
    mean, half = confidence_interval(vals)
    return f"{mean:.4f}" + ("" if half is None else f" ± {half:.4f}")


def cmd_simulate(args) -> int:
    cfg = _scenario(args)
    seed = args.seed if args.seed is not None else cfg.seed
    if os.environ.get(SEED_ENV):
        seed = int(os.environ[SEED_ENV])
    out = args.out or cfg.output.dir
    pdrs, delays = [], []
    for rep in range(cfg.repetitions):
        rec = run(cfg, seed + rep)
        pdrs.append(rec.pdr)
        delays.append(rec.aggregate.get("mean_delay_s"))
        if out:
            rec.write(out, cfg.output.formats)
        if args.verbose:
            print(f"seed {seed + rep}: pdr={rec.pdr} frames={rec.frames}")
    print(f"scenario {cfg.name}  mac {cfg.mac}  reps {cfg.repetitions}  seed {seed}")
    print(f"PDR      {_fmt_ci(pdrs)}  (95% CI)")
    if any(d is not None for d in delays):
        print(f"delay_s  {_fmt_ci(delays)}  (95% CI)")
    return 0


def cmd_markov(args) -> int:
    rng = np.random.default_rng(args.seed)
    w = csv.writer(sys.stdout, lineterminator="\n")
    header = ["p", "expected_messages"]
    if args.mc:
        header += ["mc_mean", "mc_se"]
    w.writerow(header)
    for p in args.p:
        row = [f"{p:g}", f"{markov.expected_messages(p, args.variant):.8f}"]
        if args.mc:
            mean, se = markov.simulate_handshake_stats(p, args.mc, rng, args.variant)
            row += [f"{mean:.6f}", f"{se:.6f}"]
        w.writerow(row)
    return 0


def cmd_replay(args) -> int:
    code = 0
    modes = (True, False) if args.mode == "both" else (args.mode == "fixed",)
    for fixed in modes:
        res = replay(fixed_point=fixed)
        print(f"== {'fixed-point' if fixed else 'float'}")
        print(format_tables(res))
        bad = res.mismatches()
        for line in bad:
            print(f"MISMATCH {line}")
        print("all checkpoints match" if not bad else f"{len(bad)} mismatches")
        code |= bool(bad)
    return code


def cmd_validate(args) -> int:
    cfg = load_config(args.file)
    print(f"ok: {cfg.name} ({len(cfg.topology.positions)} nodes, mac {cfg.mac})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qma", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a scenario for one or more seeds")
    src = s.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESETS), default="hidden-node")
    src.add_argument("--config", help="JSON scenario file")
    s.add_argument("--delta", type=float, help="packet rate per source node (pkt/s)")
    s.add_argument("--packets", type=int, help="packets per source node")
    s.add_argument("--mac", choices=["qma", "csma_slotted", "csma_unslotted"])
    s.add_argument("--reps", type=int)
    s.add_argument("--alpha", type=float)
    s.add_argument("--gamma", type=float)
    s.add_argument("--xi", type=float)
    s.add_argument("--duration", type=float, help="simulated seconds")
    s.add_argument("--seed", type=int, help=f"base seed ({SEED_ENV} overrides)")
    s.add_argument("--out", help="directory for per-run JSON/CSV files")
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(fn=cmd_simulate)

    m = sub.add_parser("markov", help="expected handshake messages per allocation")
    m.add_argument("--p", type=parse_range, default=parse_range("0.1:1.0:0.1"),
                   help="success probabilities, e.g. 0.1:1.0:0.1 or 0.2,0.5")
    m.add_argument("--variant", choices=markov.VARIANTS, default="published")
    m.add_argument("--mc", type=int, default=0, help="also run N Monte-Carlo episodes")
    m.add_argument("--seed", type=int, default=1)
    m.set_defaults(fn=cmd_markov)

    r = sub.add_parser("replay-example", help="replay the scripted 3-node walkthrough")
    r.add_argument("--mode", choices=["fixed", "float", "both"], default="both")
    r.set_defaults(fn=cmd_replay)

    v = sub.add_parser("validate-config", help="check a scenario file")
    v.add_argument("file")
    v.set_defaults(fn=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
