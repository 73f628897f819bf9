"""Command-line front end: run one config, expand a preset batch, validate a
config's decisions slot by slot, or report the small-instance optimum."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .dispatch import InstanceTooLarge, SlotState, dispatch, offline_optimum
from .rates import CapacityDrawOracle, PhysicalRateOracle
from .sim import LinkGainProcess, build_topology, load_config, preset, run, run_batch


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    result = run(config)
    out = Path(args.out) if args.out else Path(args.config).with_suffix(".metrics.csv")
    result.write_csv(out)
    print(f"wrote {out} ({len(result.rows)} rows, throughput {result.throughput_bps:.3f} bps)")
    return 0


def _cmd_preset(args: argparse.Namespace) -> int:
    batch = preset(args.name, seeds=args.seeds)
    results = run_batch(batch, args.out)
    print(f"{args.name}: {len(results)} runs -> {Path(args.out) / args.name}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    config = replace(load_config(args.config), debug_validate=True)
    result = run(config)
    print(f"{config.slots} slots validated, {result.violations} violation(s)")
    return 0 if result.violations == 0 else 1


def _cmd_oracle(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    topology = build_topology(config)
    cfg = config.spectrum()
    gains = LinkGainProcess(config, topology)
    gains.advance(0)
    # Single representative slot at the arrival-range midpoint.
    mid = sum(config.arrival_range_bits) / 2.0
    state = SlotState(
        avail={d.id: mid for d in topology.devices},
        fresh={d.id: mid for d in topology.devices},
    )
    if config.rate_oracle == "capacity_draw":
        import numpy as np

        rng = np.random.default_rng(config.seed)
        draws = {
            d.id: rng.uniform(*config.capacity_range_bps, size=cfg.n_subchannels)
            for d in topology.devices
        }
        oracle = CapacityDrawOracle(draws, cfg)
    else:
        oracle = PhysicalRateOracle(gains, cfg)
    try:
        value, _ = offline_optimum(topology, cfg, state, gains, oracle, config.dispatch_params())
    except InstanceTooLarge as exc:
        print(f"instance too large for exhaustive search: {exc}")
        return 1
    decision = dispatch(topology, cfg, state, gains, oracle, config.dispatch_params())
    heuristic = sum(decision.a.values())
    ratio = heuristic / value if value > 0 else 1.0
    print(f"offline optimum: {value:.3f} bits")
    print(f"greedy pipeline: {heuristic:.3f} bits ({100 * ratio:.1f}% of optimum)")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="cflsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one config and write its metrics CSV")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", default=None)
    p_sim.set_defaults(func=_cmd_simulate)

    p_preset = sub.add_parser("preset", help="expand and run a study design")
    p_preset.add_argument("name", choices=["fig4", "fig5", "fig6", "fig7", "fig8"])
    p_preset.add_argument("--out", required=True)
    p_preset.add_argument("--seeds", type=int, default=5)
    p_preset.set_defaults(func=_cmd_preset)

    p_val = sub.add_parser("validate", help="run a config with per-slot feasibility checks")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=_cmd_validate)

    p_orc = sub.add_parser("oracle", help="small-instance offline optimum report")
    p_orc.add_argument("--config", required=True)
    p_orc.set_defaults(func=_cmd_oracle)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
