"""Command line entry point: ``wncs {gen,train,eval,bench,sweep}``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from . import channel, nn, plant
from .config import ConfigError, ExperimentConfig, load_config
from .drl import TrainingDivergence, train
from .harness import (COLUMNS, AgentPolicy, build_policy, evaluate,
                      parse_scales, run_benchmark_suite, run_sweep, world_from_config)
from .io import (LOG_COLUMNS, FormatError, load_agent, load_world, save_agent, save_world,
                 write_csv)
from .lqr import ConvergenceError, riccati_standard

CONTRACT_ERRORS = (ConfigError, FormatError, channel.ContractError, nn.ContractError,
                   plant.ParameterError, ValueError, OSError)

ROLLOUT_COLUMNS = ("episode", "slot", "est_cost", "ctrl_cost", "state_cost", "total",
                   "tr_p_est", "innovation_norm", "allocation")


def _dims(text):
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected K,M,N,L integers, got {text!r}")
    if len(vals) != 4:
        raise argparse.ArgumentTypeError(f"expected four values K,M,N,L, got {text!r}")
    return vals


def build_parser():
    p = argparse.ArgumentParser(prog="wncs", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file whose keys mirror ExperimentConfig")
        sp.add_argument("--seed", type=int, help="world seed for gen, training seed for train, "
                                                 "evaluation seed otherwise")
        sp.add_argument("--dims", type=_dims, help="K,M,N,L")
        sp.add_argument("--out", default=".", help="output directory")
        return sp

    gen = common(sub.add_parser("gen", help="write a world file"))
    gen.add_argument("--name", default="world.json")

    tr = common(sub.add_parser("train", help="train an agent"))
    tr.add_argument("--world", help="world file (overrides --dims)")
    tr.add_argument("--episodes", type=int)
    tr.add_argument("--steps", type=int)
    tr.add_argument("--variant", default="gca",
                    choices=("gca", "td3_ctrl", "td3_priority", "td3_priority_lqr"))
    tr.add_argument("--scheduler", help="external scheduler for td3_ctrl")
    tr.add_argument("--resume", help="continue from this checkpoint")

    ev = common(sub.add_parser("eval", help="evaluate a checkpoint or a benchmark pair"))
    ev.add_argument("--world", help="world file (benchmark pairs only)")
    ev.add_argument("--checkpoint")
    ev.add_argument("--scheduler", default="random")
    ev.add_argument("--controller", default="standard_lqr")
    ev.add_argument("--episodes", type=int)
    ev.add_argument("--steps", type=int)

    be = common(sub.add_parser("bench", help="benchmark table"))
    be.add_argument("--world", help="world file (overrides --dims)")
    be.add_argument("--episodes", type=int, help="training episodes for learned pairs")
    be.add_argument("--steps", type=int, help="slots per episode")
    be.add_argument("--pairs", help="'sched:ctrl,sched:ctrl'; default from config")

    sw = common(sub.add_parser("sweep", help="benchmark table per system scale"))
    sw.add_argument("--scales", required=True, help="'L,N,M;L,N,M'")
    sw.add_argument("--episodes", type=int)
    sw.add_argument("--steps", type=int)
    sw.add_argument("--pairs")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.dims:
        K, M, N, L = args.dims
        cfg = replace(cfg, K=K, M=M, N=N, L=L)
    if getattr(args, "episodes", None) is not None:
        cfg = replace(cfg, td3=replace(cfg.td3, episodes=args.episodes))
    if getattr(args, "steps", None) is not None:
        cfg = replace(cfg, eval_steps=args.steps, td3=replace(cfg.td3, steps=args.steps))
    if getattr(args, "pairs", None):
        pairs = []
        for item in args.pairs.split(","):
            if ":" not in item:
                raise ConfigError("pairs", f"expected scheduler:controller, got {item!r}")
            pairs.append(tuple(item.split(":", 1)))
        cfg = replace(cfg, pairs=tuple(pairs))
    cfg.validate()
    return cfg


def _world(args, cfg):
    if getattr(args, "world", None):
        return load_world(args.world)
    return world_from_config(cfg)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen(args):
    cfg = _config(args)
    if args.seed is not None:
        cfg = replace(cfg, world_seed=args.seed)
    path = _out(args) / args.name
    save_world(path, world_from_config(cfg), seed=cfg.world_seed)
    print(path)
    return 0


def cmd_train(args):
    cfg = _config(args)
    if args.seed is not None:
        cfg = replace(cfg, td3=replace(cfg.td3, seed=args.seed))
    out = _out(args)
    agent = None
    if args.resume:
        agent = load_agent(args.resume)
        world = agent.world
    else:
        world = _world(args, cfg)
    gain = riccati_standard(world.system, cfg.td3.beta) if args.variant == "td3_priority_lqr" else None
    log_rows = []

    def progress(row):
        log_rows.append(row)
        print(f"episode {row['episode']:5d}  cost {row['cost']:.2f}", flush=True)

    meta = {"config_hash": cfg.config_hash(), "variant": args.variant, "seed": cfg.td3.seed}
    try:
        agent, log = train(world, cfg.td3, args.variant, scheduler=args.scheduler, lqr_gain=gain,
                           progress=progress, agent=agent)
    except TrainingDivergence as exc:
        if exc.agent is not None:
            save_agent(out / "diverged.npz", exc.agent)
        write_csv(out / "train_log.csv", log_rows, LOG_COLUMNS, meta)
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    save_agent(out / "agent.npz", agent)
    write_csv(out / "train_log.csv", log, LOG_COLUMNS, meta)
    return 0


def cmd_eval(args):
    cfg = _config(args)
    if args.episodes is not None:
        cfg = replace(cfg, eval_episodes=args.episodes)
    seed = cfg.eval_seed if args.seed is None else args.seed
    if args.checkpoint:
        agent = load_agent(args.checkpoint)
        world, policy, label = agent.world, AgentPolicy(agent), ("agent", args.checkpoint)
    else:
        world = _world(args, cfg)
        policy = build_policy(world, cfg, args.scheduler, args.controller)
        label = (args.scheduler, args.controller)
    steps = cfg.eval_steps
    record = []
    rep = evaluate(world, policy, cfg.eval_episodes, steps, seed, cfg.td3.beta, cfg.x_max, record)
    out = _out(args)
    report = rep.to_dict()
    report["policy"] = list(label)
    report["config_hash"] = cfg.config_hash()
    (out / "eval_report.json").write_text(json.dumps(report, indent=1) + "\n")
    write_csv(out / "rollout.csv", record, ROLLOUT_COLUMNS,
              {"config_hash": cfg.config_hash(), "seed": seed})
    print(f"mean cost {rep.mean_cost:.3f} +/- {rep.ci_halfwidth:.3f}")
    return 0


def cmd_bench(args):
    cfg = _config(args)
    if args.seed is not None:
        cfg = replace(cfg, eval_seed=args.seed)
    rows = run_benchmark_suite(cfg, world=_world(args, cfg))
    write_csv(_out(args) / "bench.csv", rows, COLUMNS, {"config_hash": cfg.config_hash()})
    for r in rows:
        print(f"{r['scheduler']:>14s} {r['controller']:>14s} {r['overall']}")
    return 0


def cmd_sweep(args):
    cfg = _config(args)
    if args.seed is not None:
        cfg = replace(cfg, eval_seed=args.seed)
    scales = parse_scales(args.scales)
    if not scales:
        raise ConfigError("scales", "no scale given")
    blocks = run_sweep(cfg, scales)
    rows = [r for _, block in blocks for r in block]
    write_csv(_out(args) / "sweep.csv", rows, ("scale",) + COLUMNS, {"config_hash": cfg.config_hash()})
    for scale, block in blocks:
        print(f"scale (L,N,M)={scale}: {len(block)} rows")
    return 0


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "bench": cmd_bench, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"wncs {args.command}: configuration error in '{exc.key}': {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"wncs {args.command}: Riccati recursion did not converge: {exc}", file=sys.stderr)
        return 2
    except CONTRACT_ERRORS as exc:
        print(f"wncs {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
