"""Command line entry point: train, eval, bench and replay subcommands."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

from . import traces
from .config import ConfigError, load_config
from .env import Box, Discrete, Environment
from .errors import InvalidAction, StepnetError
from .trainer import (
    collect,
    derive_seed,
    evaluate,
    fit,
    load_checkpoint,
    resolve_trainer_config,
    save_checkpoint,
)

log = logging.getLogger("stepnet")

# sweep dimension name -> dumbbell config key
DIMENSIONS = {
    "bandwidth": "bandwidth_mbps",
    "rtt": "rtt_ms",
    "buffer": "buffer_pkts",
}

# fixed values for the non-swept dimensions: training-range means
SWEEP_FIXED_DEFAULTS = {"bandwidth_mbps": 96.0, "rtt_ms": 40.0, "buffer_pkts": 440}

DEFAULT_EVAL_EPISODES = 10
BENCH_SEEDS_PER_COUNT = 3


@dataclass(frozen=True)
class SweepSpec:
    """One evaluation sweep: vary one dimension, pin the other two."""

    dimension: str
    grid: tuple[float, ...]
    episodes: int
    fixed: dict[str, float]

    @classmethod
    def parse(cls, value: Any, path: str = "sweep") -> "SweepSpec":
        if not isinstance(value, Mapping):
            raise ConfigError(f"{path}: expected a mapping")
        known = {"dimension", "grid", "episodes", *SWEEP_FIXED_DEFAULTS}
        unknown = set(value) - known
        if unknown:
            raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
        dimension = value.get("dimension")
        if dimension not in DIMENSIONS:
            raise ConfigError(
                f"{path}.dimension: must be one of {sorted(DIMENSIONS)}, got {dimension!r}"
            )
        grid = value.get("grid")
        if not isinstance(grid, list) or not grid:
            raise ConfigError(f"{path}.grid: must be a non-empty list")
        points = []
        for g in grid:
            if isinstance(g, bool) or not isinstance(g, (int, float)) or g <= 0:
                raise ConfigError(f"{path}.grid: entries must be positive numbers")
            points.append(float(g))
        episodes = value.get("episodes", DEFAULT_EVAL_EPISODES)
        if isinstance(episodes, bool) or not isinstance(episodes, int) or episodes < 1:
            raise ConfigError(f"{path}.episodes: must be a positive integer")
        fixed = dict(SWEEP_FIXED_DEFAULTS)
        for key in SWEEP_FIXED_DEFAULTS:
            if key in value:
                raw = value[key]
                if isinstance(raw, bool) or not isinstance(raw, (int, float)) or raw <= 0:
                    raise ConfigError(f"{path}.{key}: must be a positive number")
                fixed[key] = float(raw)
        return cls(dimension, tuple(sorted(points)), episodes, fixed)

    def point_config(self, base_raw: Mapping[str, Any], value: float) -> dict:
        """Environment config for one grid point."""
        document = {k: v for k, v in base_raw.items() if k not in ("sweep", "trainer")}
        dumbbell = dict(document.get("dumbbell", {}) or {})
        for key, fixed_value in self.fixed.items():
            dumbbell[key] = fixed_value
        dumbbell[DIMENSIONS[self.dimension]] = value
        document["dumbbell"] = dumbbell
        document["scenario"] = "dumbbell"
        return document


def _convert_action(value: Any, space: Any, where: str) -> Any:
    if isinstance(space, Discrete):
        if isinstance(value, bool) or not isinstance(value, int):
            raise InvalidAction(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(space, Box):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = [value]
        if not isinstance(value, list):
            raise InvalidAction(f"{where}: expected a number or list, got {value!r}")
        return tuple(float(v) for v in value)
    raise InvalidAction(f"{where}: unsupported action space")


def cmd_train(args: argparse.Namespace) -> int:
    env_cfg = load_config(args.config)
    cfg = resolve_trainer_config(
        env_cfg, seed=args.seed, workers=args.workers, total_steps=args.steps
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(row) -> None:
        log.info(
            "steps=%d episodes=%d mean_reward=%.2f mean_len=%.1f loss=%.5f eps=%.3f",
            row.steps, row.episodes, row.mean_ep_reward, row.mean_ep_len,
            row.loss, row.epsilon,
        )

    result = fit(env_cfg, cfg, progress=progress)
    ckpt_path = out / "checkpoint.json"
    save_checkpoint(ckpt_path, result.checkpoint)
    with open(out / "training_log.csv", "w", encoding="utf-8") as fh:
        traces.write_training_log(fh, result.log)
    with open(out / "episodes.csv", "w", encoding="utf-8") as fh:
        traces.write_episodes(fh, result.episodes)
    print(
        f"trained {result.checkpoint.env_steps} steps "
        f"({len(result.episodes)} episodes, {result.faults} faults) "
        f"-> {ckpt_path}"
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    env_cfg = load_config(args.config)
    if not args.checkpoint:
        print("error: eval requires --checkpoint <path>", file=sys.stderr)
        return 1
    ckpt = load_checkpoint(args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else env_cfg.seed

    sweep_section = env_cfg.raw.get("sweep")
    if sweep_section is not None:
        spec = SweepSpec.parse(sweep_section)
        rows = []
        for value in spec.grid:
            point = spec.point_config(env_cfg.raw, value)
            stats = evaluate(
                point, ckpt, spec.episodes,
                seed=derive_seed(seed, f"sweep:{spec.dimension}:{value}"),
            )
            for ep in stats:
                m = ep.metrics
                rows.append((
                    spec.dimension, value, ep.seed,
                    m.get("norm_throughput", float("nan")),
                    m.get("mean_queue_delay_ms", float("nan")),
                    m.get("loss_rate", float("nan")),
                    ep.reward, ep.length,
                ))
            log.info("sweep %s=%s: %d episodes", spec.dimension, value, len(stats))
        path = out / "sweep.csv"
        with open(path, "w", encoding="utf-8") as fh:
            traces.write_sweep(fh, rows)
        print(f"wrote {len(rows)} sweep rows -> {path}")
        return 0

    episodes = args.episodes if args.episodes is not None else DEFAULT_EVAL_EPISODES
    record_series = env_cfg.scenario == "dumbbell"
    stats = evaluate(env_cfg, ckpt, episodes, seed=seed, record_series=record_series)
    rows = []
    for k, ep in enumerate(stats):
        m = ep.metrics
        rows.append((
            "scenario", 0.0, ep.seed,
            m.get("norm_throughput", float("nan")),
            m.get("mean_queue_delay_ms", float("nan")),
            m.get("loss_rate", float("nan")),
            ep.reward, ep.length,
        ))
        if ep.series is not None:
            with open(out / f"flow_series_ep{k}.csv", "w", encoding="utf-8") as fh:
                traces.write_flow_series(fh, ep.series)
    path = out / "eval.csv"
    with open(path, "w", encoding="utf-8") as fh:
        traces.write_sweep(fh, rows)
    print(f"evaluated {len(stats)} episodes -> {path}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    try:
        counts = [int(w) for w in str(args.workers).split(",") if w.strip()]
    except ValueError:
        print(f"error: --workers must be a comma list of integers, got {args.workers!r}",
              file=sys.stderr)
        return 1
    if not counts or any(c < 1 for c in counts):
        print("error: worker counts must be >= 1", file=sys.stderr)
        return 1
    if args.steps < 1:
        print(f"error: step budget must be >= 1, got {args.steps}", file=sys.stderr)
        return 1
    if args.config:
        env_cfg = load_config(args.config)
        config: Any = env_cfg.raw or env_cfg
    else:
        config = {"scenario": "cartpole", "seed": 0}
    base_seed = args.seed if args.seed is not None else 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for n in counts:
        for k in range(BENCH_SEEDS_PER_COUNT):
            seed = base_seed + k
            res = collect(config, args.steps, workers=n, seed=seed, epsilon=1.0)
            rows.append((n, seed, res.wall_ms, res.steps_per_sec))
            log.info("bench workers=%d seed=%d: %.0f steps/s", n, seed, res.steps_per_sec)
    path = out / "bench.csv"
    with open(path, "w", encoding="utf-8") as fh:
        traces.write_bench(fh, rows)
    print(f"wrote {len(rows)} bench rows -> {path}")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    env_cfg = load_config(args.config)
    with open(args.script, "r", encoding="utf-8") as fh:
        try:
            script = json.load(fh)
        except json.JSONDecodeError as exc:
            print(f"error: {args.script}: invalid JSON ({exc})", file=sys.stderr)
            return 1
    if not isinstance(script, list) or any(not isinstance(e, Mapping) for e in script):
        print(f"error: {args.script}: expected a list of agent-to-action objects",
              file=sys.stderr)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    env = Environment(env_cfg, seed=args.seed)
    observations = env.reset()
    path = out / "trace.csv"
    truncated = False
    with open(path, "w", encoding="utf-8") as fh:
        writer = traces.EpisodeTraceWriter(fh, env.observation_space.size)
        writer.reset_rows(observations)
        step = 0
        done = False
        for index, entry in enumerate(script):
            actions = {}
            for agent_id in env.agents:
                if agent_id not in entry:
                    print(
                        f"error: script step {index}: no action for due agent "
                        f"{agent_id!r}",
                        file=sys.stderr,
                    )
                    return 1
                actions[agent_id] = _convert_action(
                    entry[agent_id], env.action_space, f"script step {index}"
                )
            result = env.step(actions)
            step += 1
            writer.step_rows(step, actions, result)
            if result.episode_done:
                done = True
                break
        truncated = not done
    if truncated:
        log.warning("script exhausted after %d steps; episode truncated", step)
        print(f"note: script exhausted after {step} steps; episode truncated")
    print(f"wrote trace ({step} steps) -> {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stepnet",
        description="Packet-level network simulation with an in-loop RL interface.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
        p.add_argument("--config", required=config_required,
                       help="path to a JSON scenario config")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--out", default=".", help="output directory")

    train = sub.add_parser("train", help="train a DQN policy")
    common(train)
    train.add_argument("--workers", type=int, default=None, help="rollout workers")
    train.add_argument("--steps", type=int, default=None, help="total step budget")
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint, optionally over a sweep")
    common(ev)
    ev.add_argument("--checkpoint", default=None, help="path to a policy checkpoint")
    ev.add_argument("--episodes", type=int, default=None, help="episodes per point")
    ev.set_defaults(func=cmd_eval)

    bench = sub.add_parser("bench", help="measure collection throughput")
    common(bench, config_required=False)
    bench.add_argument("--workers", default="1,2,4",
                       help="comma list of worker counts (default 1,2,4)")
    bench.add_argument("--steps", type=int, default=100_000,
                       help="transitions per run (default 100000)")
    bench.set_defaults(func=cmd_bench)

    replay = sub.add_parser("replay", help="run a scripted episode and dump its trace")
    common(replay)
    replay.add_argument("--script", required=True,
                        help="JSON file: list of per-step agent-to-action objects")
    replay.set_defaults(func=cmd_replay)
    return parser


def _configure_logging() -> None:
    level_name = os.environ.get("STEPNET_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def main(argv: Optional[list[str]] = None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        name = exc.filename if exc.filename else str(exc)
        print(f"error: file not found: {name}", file=sys.stderr)
        return 2
    except StepnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
