"""CSV emission for traces, sweeps, benchmarks and training logs.

Every file starts with a schema-version comment line so downstream readers
can detect drift. Floats are written with repr (shortest round-trip form),
which makes identical runs produce byte-identical files.
"""

from __future__ import annotations

from typing import Any, Iterable, Sequence, TextIO

TRACE_SCHEMA = "# stepnet-trace-v1"
FLOW_SERIES_SCHEMA = "# stepnet-flow-series-v1"
SWEEP_SCHEMA = "# stepnet-sweep-v1"
BENCH_SCHEMA = "# stepnet-bench-v1"
TRAIN_LOG_SCHEMA = "# stepnet-train-log-v1"

EPISODES_SCHEMA = "# stepnet-episodes-v1"

SWEEP_HEADER = "dimension,value,seed,norm_throughput,mean_queue_delay_ms,loss_rate,ep_reward,ep_len"
BENCH_HEADER = "workers,seed,wall_ms,steps_per_sec"
TRAIN_LOG_HEADER = "wall_ms,steps,episodes,mean_ep_reward,mean_ep_len,loss,epsilon"
FLOW_SERIES_HEADER = "t_ns,flow,cwnd,srtt_ns,inflight,queue_occupancy,acked,lost"


def format_value(value: Any) -> str:
    """One CSV cell; floats via repr so they round-trip exactly."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_action(action: Any) -> str:
    """Actions never contain commas: vectors are joined with semicolons."""
    if action is None:
        return ""
    if isinstance(action, (list, tuple)):
        return ";".join(format_value(float(a)) for a in action)
    return format_value(action)


class EpisodeTraceWriter:
    """Per-step, per-agent trace: step,agent_id,action,reward,obs_*,done.

    Step 0 carries the reset observations and leaves action and reward
    empty; every later row pairs an agent's action with its outcome.
    """

    def __init__(self, stream: TextIO, obs_dim: int):
        self._stream = stream
        self.obs_dim = obs_dim
        obs_cols = ",".join(f"obs_{i}" for i in range(obs_dim))
        stream.write(TRACE_SCHEMA + "\n")
        stream.write(f"step,agent_id,action,reward,{obs_cols},done\n")

    def _row(self, step, agent_id, action, reward, obs, done) -> None:
        cells = [
            str(step),
            agent_id,
            format_action(action),
            "" if reward is None else format_value(float(reward)),
        ]
        cells.extend(format_value(float(v)) for v in obs)
        cells.append(format_value(bool(done)))
        self._stream.write(",".join(cells) + "\n")

    def reset_rows(self, observations: dict) -> None:
        for agent_id in sorted(observations):
            self._row(0, agent_id, None, None, observations[agent_id], False)

    def step_rows(self, step: int, actions: dict, result) -> None:
        for agent_id in sorted(result.observations):
            self._row(
                step,
                agent_id,
                actions.get(agent_id),
                result.rewards.get(agent_id),
                result.observations[agent_id],
                result.dones.get(agent_id, False),
            )


def _write_table(stream: TextIO, schema: str, header: str, rows: Iterable[Sequence]) -> None:
    stream.write(schema + "\n")
    stream.write(header + "\n")
    for row in rows:
        stream.write(",".join(format_value(cell) for cell in row) + "\n")


def write_flow_series(stream: TextIO, rows: Iterable[Sequence]) -> None:
    _write_table(stream, FLOW_SERIES_SCHEMA, FLOW_SERIES_HEADER, rows)


def write_sweep(stream: TextIO, rows: Iterable[Sequence]) -> None:
    _write_table(stream, SWEEP_SCHEMA, SWEEP_HEADER, rows)


def write_bench(stream: TextIO, rows: Iterable[Sequence]) -> None:
    _write_table(stream, BENCH_SCHEMA, BENCH_HEADER, rows)


def write_episodes(stream: TextIO, episodes) -> None:
    """One row per finished episode, including any sampled scenario params."""
    param_keys: list[str] = []
    for ep in episodes:
        for key in ep.params:
            if key not in param_keys:
                param_keys.append(key)
    header = "episode,seed,reward,length" + "".join("," + k for k in param_keys)
    rows = [
        (k, ep.seed, ep.reward, ep.length, *(ep.params.get(key, "") for key in param_keys))
        for k, ep in enumerate(episodes)
    ]
    _write_table(stream, EPISODES_SCHEMA, header, rows)


def write_training_log(stream: TextIO, log_rows) -> None:
    rows = [
        (
            row.wall_ms,
            row.steps,
            row.episodes,
            row.mean_ep_reward,
            row.mean_ep_len,
            row.loss,
            row.epsilon,
        )
        for row in log_rows
    ]
    _write_table(stream, TRAIN_LOG_SCHEMA, TRAIN_LOG_HEADER, rows)
