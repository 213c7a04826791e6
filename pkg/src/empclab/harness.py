"""Training/evaluation harness: the outer RL loop, metrics, and file I/O.

The loop alternates action selection, one environment step, a replay insert
and one batch update, resetting the environment every episode.  Metrics per
episode: return R, accumulated stage cost E_mpc, trigger frequency A_f,
forced-trigger count, and wall-clock solve time.  The identity
``R = -(E_mpc + rho_c * A_f * T_e)`` holds on every episode by construction.

Two CSVs are written per run: ``curve.csv`` (the learning curve; strictly
deterministic for a fixed seed) and ``metrics.csv`` (adds wall-clock solve
milliseconds, which are machine-dependent).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agents import make_agent
from .config import LabConfig
from .dynamics import VehicleModel
from .empc import TriggerEnv, threshold_policy
from .errors import EmptyTraceError
from .nn import read_checkpoint, write_checkpoint

CURVE_FIELDS = ("episode", "step", "episodic_return", "e_mpc", "a_f",
                "forced_triggers", "loss", "explore")
METRIC_FIELDS = ("episode", "episodic_return", "e_mpc", "a_f",
                 "forced_triggers", "solve_ms")


@dataclass
class EpisodeMetrics:
    """Aggregates of one episode (or means over several)."""

    episodic_return: float
    e_mpc: float
    a_f: float
    forced_triggers: float
    solve_seconds: float = 0.0
    steps: int = 0


def compute_metrics(stage_costs, actions, rho_c: float, dt: float,
                    forced: int = 0, solve_seconds: float = 0.0) -> EpisodeMetrics:
    """Fold a per-step trace of (stage cost, effective trigger) into metrics."""
    stage_costs = np.asarray(stage_costs, dtype=float)
    actions = np.asarray(actions, dtype=float)
    if stage_costs.size == 0 or stage_costs.shape != actions.shape:
        raise EmptyTraceError("trace must be non-empty with matching lengths")
    e_mpc = float(np.sum(stage_costs) * dt)
    a_f = float(np.sum(actions) / len(actions))
    episodic_return = float(np.sum(-stage_costs * dt - rho_c * actions))
    return EpisodeMetrics(episodic_return=episodic_return, e_mpc=e_mpc,
                          a_f=a_f, forced_triggers=float(forced),
                          solve_seconds=solve_seconds,
                          steps=len(actions))


def mean_metrics(items: list[EpisodeMetrics]) -> EpisodeMetrics:
    return EpisodeMetrics(
        episodic_return=float(np.mean([m.episodic_return for m in items])),
        e_mpc=float(np.mean([m.e_mpc for m in items])),
        a_f=float(np.mean([m.a_f for m in items])),
        forced_triggers=float(np.mean([m.forced_triggers for m in items])),
        solve_seconds=float(np.mean([m.solve_seconds for m in items])),
        steps=items[0].steps)


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """Named independent RNG streams split from one root seed."""
    names = ("init", "exploration", "environment", "per")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(ss) for name, ss in zip(names, children)}


def build_env(config: LabConfig, rho_c: float | None = None,
              rng: np.random.Generator | None = None,
              record_trace: bool = False) -> TriggerEnv:
    model = VehicleModel(config.vehicle, config.train.dt)
    return TriggerEnv(model, config.ocp, config.empc,
                      rho_c=config.train.rho_c if rho_c is None else rho_c,
                      episode_steps=config.train.episode_steps,
                      rng=rng, record_trace=record_trace)


# -- simple policies -------------------------------------------------------------


class ConstantTriggerPolicy:
    """Always (1) or never (0) request a solve."""

    def __init__(self, action: int):
        self.action = int(action)

    def begin_episode(self):
        pass

    def act(self, obs, explore: bool = False) -> int:
        return self.action


class ThresholdTriggerPolicy:
    """Trigger on position deviation from the buffered prediction."""

    def __init__(self, env: TriggerEnv, threshold: float):
        self.env = env
        self.threshold = float(threshold)

    def begin_episode(self):
        pass

    def act(self, obs, explore: bool = False) -> int:
        return threshold_policy(self.env.buffer, self.env.x, self.threshold)


# -- episode runners ---------------------------------------------------------------


def run_episode(env: TriggerEnv, policy, explore: bool = False) -> EpisodeMetrics:
    """Roll one full episode; returns its metrics."""
    obs = env.reset()
    policy.begin_episode()
    stage_costs, triggers = [], []
    forced = 0
    done = False
    while not done:
        action = policy.act(obs, explore=explore)
        obs, _, done, info = env.step(action)
        stage_costs.append(info["stage_cost"])
        triggers.append(1 if info["solved"] else 0)
        forced += int(info["forced"])
    return compute_metrics(stage_costs, triggers, env.rho_c, env.dt,
                           forced=forced, solve_seconds=env.solve_seconds)


def evaluate(policy, env: TriggerEnv,
             episodes: int = 10) -> tuple[EpisodeMetrics, list[EpisodeMetrics]]:
    """Deterministic-policy evaluation; returns (mean, per-episode metrics)."""
    per_episode = [run_episode(env, policy, explore=False)
                   for _ in range(episodes)]
    return mean_metrics(per_episode), per_episode


# -- training ---------------------------------------------------------------------


@dataclass
class TrainResult:
    agent: object
    curve: list[dict]
    metrics: list[dict]
    env: TriggerEnv


def _write_csv(path, fields, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v
                             for v in (row[f] for f in fields)])


def train(config: LabConfig, out_dir: str | Path | None = None,
          progress: bool = False) -> TrainResult:
    """Run the full training loop for the configured agent.

    Off-policy agents run for ``train.steps`` environment steps; on-policy
    agents for ``train.episodes`` episodes.  Identical configs (and therefore
    seeds) reproduce the learning curve bit for bit.
    """
    streams = rng_streams(config.train.seed)
    env = build_env(config, rng=streams["environment"])
    agent = make_agent(config.agent, config.train, streams["init"],
                       streams["exploration"], streams["per"])
    on_policy = config.agent.kind.startswith("ppo")
    episode_budget = config.train.episodes if on_policy else float("inf")
    step_budget = None if on_policy else config.train.steps

    curve_rows, metric_rows = [], []
    obs = env.reset()
    agent.begin_episode()
    stage_costs, triggers, losses = [], [], []
    forced = 0
    episode = 0
    global_step = 0
    while step_budget is None or global_step < step_budget:
        action = agent.act(obs, explore=True)
        next_obs, reward, done, info = env.step(action)
        agent.observe(obs, action, reward, next_obs, done)
        loss = agent.update()
        global_step += 1
        obs = next_obs
        stage_costs.append(info["stage_cost"])
        triggers.append(1 if info["solved"] else 0)
        forced += int(info["forced"])
        if loss is not None:
            losses.append(loss if np.isscalar(loss) else loss["policy_loss"])
        if done:
            m = compute_metrics(stage_costs, triggers, env.rho_c, env.dt,
                                forced=forced,
                                solve_seconds=env.solve_seconds)
            episode += 1
            mean_loss = float(np.mean(losses)) if losses else 0.0
            curve_rows.append({
                "episode": episode, "step": global_step,
                "episodic_return": m.episodic_return, "e_mpc": m.e_mpc,
                "a_f": m.a_f, "forced_triggers": int(m.forced_triggers),
                "loss": mean_loss, "explore": float(agent.explore_metric())})
            metric_rows.append({
                "episode": episode, "episodic_return": m.episodic_return,
                "e_mpc": m.e_mpc, "a_f": m.a_f,
                "forced_triggers": int(m.forced_triggers),
                "solve_ms": m.solve_seconds * 1e3})
            if progress:
                print(f"episode {episode:4d} step {global_step:6d} "
                      f"R {m.episodic_return:+.4f} A_f {m.a_f:.2f} "
                      f"E_mpc {m.e_mpc:.4f}", flush=True)
            stage_costs, triggers, losses = [], [], []
            forced = 0
            if episode >= episode_budget:
                break
            if step_budget is not None and global_step >= step_budget:
                break
            obs = env.reset()
            agent.begin_episode()

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "curve.csv", CURVE_FIELDS, curve_rows)
        _write_csv(out / "metrics.csv", METRIC_FIELDS, metric_rows)
        checkpoint_io(agent, out / "checkpoint.npz.bin", "save")
    return TrainResult(agent=agent, curve=curve_rows, metrics=metric_rows,
                       env=env)


# -- checkpointing ------------------------------------------------------------------


def checkpoint_io(agent, path, direction: str):
    """Save or load an agent's parameters and optimizer state."""
    if direction == "save":
        kind, topology, blocks, extras = agent.checkpoint_blocks()
        write_checkpoint(path, kind, topology, blocks, extras)
        return None
    if direction == "load":
        kind, topology, blocks, extras, _ = read_checkpoint(path)
        agent.load_checkpoint(kind, topology, blocks, extras)
        return agent
    raise ValueError(f"direction must be 'save' or 'load', got {direction!r}")


def load_agent(path, config: LabConfig):
    """Construct the right agent for a checkpoint file and load it."""
    import dataclasses

    kind, _, _, _, _ = read_checkpoint(path)
    agent_cfg = dataclasses.replace(config.agent, kind=kind)
    streams = rng_streams(config.train.seed)
    agent = make_agent(agent_cfg, config.train, streams["init"],
                       streams["exploration"], streams["per"])
    checkpoint_io(agent, path, "load")
    return agent


# -- baseline calibration -------------------------------------------------------------


def calibrate_threshold(config: LabConfig, target_af: float = 0.118,
                        lo: float = 1e-3, hi: float = 50.0,
                        iters: int = 30) -> tuple[float, float]:
    """Bisect the deviation threshold toward a target trigger frequency.

    A_f is non-increasing in the threshold, but not every target is
    attainable: forced solves on buffer exhaustion put a floor of
    1/horizon on any policy's A_f.  Returns the threshold whose measured
    A_f lands closest to the target, and that A_f.
    """
    def af_at(threshold: float) -> float:
        env = build_env(config)
        policy = ThresholdTriggerPolicy(env, threshold)
        return run_episode(env, policy).a_f

    best = (lo, af_at(lo))
    for cand in (hi,):
        af = af_at(cand)
        if abs(af - target_af) < abs(best[1] - target_af):
            best = (cand, af)
    a, b = lo, hi
    for _ in range(iters):
        mid = 0.5 * (a + b)
        af = af_at(mid)
        if abs(af - target_af) < abs(best[1] - target_af):
            best = (mid, af)
        if af > target_af:
            a = mid
        else:
            b = mid
        if b - a < 1e-6:
            break
    return best


# -- the rho_c sweep ---------------------------------------------------------------


def sweep(config: LabConfig, rho_grid=(0.0, 0.001, 0.01),
          out_csv: str | Path | None = None, progress: bool = False) -> list[dict]:
    """Train/evaluate the configured agent across the trigger-cost grid.

    Emits one row per (rho_c, policy) with the evaluation cost in the
    cost-positive convention ``E_mpc + rho_c * A_f * T_e`` alongside A_f and
    E_mpc, plus a calibrated threshold-baseline row per rho_c.
    """
    import dataclasses

    threshold, _ = calibrate_threshold(config)
    rows = []
    for rho_c in rho_grid:
        run_cfg = dataclasses.replace(
            config, train=dataclasses.replace(config.train, rho_c=rho_c))
        result = train(run_cfg, progress=progress)
        eval_env = build_env(run_cfg)
        mean, _ = evaluate(result.agent, eval_env,
                           episodes=config.train.eval_episodes)
        t_e = config.train.episode_steps
        rows.append({"rho_c": rho_c, "policy": config.agent.kind,
                     "return_cost": mean.e_mpc + rho_c * mean.a_f * t_e,
                     "a_f": mean.a_f, "e_mpc": mean.e_mpc})
        base_env = build_env(run_cfg)
        base = ThresholdTriggerPolicy(base_env, threshold)
        bmean, _ = evaluate(base, base_env, episodes=config.train.eval_episodes)
        rows.append({"rho_c": rho_c, "policy": "threshold",
                     "return_cost": bmean.e_mpc + rho_c * bmean.a_f * t_e,
                     "a_f": bmean.a_f, "e_mpc": bmean.e_mpc})
    if out_csv is not None:
        _write_csv(out_csv, ("rho_c", "policy", "return_cost", "a_f", "e_mpc"),
                   rows)
    return rows
