"""Command-line front end: train / eval / baseline / gradcheck / sweep."""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from . import harness
from .config import load_config
from .nn import (Adam, LSTMNetwork, MLPNetwork, grad_check)
from .ocp import OcpSolver


def _load(args):
    config = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        config = dataclasses.replace(
            config, train=dataclasses.replace(config.train, seed=args.seed))
    return config


def cmd_train(args) -> int:
    config = _load(args)
    train_cfg = config.train
    if args.rho_c is not None:
        train_cfg = dataclasses.replace(train_cfg, rho_c=args.rho_c)
    if args.steps is not None:
        episodes = max(args.steps // train_cfg.episode_steps, 1)
        train_cfg = dataclasses.replace(train_cfg, steps=args.steps,
                                        episodes=episodes)
    agent_cfg = config.agent
    if args.agent is not None:
        agent_cfg = dataclasses.replace(agent_cfg, kind=args.agent)
    config = dataclasses.replace(config, train=train_cfg, agent=agent_cfg)
    result = harness.train(config, out_dir=args.out, progress=True)
    last = result.curve[-1] if result.curve else {}
    print(f"trained {agent_cfg.kind} for {len(result.curve)} episodes; "
          f"final R {last.get('episodic_return', float('nan')):+.4f}")
    if args.out:
        print(f"outputs in {args.out}")
    return 0


def cmd_eval(args) -> int:
    config = _load(args)
    agent = harness.load_agent(args.checkpoint, config)
    env = harness.build_env(config)
    mean, per_episode = harness.evaluate(agent, env, episodes=args.episodes)
    print(f"agent {agent.kind}: R {mean.episodic_return:+.4f} "
          f"A_f {mean.a_f:.3f} E_mpc {mean.e_mpc:.4f} "
          f"forced {mean.forced_triggers:.1f} "
          f"solve {mean.solve_seconds * 1e3:.1f} ms/episode")
    return 0


def cmd_baseline(args) -> int:
    config = _load(args)
    if args.calibrate_af is not None:
        threshold, af = harness.calibrate_threshold(config,
                                                    target_af=args.calibrate_af)
        print(f"calibrated threshold {threshold:.6g} (A_f {af:.3f}, "
              f"target {args.calibrate_af})")
    else:
        threshold = args.threshold if args.threshold is not None \
            else config.empc.threshold
    env = harness.build_env(config)
    policy = harness.ThresholdTriggerPolicy(env, threshold)
    mean, _ = harness.evaluate(policy, env, episodes=config.train.eval_episodes)
    print(f"threshold {threshold:.6g}: R {mean.episodic_return:+.4f} "
          f"A_f {mean.a_f:.3f} E_mpc {mean.e_mpc:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    config = _load(args)
    rng = np.random.default_rng(config.train.seed)
    failures = 0
    for name, err, tol in gradient_suite(config, rng):
        status = "ok" if err < tol else "FAIL"
        if err >= tol:
            failures += 1
        print(f"{name:<28s} max rel err {err:.3e}  (tol {tol:.0e})  {status}")
    return 1 if failures else 0


def gradient_suite(config, rng):
    """Finite-difference checks for the MLP, the LSTM chain and the OCP gradient."""
    mlp = MLPNetwork(12, [128, 128, 128], 2, rng)
    x = rng.normal(size=(4, 12)) + 0.05   # jitter inputs off ReLU kinks
    target = rng.normal(size=(4, 2))

    def mlp_loss():
        out, cache = mlp.forward(x)
        diff = out - target
        mlp.backward(cache, 2.0 * diff)
        return float(np.sum(diff * diff))

    yield "mlp", grad_check(mlp_loss, mlp.parameters(), rng), 1e-5

    lstm = LSTMNetwork(12, [32, 32], 32, 2, rng)
    xs = rng.normal(size=(4, 3, 12))
    starget = rng.normal(size=(4, 3, 2))

    def lstm_loss():
        outs, cache = lstm.forward_sequence(xs)
        diff = outs - starget
        lstm.backward_sequence(cache, 2.0 * diff)
        return float(np.sum(diff * diff))

    yield "lstm-3-step", grad_check(lstm_loss, lstm.parameters(), rng), 1e-4

    from .dynamics import VehicleModel
    model = VehicleModel(config.vehicle, config.train.dt)
    solver = OcpSolver(model, config.ocp)
    worst = 0.0
    for _ in range(20):
        x0 = config.empc.x0 + rng.normal(size=6) * np.array(
            [5.0, 1.0, 1.0, 0.3, 0.1, 0.05])
        u = rng.uniform(-1.0, 1.0, size=(config.ocp.horizon, 2)) \
            * np.array([100.0, 0.2])
        flat = u.ravel()
        _, grad = solver._value_and_grad(flat, x0, config.ocp.penalty_init, None)
        for i in range(len(flat)):
            h = 1e-6 * max(1.0, abs(flat[i]))
            up, dn = flat.copy(), flat.copy()
            up[i] += h
            dn[i] -= h
            fd = (solver._value_and_grad(up, x0, config.ocp.penalty_init, None)[0]
                  - solver._value_and_grad(dn, x0, config.ocp.penalty_init, None)[0]) / (2 * h)
            err = abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1.0)
            worst = max(worst, err)
    yield "ocp-cost-gradient", worst, 1e-5


def cmd_sweep(args) -> int:
    config = _load(args)
    agent_cfg = config.agent
    if args.agent is not None:
        agent_cfg = dataclasses.replace(agent_cfg, kind=args.agent)
    train_cfg = config.train
    if args.steps is not None:
        episodes = max(args.steps // train_cfg.episode_steps, 1)
        train_cfg = dataclasses.replace(train_cfg, steps=args.steps,
                                        episodes=episodes)
    config = dataclasses.replace(config, agent=agent_cfg, train=train_cfg)
    rows = harness.sweep(config, out_csv=args.out, progress=True)
    print(f"{'rho_c':>8s} {'policy':>16s} {'cost':>8s} {'A_f':>6s} {'E_mpc':>8s}")
    for row in rows:
        print(f"{row['rho_c']:8.4f} {row['policy']:>16s} "
              f"{row['return_cost']:8.4f} {row['a_f']:6.3f} {row['e_mpc']:8.4f}")
    if args.out:
        print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="empclab",
        description="Event-triggered MPC with learned trigger policies.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a trigger agent")
    p.add_argument("--agent", choices=("ddqn", "ddqn-lstm-per", "ppo",
                                       "ppo-lstm", "sac"))
    p.add_argument("--rho-c", dest="rho_c", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("baseline", help="run the threshold baseline")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--threshold", type=float)
    group.add_argument("--calibrate-af", dest="calibrate_af", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(fn=cmd_baseline)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("sweep", help="train/evaluate across the rho_c grid")
    p.add_argument("--agent", choices=("ddqn", "ddqn-lstm-per", "ppo",
                                       "ppo-lstm", "sac"))
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
