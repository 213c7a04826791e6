"""Discrete soft actor-critic over the binary trigger action.

Twin critics with Polyak-averaged targets; the critic target takes the exact
expectation over the categorical policy of the entropy-regularized minimum
twin value, and the actor minimizes the expected temperature-weighted
log-probability minus value.  The temperature is fixed by default, with
optional automatic tuning toward a target entropy.
"""

from __future__ import annotations

import numpy as np

from ..config import AgentConfig, TrainConfig
from ..errors import TopologyMismatchError
from ..nn import Adam, MLPNetwork, categorical_head
from .ddqn import ENV_STATE_DIM, N_ACTIONS, copy_parameters
from .replay import ReplayBuffer, Transition


def sac_targets(policy, target_q1, target_q2, next_states, rewards, dones,
                gamma: float, temperature: float) -> np.ndarray:
    """Soft bootstrap targets: expectation over the policy of the min twin Q."""
    probs, log_probs, _ = categorical_head(policy(next_states))
    q_min = np.minimum(target_q1(next_states), target_q2(next_states))
    soft_value = (probs * (q_min - temperature * log_probs)).sum(axis=1)
    return rewards + gamma * soft_value * (~np.asarray(dones, dtype=bool))


class SacAgent:
    """Entropy-regularized off-policy learner with a categorical actor."""

    def __init__(self, config: AgentConfig, train_config: TrainConfig,
                 init_rng: np.random.Generator,
                 explore_rng: np.random.Generator,
                 buffer_rng: np.random.Generator):
        self.config = config
        self.train_config = train_config
        self.kind = "sac"
        self.explore_rng = explore_rng
        hidden = config.hidden_size
        make = lambda name, n_out: MLPNetwork(  # noqa: E731
            ENV_STATE_DIM, [hidden] * 3, n_out, init_rng, name=name)
        self.policy = make("policy", N_ACTIONS)
        self.q1, self.q2 = make("q1", N_ACTIONS), make("q2", N_ACTIONS)
        self.q1_target, self.q2_target = make("q1t", N_ACTIONS), make("q2t", N_ACTIONS)
        copy_parameters(self.q1, self.q1_target)
        copy_parameters(self.q2, self.q2_target)
        opt = lambda net: Adam(net.parameters(), config.learning_rate,  # noqa: E731
                               config.adam_beta1, config.adam_beta2,
                               config.adam_eps)
        self.policy_opt, self.q1_opt, self.q2_opt = opt(self.policy), opt(self.q1), opt(self.q2)
        self.log_temperature = float(np.log(config.sac_temperature))
        self.target_entropy = config.sac_target_entropy_scale * np.log(N_ACTIONS)
        self.buffer = ReplayBuffer(config.buffer_capacity, ENV_STATE_DIM,
                                   buffer_rng, use_per=False)
        self.global_step = 0
        self.episode_id = 0
        self.step_in_episode = 0
        self._last_entropy = np.log(2.0)

    @property
    def temperature(self) -> float:
        return float(np.exp(self.log_temperature))

    # -- acting ----------------------------------------------------------------

    def begin_episode(self):
        self.step_in_episode = 0

    def act(self, obs: np.ndarray, explore: bool = False) -> int:
        probs, _, entropy = categorical_head(self.policy(obs)[0])
        self._last_entropy = float(entropy)
        if explore:
            return int(self.explore_rng.random() < probs[1])
        return int(np.argmax(probs))

    def observe(self, obs, action, reward, next_obs, done):
        self.buffer.add(Transition(np.asarray(obs, dtype=float), int(action),
                                   float(reward),
                                   np.asarray(next_obs, dtype=float),
                                   bool(done), self.episode_id,
                                   self.step_in_episode))
        self.step_in_episode += 1
        if done:
            self.episode_id += 1

    # -- learning ----------------------------------------------------------------

    def update(self) -> float | None:
        self.global_step += 1
        if len(self.buffer) < self.config.learn_start:
            return None
        cfg = self.config
        batch, _, _ = self.buffer.sample(cfg.batch_size)
        states, actions = batch["states"], batch["actions"]
        rows = np.arange(len(actions))
        y = sac_targets(self.policy, self.q1_target, self.q2_target,
                        batch["next_states"], batch["rewards"], batch["dones"],
                        cfg.gamma, self.temperature)

        critic_loss = 0.0
        for net, opt in ((self.q1, self.q1_opt), (self.q2, self.q2_opt)):
            q, cache = net.forward(states)
            err = q[rows, actions] - y
            critic_loss += float(np.mean(err * err))
            d_q = np.zeros_like(q)
            d_q[rows, actions] = 2.0 * err / len(err)
            net.backward(cache, d_q)
            opt.step()

        logits, cache = self.policy.forward(states)
        probs, log_probs, entropy = categorical_head(logits)
        q_min = np.minimum(self.q1(states), self.q2(states))
        f = self.temperature * log_probs - q_min
        actor_loss = float(np.mean((probs * f).sum(axis=1)))
        inner = f - (probs * f).sum(axis=1, keepdims=True)
        d_logits = probs * inner / len(states)
        self.policy.backward(cache, d_logits)
        self.policy_opt.step()
        self._last_entropy = float(entropy.mean())

        if cfg.sac_autotune:
            # d/d(log alpha) of alpha * (H - H_target); plain gradient step.
            grad = self.temperature * (self._last_entropy - self.target_entropy)
            self.log_temperature -= cfg.learning_rate * grad

        tau = cfg.sac_tau
        for online, target in ((self.q1, self.q1_target),
                               (self.q2, self.q2_target)):
            for po, pt in zip(online.parameters(), target.parameters()):
                pt.value *= 1.0 - tau
                pt.value += tau * po.value

        return critic_loss + actor_loss

    # -- explore metric / checkpointing ------------------------------------------

    def explore_metric(self) -> float:
        return self._last_entropy

    def _networks(self):
        return (self.policy, self.q1, self.q2, self.q1_target, self.q2_target)

    def topology(self):
        return {"agent": self.kind,
                "networks": [net.topology() for net in self._networks()]}

    def checkpoint_blocks(self):
        blocks = {p.name: p.value for net in self._networks()
                  for p in net.parameters()}
        blocks.update(self.policy_opt.state_blocks("adam_policy"))
        blocks.update(self.q1_opt.state_blocks("adam_q1"))
        blocks.update(self.q2_opt.state_blocks("adam_q2"))
        blocks["log_temperature"] = np.array([self.log_temperature])
        extras = {"global_step": self.global_step,
                  "episode_id": self.episode_id,
                  "adam_t": [self.policy_opt.t, self.q1_opt.t, self.q2_opt.t]}
        return self.kind, self.topology(), blocks, extras

    def load_checkpoint(self, kind, topology, blocks, extras):
        if kind != self.kind or topology != self.topology():
            raise TopologyMismatchError(
                f"checkpoint is {kind!r}; agent is {self.kind!r}")
        own = {p.name: p.value for net in self._networks()
               for p in net.parameters()}
        expected = dict(own)
        expected.update(self.policy_opt.state_blocks("adam_policy"))
        expected.update(self.q1_opt.state_blocks("adam_q1"))
        expected.update(self.q2_opt.state_blocks("adam_q2"))
        missing = (set(expected) | {"log_temperature"}) - set(blocks)
        if missing:
            raise TopologyMismatchError(
                f"checkpoint lacks parameter blocks: {sorted(missing)}")
        for name, arr in expected.items():
            if blocks[name].shape != arr.shape:
                raise TopologyMismatchError(
                    f"block {name!r} has shape {blocks[name].shape}, "
                    f"expected {arr.shape}")
        for name, arr in own.items():
            arr[...] = blocks[name]
        self.policy_opt.load_state_blocks(blocks, "adam_policy")
        self.q1_opt.load_state_blocks(blocks, "adam_q1")
        self.q2_opt.load_state_blocks(blocks, "adam_q2")
        t_policy, t_q1, t_q2 = extras.get("adam_t", [0, 0, 0])
        self.policy_opt.t, self.q1_opt.t, self.q2_opt.t = t_policy, t_q1, t_q2
        self.log_temperature = float(blocks["log_temperature"][0])
        self.global_step = int(extras.get("global_step", 0))
        self.episode_id = int(extras.get("episode_id", 0))
