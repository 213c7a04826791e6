"""Double Q-learning trigger agent, flat or recurrent, with optional PER.

The online network picks the bootstrap action, the target network evaluates
it: ``y = r + gamma * Q_target(s', argmax_a Q_online(s', a))`` with a zero
bootstrap on terminal transitions.  The squared TD error is minimized,
weighted by importance-sampling weights when prioritized replay is active.
"""

from __future__ import annotations

import numpy as np

from ..config import AgentConfig, TrainConfig
from ..errors import TopologyMismatchError
from ..nn import Adam, LSTMNetwork, MLPNetwork
from .replay import ReplayBuffer, Transition
from .schedules import epsilon_schedule, per_beta_schedule

ENV_STATE_DIM = 12
N_ACTIONS = 2


def copy_parameters(src, dst):
    for ps, pd in zip(src.parameters(), dst.parameters()):
        pd.value[...] = ps.value


def target_sync(online, target, step: int, interval: int) -> bool:
    """Hard-copy online parameters into the target every ``interval`` steps."""
    if interval > 0 and step % interval == 0:
        copy_parameters(online, target)
        return True
    return False


def ddqn_targets(online, target, next_states, rewards, dones,
                 gamma: float) -> np.ndarray:
    """Double-Q bootstrap targets for a flat batch."""
    q_next_online = online(next_states)
    greedy = np.argmax(q_next_online, axis=1)
    q_next_target = target(next_states)
    bootstrap = q_next_target[np.arange(len(greedy)), greedy]
    return rewards + gamma * bootstrap * (~np.asarray(dones, dtype=bool))


class DdqnAgent:
    """epsilon-greedy double-Q learner over the 12-dim environment state."""

    def __init__(self, config: AgentConfig, train_config: TrainConfig,
                 init_rng: np.random.Generator,
                 explore_rng: np.random.Generator,
                 per_rng: np.random.Generator, recurrent: bool,
                 use_per: bool):
        self.config = config
        self.train_config = train_config
        self.recurrent = recurrent
        self.use_per = use_per
        self.kind = "ddqn-lstm-per" if recurrent else "ddqn"
        self.explore_rng = explore_rng
        hidden = config.hidden_size
        if recurrent:
            self.online = LSTMNetwork(ENV_STATE_DIM, [hidden, hidden], hidden,
                                      N_ACTIONS, init_rng, name="online")
            self.target = LSTMNetwork(ENV_STATE_DIM, [hidden, hidden], hidden,
                                      N_ACTIONS, init_rng, name="target")
        else:
            self.online = MLPNetwork(ENV_STATE_DIM, [hidden] * 3, N_ACTIONS,
                                     init_rng, name="online")
            self.target = MLPNetwork(ENV_STATE_DIM, [hidden] * 3, N_ACTIONS,
                                     init_rng, name="target")
        copy_parameters(self.online, self.target)
        self.optimizer = Adam(self.online.parameters(), config.learning_rate,
                              config.adam_beta1, config.adam_beta2,
                              config.adam_eps)
        self.buffer = ReplayBuffer(config.buffer_capacity, ENV_STATE_DIM,
                                   per_rng, use_per=use_per,
                                   alpha=config.per_alpha,
                                   priority_eps=config.per_eps)
        self.global_step = 0
        self.episode_id = 0
        self.step_in_episode = 0
        self.epsilon = config.eps_start
        self._act_state = None

    # -- acting ----------------------------------------------------------------

    def begin_episode(self):
        if self.recurrent:
            self._act_state = self.online.init_state(1)
        self.step_in_episode = 0

    def q_values(self, obs: np.ndarray) -> np.ndarray:
        """Action values for one observation, advancing the recurrent state."""
        if self.recurrent:
            q, self._act_state = self.online.step(obs, self._act_state)
            return q[0]
        return self.online(obs)[0]

    def act(self, obs: np.ndarray, explore: bool = False) -> int:
        q = self.q_values(obs)
        if explore and self.explore_rng.random() < self.epsilon:
            return int(self.explore_rng.integers(0, N_ACTIONS))
        return int(np.argmax(q))

    # -- learning ----------------------------------------------------------------

    def observe(self, obs, action, reward, next_obs, done):
        self.buffer.add(Transition(np.asarray(obs, dtype=float), int(action),
                                   float(reward),
                                   np.asarray(next_obs, dtype=float),
                                   bool(done), self.episode_id,
                                   self.step_in_episode))
        self.step_in_episode += 1
        if done:
            self.episode_id += 1

    def update(self) -> float | None:
        """One environment step's worth of bookkeeping and (maybe) a batch update."""
        self.global_step += 1
        self.epsilon = epsilon_schedule(self.global_step, self.config)
        loss = None
        if len(self.buffer) >= self.config.learn_start:
            beta = per_beta_schedule(self.global_step, self.train_config.steps,
                                     self.config)
            loss = (self._update_recurrent(beta) if self.recurrent
                    else self._update_flat(beta))
        target_sync(self.online, self.target, self.global_step,
                    self.config.target_sync)
        return loss

    def _update_flat(self, beta: float) -> float:
        cfg = self.config
        batch, idx, weights = self.buffer.sample(cfg.batch_size, beta)
        y = ddqn_targets(self.online, self.target, batch["next_states"],
                         batch["rewards"], batch["dones"], cfg.gamma)
        q, cache = self.online.forward(batch["states"])
        rows = np.arange(len(y))
        td = y - q[rows, batch["actions"]]
        loss = float(np.mean(weights * td * td))
        d_q = np.zeros_like(q)
        d_q[rows, batch["actions"]] = -2.0 * weights * td / len(y)
        self.online.backward(cache, d_q)
        self.optimizer.step()
        if self.use_per:
            self.buffer.update_priorities(idx, td)
        return loss

    def _update_recurrent(self, beta: float) -> float:
        cfg = self.config
        n_windows = max(cfg.batch_size // cfg.seq_len, 1)
        batch, mask, member, weights = self.buffer.sample_windows(
            n_windows, cfg.seq_len, beta)
        b, length = mask.shape

        q2_online, _ = self.online.forward_sequence(batch["next_states"], mask)
        greedy = np.argmax(q2_online, axis=2)
        q2_target, _ = self.target.forward_sequence(batch["next_states"], mask)
        bootstrap = np.take_along_axis(q2_target, greedy[..., None],
                                       axis=2)[..., 0]
        y = batch["rewards"] + cfg.gamma * bootstrap * ~batch["dones"]

        q, cache = self.online.forward_sequence(batch["states"], mask)
        q_sa = np.take_along_axis(q, batch["actions"][..., None], axis=2)[..., 0]
        td = (y - q_sa) * mask
        n_valid = mask.sum()
        loss = float(np.sum(weights[:, None] * td * td) / n_valid)
        d_q = np.zeros_like(q)
        scale = -2.0 * weights[:, None] * td / n_valid
        np.put_along_axis(d_q, batch["actions"][..., None],
                          scale[..., None], axis=2)
        self.online.backward_sequence(cache, d_q, mask)
        self.optimizer.step()
        if self.use_per:
            valid = mask.astype(bool)
            self.buffer.update_priorities(member[valid], td[valid])
        return loss

    # -- explore metric / checkpointing ------------------------------------------

    def explore_metric(self) -> float:
        return self.epsilon

    def topology(self):
        return {"agent": self.kind, "online": self.online.topology(),
                "target": self.target.topology()}

    def checkpoint_blocks(self):
        blocks = {}
        for net in (self.online, self.target):
            for p in net.parameters():
                blocks[p.name] = p.value
        blocks.update(self.optimizer.state_blocks())
        extras = {"global_step": self.global_step,
                  "episode_id": self.episode_id,
                  "adam_t": self.optimizer.t}
        return self.kind, self.topology(), blocks, extras

    def load_checkpoint(self, kind, topology, blocks, extras):
        if kind != self.kind or topology != self.topology():
            raise TopologyMismatchError(
                f"checkpoint is {kind!r} {topology!r}; agent is "
                f"{self.kind!r} {self.topology()!r}")
        own = {p.name: p.value for net in (self.online, self.target)
               for p in net.parameters()}
        expected = dict(own, **self.optimizer.state_blocks())
        missing = set(expected) - set(blocks)
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
        self.optimizer.load_state_blocks(blocks)
        self.optimizer.t = int(extras.get("adam_t", 0))
        self.global_step = int(extras.get("global_step", 0))
        self.episode_id = int(extras.get("episode_id", 0))
        self.epsilon = epsilon_schedule(self.global_step, self.config)
