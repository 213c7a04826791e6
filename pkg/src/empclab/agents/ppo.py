"""Proximal policy optimization with a clipped surrogate objective.

On-policy: rollouts of whole episodes are collected, advantages come from
generalized advantage estimation, and the policy maximizes
``E[min(ratio * A, clip(ratio, 1-eps, 1+eps) * A)]`` plus an entropy bonus,
with a separate value network regressing the returns.

The recurrent variant replaces the policy's last FC layer with an LSTM and
processes fixed-length windows restarted from a zero hidden state; the same
windowing is used while acting and while updating, so stored and recomputed
log-probabilities agree exactly before the first gradient step.
"""

from __future__ import annotations

import numpy as np

from ..config import AgentConfig, TrainConfig
from ..errors import TopologyMismatchError
from ..nn import Adam, LSTMNetwork, MLPNetwork, categorical_head, entropy_grad
from .ddqn import ENV_STATE_DIM, N_ACTIONS


class PpoAgent:
    """Clipped-surrogate policy gradient over the trigger action."""

    def __init__(self, config: AgentConfig, train_config: TrainConfig,
                 init_rng: np.random.Generator,
                 explore_rng: np.random.Generator, recurrent: bool):
        self.config = config
        self.train_config = train_config
        self.recurrent = recurrent
        self.kind = "ppo-lstm" if recurrent else "ppo"
        self.explore_rng = explore_rng
        hidden = config.hidden_size
        if recurrent:
            self.policy = LSTMNetwork(ENV_STATE_DIM, [hidden, hidden], hidden,
                                      N_ACTIONS, init_rng, name="policy")
        else:
            self.policy = MLPNetwork(ENV_STATE_DIM, [hidden] * 3, N_ACTIONS,
                                     init_rng, name="policy")
        self.value = MLPNetwork(ENV_STATE_DIM, [hidden] * 3, 1, init_rng,
                                name="value")
        self.policy_opt = Adam(self.policy.parameters(), config.learning_rate,
                               config.adam_beta1, config.adam_beta2,
                               config.adam_eps)
        self.value_opt = Adam(self.value.parameters(), config.learning_rate,
                              config.adam_beta1, config.adam_beta2,
                              config.adam_eps)
        self.global_step = 0
        self._reset_rollout()
        self._act_state = None
        self._window_pos = 0
        self._cached = None
        self._last_entropy = np.log(2.0)

    def _reset_rollout(self):
        self._obs, self._actions, self._logps = [], [], []
        self._rewards, self._dones, self._win_starts = [], [], []
        self._entropies = []

    # -- acting ----------------------------------------------------------------

    def begin_episode(self):
        if self.recurrent:
            self._act_state = self.policy.init_state(1)
        self._window_pos = 0

    def _logits(self, obs: np.ndarray) -> np.ndarray:
        if self.recurrent:
            if self._window_pos % self.config.seq_len == 0:
                self._act_state = self.policy.init_state(1)
            logits, self._act_state = self.policy.step(obs, self._act_state)
            return logits[0]
        return self.policy(obs)[0]

    def act(self, obs: np.ndarray, explore: bool = False) -> int:
        window_start = self.recurrent \
            and self._window_pos % self.config.seq_len == 0
        logits = self._logits(obs)
        self._window_pos += 1
        probs, log_probs, entropy = categorical_head(logits)
        if explore:
            action = int(self.explore_rng.random() < probs[1])
        else:
            action = int(np.argmax(probs))
        self._cached = (float(log_probs[action]), float(entropy), window_start)
        self._last_entropy = float(entropy)
        return action

    # -- collection --------------------------------------------------------------

    def observe(self, obs, action, reward, next_obs, done):
        logp, entropy, window_start = self._cached
        self._obs.append(np.asarray(obs, dtype=float))
        self._actions.append(int(action))
        self._logps.append(logp)
        self._entropies.append(entropy)
        self._rewards.append(float(reward))
        self._dones.append(bool(done))
        self._win_starts.append(window_start or len(self._obs) == 1)

    def rollout_ready(self) -> bool:
        return bool(self._dones) and self._dones[-1] \
            and len(self._obs) >= self.config.ppo_rollout

    def update(self) -> dict | None:
        self.global_step += 1
        if not self.rollout_ready():
            return None
        losses = self._update_from_rollout()
        self._reset_rollout()
        return losses

    # -- learning ----------------------------------------------------------------

    def _gae(self, rewards, dones, values):
        cfg = self.config
        n = len(rewards)
        adv = np.zeros(n)
        running = 0.0
        for t in range(n - 1, -1, -1):
            v_next = 0.0 if dones[t] else values[t + 1]
            delta = rewards[t] + cfg.gamma * v_next - values[t]
            running = delta if dones[t] \
                else delta + cfg.gamma * cfg.gae_lambda * running
            adv[t] = running
        return adv

    def _policy_outputs(self, obs, win_starts):
        """Recompute logits for the whole rollout with collection-time windowing."""
        if not self.recurrent:
            logits, cache = self.policy.forward(obs)
            return logits, cache, None
        windows, rows = [], []
        for i, start in enumerate(win_starts):
            if start:
                windows.append([i])
            else:
                windows[-1].append(i)
        length = self.config.seq_len
        xs = np.zeros((len(windows), length, obs.shape[1]))
        mask = np.zeros((len(windows), length))
        index = np.zeros((len(windows), length), dtype=np.int64)
        for w, members in enumerate(windows):
            xs[w, :len(members)] = obs[members]
            mask[w, :len(members)] = 1.0
            index[w, :len(members)] = members
        logits_seq, cache = self.policy.forward_sequence(xs, mask)
        flat = np.zeros((len(obs), N_ACTIONS))
        valid = mask.astype(bool)
        flat[index[valid]] = logits_seq[valid]
        return flat, cache, (xs, mask, index)

    def _policy_backward(self, cache, seq_info, d_logits):
        if not self.recurrent:
            self.policy.backward(cache, d_logits)
            return
        _, mask, index = seq_info
        d_seq = np.zeros(mask.shape + (N_ACTIONS,))
        valid = mask.astype(bool)
        d_seq[valid] = d_logits[index[valid]]
        self.policy.backward_sequence(cache, d_seq, mask)

    def _update_from_rollout(self) -> dict:
        cfg = self.config
        obs = np.asarray(self._obs)
        actions = np.asarray(self._actions)
        logp_old = np.asarray(self._logps)
        rewards = np.asarray(self._rewards)
        dones = np.asarray(self._dones)
        n = len(obs)

        values = self.value(obs)[:, 0]
        values_ext = np.append(values, 0.0)
        adv = self._gae(rewards, dones, values_ext)
        returns = adv + values
        adv_norm = (adv - adv.mean()) / (adv.std() + 1e-8)

        # Bookkeeping check: before any gradient step the recomputed
        # log-probabilities must reproduce the stored ones exactly.
        logits0, _, _ = self._policy_outputs(obs, self._win_starts)
        _, logp0, _ = categorical_head(logits0)
        ratio0 = np.exp(logp0[np.arange(n), actions] - logp_old)
        max_ratio_dev = float(np.abs(ratio0 - 1.0).max())

        if self.recurrent:
            starts = np.flatnonzero(self._win_starts)
            groups = [np.arange(s, e) for s, e in
                      zip(starts, np.append(starts[1:], n))]
            per_batch = max(cfg.ppo_minibatch // cfg.seq_len, 1)
        else:
            groups = [np.array([i]) for i in range(n)]
            per_batch = cfg.ppo_minibatch

        policy_losses, value_losses, entropies = [], [], []
        for _ in range(cfg.ppo_epochs):
            order = self.explore_rng.permutation(len(groups))
            for lo in range(0, len(order), per_batch):
                rows = np.concatenate([groups[g]
                                       for g in order[lo:lo + per_batch]])
                mb = len(rows)
                sub_starts = [self._win_starts[r] or i == 0 or rows[i - 1] != r - 1
                              for i, r in enumerate(rows)] if self.recurrent \
                    else None
                logits, cache, seq_info = self._policy_outputs(
                    obs[rows], sub_starts)
                probs, logp, entropy = categorical_head(logits)
                logp_a = logp[np.arange(mb), actions[rows]]
                ratio = np.exp(logp_a - logp_old[rows])
                a_mb = adv_norm[rows]
                clipped = np.clip(ratio, 1.0 - cfg.ppo_clip, 1.0 + cfg.ppo_clip)
                surrogate = np.minimum(ratio * a_mb, clipped * a_mb)
                policy_loss = -surrogate.mean() - cfg.entropy_coef * entropy.mean()

                unclipped = (ratio * a_mb) <= (clipped * a_mb)
                d_logp_a = -(a_mb * ratio * unclipped) / mb
                d_logits = d_logp_a[:, None] * (-probs)
                d_logits[np.arange(mb), actions[rows]] += d_logp_a
                d_logits -= cfg.entropy_coef * entropy_grad(probs, logp) / mb
                self._policy_backward(cache, seq_info, d_logits)
                self.policy_opt.step()

                v_mb, v_cache = self.value.forward(obs[rows])
                v_err = v_mb[:, 0] - returns[rows]
                value_loss = cfg.value_coef * float(np.mean(v_err ** 2))
                d_v = (2.0 * cfg.value_coef * v_err / mb)[:, None]
                self.value.backward(v_cache, d_v)
                self.value_opt.step()

                policy_losses.append(float(policy_loss))
                value_losses.append(value_loss)
                entropies.append(float(entropy.mean()))

        self._last_entropy = float(np.mean(entropies))
        return {"policy_loss": float(np.mean(policy_losses)),
                "value_loss": float(np.mean(value_losses)),
                "entropy": self._last_entropy,
                "max_ratio_dev_epoch0": max_ratio_dev,
                "rollout_steps": n}

    # -- explore metric / checkpointing ------------------------------------------

    def explore_metric(self) -> float:
        return self._last_entropy

    def topology(self):
        return {"agent": self.kind, "policy": self.policy.topology(),
                "value": self.value.topology()}

    def checkpoint_blocks(self):
        blocks = {p.name: p.value
                  for net in (self.policy, self.value)
                  for p in net.parameters()}
        blocks.update(self.policy_opt.state_blocks("adam_policy"))
        blocks.update(self.value_opt.state_blocks("adam_value"))
        extras = {"global_step": self.global_step,
                  "adam_policy_t": self.policy_opt.t,
                  "adam_value_t": self.value_opt.t}
        return self.kind, self.topology(), blocks, extras

    def load_checkpoint(self, kind, topology, blocks, extras):
        if kind != self.kind or topology != self.topology():
            raise TopologyMismatchError(
                f"checkpoint is {kind!r}; agent is {self.kind!r}")
        own = {p.name: p.value for net in (self.policy, self.value)
               for p in net.parameters()}
        expected = dict(own)
        expected.update(self.policy_opt.state_blocks("adam_policy"))
        expected.update(self.value_opt.state_blocks("adam_value"))
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
        self.policy_opt.load_state_blocks(blocks, "adam_policy")
        self.value_opt.load_state_blocks(blocks, "adam_value")
        self.policy_opt.t = int(extras.get("adam_policy_t", 0))
        self.value_opt.t = int(extras.get("adam_value_t", 0))
        self.global_step = int(extras.get("global_step", 0))
