"""Clipped-surrogate actor-critic controller trained online from short rollouts.

Every ``batch`` slots the controller takes exactly one gradient step on
actor loss + critic loss, then refreshes its behaviour policy.
"""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .checkpoint import CheckpointError
from .config import PpoConfig
from .nn import LOG_PROB_FLOOR, Adam, Architecture, Mlp, masked_log_softmax, masked_softmax
from .pomdp import (
    ObservableState, RewardScaler, action_space_size, action_table, feasibility_mask, reward,
    scale_observation,
)


def compute_gae(rewards, values, gamma: float):
    """Advantages as discounted tail sums of TD errors.

    ``values`` has one more entry than ``rewards``: the value of the state
    reached after the last step. Returns (advantages, value targets).
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    if v.shape != (r.size + 1,):
        raise ValueError("need len(values) == len(rewards) + 1")
    delta = r + gamma * v[1:] - v[:-1]
    adv = np.zeros_like(delta)
    acc = 0.0
    for t in range(delta.size - 1, -1, -1):
        acc = delta[t] + gamma * acc
        adv[t] = acc
    return adv, adv + v[:-1]


def critic_targets(rewards, gamma: float, bootstrap: float) -> np.ndarray:
    """Discounted reward tail plus ``gamma**(T-t) * bootstrap`` for each step t."""
    r = np.asarray(rewards, dtype=float)
    T = r.size
    y = np.zeros(T)
    acc = bootstrap
    for t in range(T - 1, -1, -1):
        acc = r[t] + gamma * acc
        y[t] = acc
    return y


def clipped_surrogate(ratio, adv, clip: float):
    """Per-sample min(rho*A, clip(rho)*A) and its derivative w.r.t. rho."""
    ratio = np.asarray(ratio, dtype=float)
    adv = np.asarray(adv, dtype=float)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    use_raw = unclipped <= clipped
    return np.where(use_raw, unclipped, clipped), np.where(use_raw, adv, 0.0)


def masked_entropy(probs, mask) -> np.ndarray:
    p = np.where(mask, probs, 1.0)
    return -np.sum(np.where(mask, probs * np.log(p), 0.0), axis=-1)


def actor_loss(logits, masks, actions, logp_old, adv, clip: float, entropy_coef: float):
    """Loss and dLoss/dlogits for -mean(surrogate) - c_e * mean(entropy)."""
    logits = np.atleast_2d(logits)
    T = logits.shape[0]
    logp_all = masked_log_softmax(logits, masks)
    probs = masked_softmax(logits, masks)
    idx = np.arange(T)
    logp_raw = logp_all[idx, actions]
    floored = logp_raw < LOG_PROB_FLOOR
    logp = np.maximum(logp_raw, LOG_PROB_FLOOR)
    ratio = np.exp(logp - np.asarray(logp_old, dtype=float))
    surr, d_surr_d_ratio = clipped_surrogate(ratio, adv, clip)
    ent = masked_entropy(probs, masks)
    loss = -surr.mean() - entropy_coef * ent.mean()

    onehot = np.zeros_like(probs)
    onehot[idx, actions] = 1.0
    d_logp = np.where(floored, 0.0, -d_surr_d_ratio * ratio / T)
    grad = d_logp[:, None] * (onehot - probs)
    logp_safe = np.where(masks, logp_all, 0.0)
    grad += (entropy_coef / T) * probs * (logp_safe + ent[:, None])
    return loss, grad, {"ratio": ratio, "entropy": ent, "surrogate": surr}


def critic_loss(values, targets):
    """Mean squared error with targets held constant; returns (loss, dLoss/dvalues)."""
    v = np.asarray(values, dtype=float)
    y = np.asarray(targets, dtype=float)
    diff = v - y
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


@dataclass
class Step:
    obs: np.ndarray
    action: int
    logp: float
    value: float
    mask: np.ndarray
    reward: float = 0.0


class PpoController:
    kind = "ppo"

    def __init__(self, n_ue: int, n_cb: int, cfg: PpoConfig = PpoConfig(), t_slot: float = 10e-3,
                 packet_bits: int = 18496, seed=None):
        self.n_ue, self.n_cb, self.cfg = n_ue, n_cb, cfg
        self.rng = np.random.default_rng(seed)
        self.n_actions = action_space_size(n_ue, n_cb)
        self.arch = Architecture(4 * n_ue, tuple(cfg.hidden), self.n_actions, cfg.shared_trunk)
        self.net = Mlp(self.arch, rng=self.rng)
        self.opt = Adam(self.arch.n_params, lr=cfg.lr, decay=cfg.lr_decay, decay_every=cfg.decay_every)
        self.scaler = RewardScaler(cfg.reward_scale_gbps, t_slot, packet_bits)
        self.learning = True
        self.buffer: List[Step] = []
        self._pending: Optional[Step] = None
        self.n_updates = 0
        self.last_losses = (0.0, 0.0)
        self._actions = action_table(n_ue, n_cb)[0]

    def features(self, s: ObservableState) -> np.ndarray:
        return scale_observation(s, self.cfg.n_block_tilde).as_vector()

    def policy(self, s: ObservableState, mask=None):
        """Action probabilities and state value under the current parameters."""
        mask = feasibility_mask(s, self.n_cb) if mask is None else mask
        logits, value, _ = self.net.forward(self.features(s))
        return masked_softmax(logits, mask), float(value)

    def act(self, s: ObservableState, mask: Optional[np.ndarray] = None):
        if mask is None:
            mask = feasibility_mask(s, self.n_cb)
        x = self.features(s)
        logits, value, _ = self.net.forward(x)
        if self.learning and len(self.buffer) >= self.cfg.batch:
            self.update(float(value))
            logits, value, _ = self.net.forward(x)
        logp_all = masked_log_softmax(logits, mask)
        p = np.exp(logp_all)
        cdf = np.cumsum(p)
        a = int(np.searchsorted(cdf, self.rng.random() * cdf[-1], side="right"))
        a = min(a, self.n_actions - 1)
        while not mask[a]:  # guard against landing on a zero-width bin through rounding
            a -= 1
        self._pending = Step(x, a, max(float(logp_all[a]), LOG_PROB_FLOOR), float(value), mask)
        return self._actions[a]

    def end_episode(self, s: ObservableState) -> None:
        """Flush a partial or full batch, bootstrapping from the state the run stopped in."""
        if self.learning and self.buffer:
            _, value, _ = self.net.forward(self.features(s))
            self.update(float(value))

    def observe(self, res) -> None:
        step, self._pending = self._pending, None
        if step is None or not self.learning:
            return
        step.reward = reward(res.delivered, self.scaler)
        self.buffer.append(step)

    def update(self, next_value: float) -> None:
        cfg = self.cfg
        batch, self.buffer = self.buffer, []
        X = np.stack([b.obs for b in batch])
        masks = np.stack([b.mask for b in batch])
        acts = np.array([b.action for b in batch])
        r = np.array([b.reward for b in batch])
        v_old = np.array([b.value for b in batch])
        adv, _ = compute_gae(r, np.append(v_old, next_value), cfg.gamma)
        # the critic target bootstraps from the last stored state of the batch
        y = critic_targets(r, cfg.gamma, v_old[-1])
        logits, values, cache = self.net.forward(X)
        la, d_logits, _ = actor_loss(logits, masks, acts, [b.logp for b in batch], adv,
                                     cfg.clip, cfg.entropy_coef)
        lc, d_values = critic_loss(values, y)
        if not np.isfinite(la + lc):
            raise FloatingPointError("non-finite loss at update %d (actor %r, critic %r)" % (self.n_updates, la, lc))
        grad = self.net.backward(cache, d_logits, d_values)
        self.opt.step(self.net.params, grad)
        self.n_updates += 1
        self.last_losses = (la, lc)

    # -- persistence -----------------------------------------------------
    def save(self, path) -> None:
        self.net.save(path, extra={"controller": self.kind})

    def load(self, path) -> None:
        net, _ = Mlp.load(path)
        if net.arch != self.arch:
            raise CheckpointError("%s: network %s does not match configured %s" % (path, net.arch, self.arch))
        self.net = net
