"""Empirical bandit controller: maxweight scheduling on estimated service rates,
Thompson sampling over Dirichlet MCS posteriors for relay and codebook choice,
and a queue-prediction rule for beam tracking.
"""
from typing import Optional

import numpy as np

from .checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from .config import MabConfig
from .pomdp import Action, ObservableState, action_table, encode_action


def maxweight(q, d_hat, allowed) -> int:
    """0-based argmax of q*d_hat over allowed UEs; ties go to the lowest id."""
    w = np.asarray(q, dtype=float) * np.asarray(d_hat, dtype=float)
    w = np.where(allowed, w, -np.inf)
    return int(np.argmax(w))


def predict_queues(q, d_hat, rx0: int, z_hat) -> np.ndarray:
    """Next-slot queue guess: serve ``rx0`` at its estimated rate, add mean arrivals."""
    q_hat = np.asarray(q, dtype=float).copy()
    q_hat[rx0] = max(q_hat[rx0] - d_hat[rx0], 0.0)
    return q_hat + z_hat


def dirichlet_rows(alpha: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One Dirichlet draw per row of ``alpha``."""
    g = rng.standard_gamma(alpha)
    return g / g.sum(axis=-1, keepdims=True)


def thompson_pick(alpha: np.ndarray, rates: np.ndarray, rng: Optional[np.random.Generator]) -> int:
    """Row index with the best expected rate; posterior means when ``rng`` is None."""
    if rng is None:
        p = alpha / alpha.sum(axis=-1, keepdims=True)
    else:
        p = dirichlet_rows(alpha, rng)
    return int(np.argmax(p @ rates))


class MabController:
    """Stateful controller; UE/codebook ids in actions are 1-based.

    ``alpha_relay[m, u, v]`` counts MCS outcomes of relay ``u`` serving
    destination ``v`` (``u == v`` is the direct link). ``alpha_cb[m, k, u]``
    counts outcomes of AP codebook ``k`` towards main receiver ``u``.
    """

    kind = "mab"

    def __init__(self, n_ue: int, n_cb: int, rates, cfg: MabConfig = MabConfig(), seed=None):
        self.n_ue, self.n_cb, self.cfg = n_ue, n_cb, cfg
        self.rates = np.asarray(rates, dtype=float)
        if self.rates[0] != 0.0:
            raise ValueError("rate vector must start with R_0 = 0")
        if cfg.fixed_codebook and not 1 <= cfg.fixed_codebook <= n_cb:
            raise ValueError("fixed codebook %d outside 1..%d" % (cfg.fixed_codebook, n_cb))
        n_m = len(self.rates)
        self.rng = np.random.default_rng(seed)
        self.learning = True
        self.alpha_relay = np.ones((n_m, n_ue, n_ue))
        self.alpha_cb = np.ones((n_m, n_cb, n_ue))
        self.d_hat = np.zeros(n_ue)
        self.n_rx = np.zeros(n_ue, dtype=np.int64)
        self.z_hat = np.zeros(n_ue)
        self.n_slots = 0
        self.init_counts = np.zeros(len(action_table(n_ue, n_cb)[0]), dtype=np.int64)
        self.init_done = cfg.n_init <= 0
        self.prev_action: Optional[Action] = None
        self.prev_main = None

    # -- sub-decisions ---------------------------------------------------
    def schedule_dest(self, s: ObservableState) -> int:
        tracked = s.tracked_ue
        if tracked:
            return tracked
        return maxweight(s.q, self.d_hat, ~np.asarray(s.b_d2d, dtype=bool)) + 1

    def select_relay(self, dest: int, s: ObservableState) -> int:
        if not self.cfg.use_relay:
            return dest
        cand = np.flatnonzero(~np.asarray(s.b_d2d, dtype=bool))
        alpha = self.alpha_relay[:, cand, dest - 1].T
        return int(cand[thompson_pick(alpha, self.rates, self.rng if self.learning else None)]) + 1

    def select_codebook(self, rx: int) -> int:
        if self.cfg.fixed_codebook:
            return self.cfg.fixed_codebook
        if self.n_cb == 1:
            return 1
        alpha = self.alpha_cb[:, :, rx - 1].T
        return thompson_pick(alpha, self.rates, self.rng if self.learning else None) + 1

    def decide_tracking(self, s: ObservableState, dest: int, rx: int) -> int:
        if not self.cfg.use_tracking or dest != rx:
            return 0
        q_hat = predict_queues(s.q, self.d_hat, rx - 1, self.z_hat)
        return int(maxweight(q_hat, self.d_hat, np.ones(self.n_ue, dtype=bool)) == rx - 1)

    # -- acting ----------------------------------------------------------
    def _init_action(self, s: ObservableState, mask: np.ndarray) -> Action:
        acts = action_table(self.n_ue, self.n_cb)[0]
        todo = mask & (self.init_counts < self.cfg.n_init)
        if todo.any():
            idx = int(np.flatnonzero(todo)[0])
        else:
            # nothing left that is feasible right now; revisit the least used feasible action
            feas = np.flatnonzero(mask)
            idx = int(feas[np.argmin(self.init_counts[feas])])
        return acts[idx]

    def act(self, s: ObservableState, mask: Optional[np.ndarray] = None) -> Action:
        if not self.init_done and self.learning:
            if mask is None:
                from .pomdp import feasibility_mask
                mask = feasibility_mask(s, self.n_cb)
            return self._init_action(s, mask)
        dest = self.schedule_dest(s)
        # a forced tracking slot serves the tracked UE directly
        rx = dest if s.tracked_ue else self.select_relay(dest, s)
        cb = self.select_codebook(rx)
        return Action(dest, rx, cb, self.decide_tracking(s, dest, rx))

    # -- learning --------------------------------------------------------
    def update_service_estimate(self, res) -> None:
        d = res.departures
        samples = []
        rx = res.action.rx - 1
        samples.append((rx, float(d[rx])))
        if res.d2d_pair is not None:
            v = res.d2d_pair[1] - 1
            samples.append((v, 0.5 * float(d[v])))
        for u, x in samples:
            self.n_rx[u] += 1
            self.d_hat[u] += (x - self.d_hat[u]) / self.n_rx[u]

    def update_arrivals(self, z) -> None:
        self.n_slots += 1
        self.z_hat += (np.asarray(z, dtype=float) - self.z_hat) / self.n_slots

    def _thinned(self, m: int, p: float) -> int:
        return m if self.rng.random() < p else 0

    def posterior_update(self, res) -> None:
        a, main = res.action, res.main
        if a.dest == a.rx:
            m = self._thinned(main.mcs, main.eff_coeff)
            self.alpha_relay[m, a.rx - 1, a.dest - 1] += 1
        if res.d2d is not None:
            prev = res.prev_main
            if prev is None:
                raise RuntimeError("D2D completion without the preceding main-link outcome")
            # credit the relay with the slower of its two legs
            leg = res.d2d if res.d2d.rate < prev.rate else prev
            m = self._thinned(leg.mcs, 0.5 * leg.eff_coeff)
            tx, rx = res.d2d_pair
            self.alpha_relay[m, tx - 1, rx - 1] += 1
        m = self._thinned(main.mcs, main.eff_coeff)
        self.alpha_cb[m, a.cb - 1, a.rx - 1] += 1

    def observe(self, res) -> None:
        self.prev_action = res.action
        if not self.learning:
            return
        if not self.init_done:
            self.init_counts[encode_action(res.action, self.n_ue, self.n_cb)] += 1
            if self.init_counts.min() >= self.cfg.n_init:
                self.init_done = True
        self.posterior_update(res)
        self.update_service_estimate(res)
        self.update_arrivals(res.arrivals)

    # -- persistence -----------------------------------------------------
    def state_vector(self) -> np.ndarray:
        return np.concatenate([
            self.alpha_relay.ravel(), self.alpha_cb.ravel(), self.d_hat,
            self.n_rx.astype(float), self.z_hat, [float(self.n_slots), float(self.init_done)],
            self.init_counts.astype(float),
        ])

    def load_state_vector(self, v: np.ndarray) -> None:
        v = np.asarray(v, dtype=float)
        if len(v) != len(self.state_vector()):
            raise CheckpointError("bandit state has %d values, expected %d" % (len(v), len(self.state_vector())))
        i = 0

        def take(n):
            nonlocal i
            out = v[i:i + n]
            i += n
            return out

        self.alpha_relay = take(self.alpha_relay.size).reshape(self.alpha_relay.shape).copy()
        self.alpha_cb = take(self.alpha_cb.size).reshape(self.alpha_cb.shape).copy()
        self.d_hat = take(self.n_ue).copy()
        self.n_rx = take(self.n_ue).astype(np.int64)
        self.z_hat = take(self.n_ue).copy()
        n_slots, done = take(2)
        self.n_slots, self.init_done = int(n_slots), bool(done)
        self.init_counts = take(self.init_counts.size).astype(np.int64)

    def save(self, path) -> None:
        meta = {"n_ue": self.n_ue, "n_cb": self.n_cb, "n_mcs": len(self.rates)}
        write_checkpoint(path, self.kind, meta, self.state_vector())

    def load(self, path) -> None:
        kind, meta, values = read_checkpoint(path)
        want = {"n_ue": str(self.n_ue), "n_cb": str(self.n_cb), "n_mcs": str(len(self.rates))}
        if kind != self.kind or any(meta.get(k) != v for k, v in want.items()):
            raise CheckpointError("%s: checkpoint is %s %s, controller needs %s %s" % (path, kind, meta, self.kind, want))
        self.load_state_vector(values)
