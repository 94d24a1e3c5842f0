"""Controller-facing contract: observations, action codec, feasibility mask, reward, scaling.

UE and codebook ids inside :class:`Action` are 1-based. Observation arrays
are indexed by ``ue - 1``.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np


class ConstraintViolation(ValueError):
    """An action breaks the half-duplex or tracking constraints."""


class Action(NamedTuple):
    dest: int
    rx: int
    cb: int
    track: int = 0


@dataclass
class ObservableState:
    q: np.ndarray
    b_d2d: np.ndarray
    b_track: np.ndarray
    l_block: np.ndarray

    @property
    def n_ue(self) -> int:
        return len(self.q)

    @property
    def tracked_ue(self) -> int:
        """1-based id of the UE forced by tracking, or 0."""
        idx = np.flatnonzero(self.b_track)
        return int(idx[0]) + 1 if len(idx) else 0


@dataclass
class ScaledObservation:
    q_scaled: np.ndarray
    b_d2d: np.ndarray
    b_track: np.ndarray
    p_block: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q_scaled, self.b_d2d, self.b_track, self.p_block]).astype(float)


def action_space_size(n_ue: int, n_cb: int) -> int:
    return n_ue * n_ue * n_cb + n_ue * n_cb


def encode_action(a: Action, n_ue: int, n_cb: int) -> int:
    """Index layout: track=0 actions by (dest, rx, cb), then track=1 actions by (dest, cb)."""
    dest, rx, cb, track = a
    if not (1 <= dest <= n_ue and 1 <= rx <= n_ue and 1 <= cb <= n_cb and track in (0, 1)):
        raise ConstraintViolation("action %r out of range" % (a,))
    if track:
        if dest != rx:
            raise ConstraintViolation("tracking a relay is not allowed: %r" % (a,))
        return n_ue * n_ue * n_cb + (dest - 1) * n_cb + (cb - 1)
    return ((dest - 1) * n_ue + (rx - 1)) * n_cb + (cb - 1)


def decode_action(index: int, n_ue: int, n_cb: int) -> Action:
    n0 = n_ue * n_ue * n_cb
    if not 0 <= index < action_space_size(n_ue, n_cb):
        raise ConstraintViolation("action index %d out of range" % index)
    if index >= n0:
        dest, cb = divmod(index - n0, n_cb)
        return Action(dest + 1, dest + 1, cb + 1, 1)
    pair, cb = divmod(index, n_cb)
    dest, rx = divmod(pair, n_ue)
    return Action(dest + 1, rx + 1, cb + 1, 0)


@lru_cache(maxsize=None)
def _tables(n_ue: int, n_cb: int):
    n = action_space_size(n_ue, n_cb)
    acts = [decode_action(i, n_ue, n_cb) for i in range(n)]
    dest = np.array([a.dest - 1 for a in acts])
    rx = np.array([a.rx - 1 for a in acts])
    cb = np.array([a.cb - 1 for a in acts])
    track = np.array([a.track for a in acts])
    for arr in (dest, rx, cb, track):
        arr.setflags(write=False)
    return acts, dest, rx, cb, track


def action_table(n_ue: int, n_cb: int):
    """All actions in index order plus 0-based (dest, rx, cb, track) arrays."""
    return _tables(n_ue, n_cb)


def feasibility_mask(s: ObservableState, n_cb: int) -> np.ndarray:
    _, dest, rx, _, _ = _tables(s.n_ue, n_cb)
    busy = np.asarray(s.b_d2d, dtype=bool)
    mask = ~(busy[dest] | busy[rx])
    tracked = s.tracked_ue
    if tracked:
        mask &= (dest == tracked - 1) & (rx == tracked - 1)
    if not mask.any():
        raise ConstraintViolation("no feasible action in state")
    return mask


def check_feasible(a: Action, s: ObservableState) -> None:
    busy = s.b_d2d
    if busy[a.dest - 1] or busy[a.rx - 1]:
        raise ConstraintViolation("UE in an active D2D link cannot join the main link: %r" % (a,))
    tracked = s.tracked_ue
    if tracked and not (a.dest == tracked and a.rx == tracked):
        raise ConstraintViolation("tracking slot must serve UE %d: %r" % (tracked, a))
    if a.track and a.dest != a.rx:
        raise ConstraintViolation("tracking a relay is not allowed: %r" % (a,))


@dataclass(frozen=True)
class RewardScaler:
    x_gbps: float
    t_slot: float
    packet_bits: int

    @property
    def n_packets(self) -> float:
        """Packets per slot at a link rate of ``x_gbps``."""
        return self.x_gbps * 1e9 * self.t_slot / self.packet_bits


def reward(departures, scaler: RewardScaler) -> float:
    return float(np.sum(departures)) / scaler.n_packets


def block_likelihood(l_block, n_block_tilde: int) -> np.ndarray:
    l = np.asarray(l_block, dtype=float)
    return np.maximum((n_block_tilde - l) / (n_block_tilde + 1.0), 0.0)


def scale_observation(s: ObservableState, n_block_tilde: int) -> ScaledObservation:
    q = np.asarray(s.q, dtype=float)
    top = q.max() if len(q) else 0.0
    q_scaled = q / top if top > 0 else np.zeros_like(q)
    return ScaledObservation(q_scaled, np.asarray(s.b_d2d, dtype=float),
                             np.asarray(s.b_track, dtype=float), block_likelihood(s.l_block, n_block_tilde))
