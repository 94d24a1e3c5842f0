"""Slot-level ground truth simulation of the multi-user mmWave downlink."""
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .blockage import BlockageChain
from .channel import (
    McsTable, coefficient_normal, coefficient_track, los_path_loss_db, make_codebooks,
    outage_fraction, tracking_subset,
)
from .config import ScenarioConfig
from .mobility import MobilityParams, MobilityState, step_mobility
from .pomdp import Action, ObservableState, action_space_size, check_feasible, feasibility_mask
from .queues import PacketQueue

AP = 0


@dataclass(frozen=True)
class SlotTiming:
    t_slot: float = 10e-3
    t_meas: float = 10e-6

    def __post_init__(self):
        if not 0 < self.t_meas < self.t_slot:
            raise ValueError("need 0 < t_meas < t_slot")


@dataclass
class LinkOutcome:
    rss: float
    mcs: int
    rate: float  # bit/s
    eff_coeff: float
    packets: int
    blocked: bool = False
    outage: float = 0.0


@dataclass
class PendingRelay:
    tx: int  # relay UE, 1-based
    rx: int  # destination UE, 1-based
    packets: int  # handed to the relay, i.e. min(d_main, queue)
    main: LinkOutcome
    dest_arrival_slots: List[Tuple[int, int]] = field(default_factory=list)


@dataclass
class SlotResult:
    slot: int
    action: Action
    departures: np.ndarray  # d[t], packet departure vector
    delivered: np.ndarray  # packets removed from each queue
    arrivals: np.ndarray
    main: LinkOutcome
    d2d: Optional[LinkOutcome] = None
    d2d_pair: Optional[Tuple[int, int]] = None  # (tx, rx), 1-based
    prev_main: Optional[LinkOutcome] = None
    tracking_slot: bool = False
    main_blocked: bool = False
    # (ue index 0-based, delay in slots, packet count)
    delays: List[Tuple[int, int, int]] = field(default_factory=list)


def _pair_index(u: int, v: int, n: int) -> int:
    """Index of the unordered UE pair (0-based u != v) among n UEs."""
    if u > v:
        u, v = v, u
    return u * n - u * (u + 1) // 2 + (v - u - 1)


class MmWaveEnv:
    """One AP (device 0) serving UEs 1..U, one slot per :meth:`execute_slot`."""

    def __init__(self, cfg: ScenarioConfig, seed=None):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed if seed is None else seed)
        self._configure(cfg)
        self.reset()

    # -- setup -----------------------------------------------------------
    def _configure(self, cfg: ScenarioConfig) -> None:
        self.cfg = cfg
        self.n_ue = cfg.n_ue
        self.n_cb = cfg.n_codebooks
        self.n_actions = action_space_size(self.n_ue, self.n_cb)
        self.timing = SlotTiming(cfg.t_slot, cfg.t_meas)
        self.codebooks = make_codebooks(cfg.codebook_beams, cfg.elevation_deg)
        self.ue_codebook = self.codebooks[0]
        phi = math.radians(cfg.phi_track_deg)
        self.phi_track = phi
        n1 = cfg.codebook_beams[0]
        self.c_normal = [coefficient_normal(n, n1, cfg.n_arr_ap, cfg.n_arr_ue, cfg.t_meas, cfg.t_slot)
                         for n in cfg.codebook_beams]
        self.c_track = [coefficient_track(n, n1, phi, cfg.t_meas, cfg.t_slot) for n in cfg.codebook_beams]
        self.gains = [cb.gain_dbi for cb in self.codebooks]
        self.mcs = McsTable(cfg.mcs_rss_dbm, [r * 1e6 for r in cfg.mcs_rate_mbps])
        self.lam = np.array(cfg.arrival_rates)
        self.mob_params = MobilityParams(cfg.speed_range[0], cfg.speed_range[1],
                                         math.radians(cfg.rotation_range_deg[0]),
                                         math.radians(cfg.rotation_range_deg[1]), cfg.mobility_period)
        self._bits_per_slot = cfg.t_slot / cfg.packet_bits

    def home_positions(self):
        cfg = self.cfg
        pts = [(0.0, 0.0)]
        for d, a in zip(cfg.ue_distances, cfg.ue_angles_deg):
            pts.append((d * math.cos(math.radians(a)), d * math.sin(math.radians(a))))
        return pts

    def reset(self) -> ObservableState:
        cfg, rng = self.cfg, self.rng
        self.t = 0
        self.queues = [PacketQueue() for _ in range(self.n_ue)]
        self.mobility = [MobilityState.at(x, y, cfg.move_radius, self.mob_params, rng)
                         for x, y in self.home_positions()]
        loss = tuple(cfg.block_loss_db)
        self.blockage_main = [BlockageChain(cfg.blockage_probs(u + 1), loss) for u in range(self.n_ue)]
        n_pairs = self.n_ue * (self.n_ue - 1) // 2
        self.blockage_d2d = [BlockageChain(cfg.d2d_blockage_probs(), loss) for _ in range(n_pairs)]
        self.b_d2d = np.zeros(self.n_ue, dtype=bool)
        self.b_track = np.zeros(self.n_ue, dtype=bool)
        self.pending_relay: Optional[PendingRelay] = None
        self.last_action: Optional[Action] = None
        self._last_align = None
        return self.observe()

    def apply_config(self, cfg: ScenarioConfig) -> None:
        """Switch scenario mid-run. Queues, flags and chain states carry over."""
        if cfg.n_ue != self.n_ue or cfg.n_codebooks != self.n_cb:
            raise ValueError("a scenario change cannot alter the number of UEs or codebooks")
        self._configure(cfg)
        for m, (x, y) in zip(self.mobility, self.home_positions()):
            if (m.cx, m.cy) != (x, y):
                m.x, m.y, m.cx, m.cy = x, y, x, y
            m.radius = cfg.move_radius
        loss = tuple(cfg.block_loss_db)
        for u, ch in enumerate(self.blockage_main):
            fresh = BlockageChain(cfg.blockage_probs(u + 1), loss)
            ch.probs, ch._cdf, ch.loss_range = fresh.probs, fresh._cdf, loss
        for ch in self.blockage_d2d:
            fresh = BlockageChain(cfg.d2d_blockage_probs(), loss)
            ch.probs, ch._cdf, ch.loss_range = fresh.probs, fresh._cdf, loss

    # -- observation -----------------------------------------------------
    def queue_lengths(self) -> np.ndarray:
        return np.array([q.length for q in self.queues], dtype=np.int64)

    def observe(self) -> ObservableState:
        return ObservableState(
            q=self.queue_lengths(),
            b_d2d=self.b_d2d.copy(),
            b_track=self.b_track.copy(),
            l_block=np.array([c.l_block for c in self.blockage_main], dtype=np.int64),
        )

    def mask(self) -> np.ndarray:
        return feasibility_mask(self.observe(), self.n_cb)

    # -- physical layer --------------------------------------------------
    def chain(self, tx: int, rx: int) -> BlockageChain:
        if tx == AP:
            return self.blockage_main[rx - 1]
        if rx == AP:
            return self.blockage_main[tx - 1]
        return self.blockage_d2d[_pair_index(tx - 1, rx - 1, self.n_ue)]

    def distance(self, a: int, b: int) -> float:
        ma, mb = self.mobility[a], self.mobility[b]
        return math.hypot(mb.x - ma.x, mb.y - ma.y)

    def compute_rss(self, tx: int, rx: int, k: int, shadowing: bool = True) -> float:
        """RSS (dBm) of the best beam pair; the AP uses codebook ``k``, UEs codebook 1."""
        if tx == rx:
            raise ValueError("a link needs two distinct devices")
        cfg = self.cfg
        d = self.distance(tx, rx)
        if d <= 0:
            raise ValueError("coincident devices %d and %d" % (tx, rx))
        x = self.rng.normal(0.0, cfg.shadowing_db) if shadowing and cfg.shadowing_db > 0 else 0.0
        pl = los_path_loss_db(d, cfg.carrier_ghz, x)
        ch = self.chain(tx, rx)
        if ch.H > 0:
            pl += ch.pl_block
        if tx == AP:
            p_tx, g_tx = cfg.p_ap_dbm, self.gains[k - 1]
        else:
            p_tx, g_tx = cfg.p_ue_dbm, self.gains[0]
        return p_tx + g_tx + self.gains[0] - pl - cfg.margin_db

    def _geometry(self, tx: int, rx: int):
        """Global LOS angle tx->rx and its angular rate (rad/s)."""
        a, b = self.mobility[tx], self.mobility[rx]
        dx, dy = b.x - a.x, b.y - a.y
        va, vb = a.velocity, b.velocity
        dvx, dvy = vb[0] - va[0], vb[1] - va[1]
        d2 = dx * dx + dy * dy
        return math.atan2(dy, dx), (dx * dvy - dy * dvx) / d2

    def outage_coefficient(self, tx: int, rx: int, k: int, dt_duration: float) -> float:
        """Outage share of the data phase for link tx->rx with TX codebook ``k``.

        Pointing errors start from a residual drawn uniformly in a quarter
        beamwidth either side and drift with the LOS angular rate minus the
        endpoint's own rotation.
        """
        _, w_los = self._geometry(tx, rx)
        bw_tx = self.codebooks[k - 1].azimuth_beamwidth if tx == AP else self.ue_codebook.azimuth_beamwidth
        bw_rx = self.ue_codebook.azimuth_beamwidth
        u = self.rng.uniform(-1.0, 1.0, size=2)
        rates = (w_los - self.mobility[tx].rotation_rate, w_los - self.mobility[rx].rotation_rate)
        return outage_fraction((bw_tx, bw_rx), (0.25 * bw_tx * u[0], 0.25 * bw_rx * u[1]), rates, dt_duration)

    def _tracking_hit(self, rx: int, k: int) -> bool:
        """Whether the tracking sweep still covers the LOS direction at both ends."""
        if self._last_align is None or self._last_align[0] != rx:
            return False
        _, ap_dir, ue_dir = self._last_align
        ap_now, ue_now = self._device_directions(rx)
        cb = self.codebooks[k - 1]
        if cb.beam_index(ap_now) not in tracking_subset(cb.n_beams, cb.beam_index(ap_dir), self.phi_track):
            return False
        ue = self.ue_codebook
        return ue.beam_index(ue_now) in tracking_subset(ue.n_beams, ue.beam_index(ue_dir), self.phi_track)

    def _device_directions(self, rx: int):
        ang, _ = self._geometry(AP, rx)
        ap, ue = self.mobility[AP], self.mobility[rx]
        return ang - ap.orientation, ang + math.pi - ue.orientation

    def _link(self, tx: int, rx: int, k: int, coeff: float, tracking: bool = False) -> LinkOutcome:
        rss = self.compute_rss(tx, rx, k)
        if tracking and not self._tracking_hit(rx, k):
            rss = -math.inf
        m = self.mcs.select(rss)
        rate = self.mcs.rate(m)
        out = self.outage_coefficient(tx, rx, k, coeff * self.cfg.t_slot) if rate > 0 else 0.0
        eff = (1.0 - out) * coeff
        packets = int(rate * eff * self._bits_per_slot)
        return LinkOutcome(rss, m, rate, eff, packets, self.chain(tx, rx).H > 0, out)

    # -- dynamics --------------------------------------------------------
    def _dequeue(self, u0: int, n: int, delays) -> int:
        got = 0
        t = self.t
        for slot, cnt in self.queues[u0].pop(n):
            delays.append((u0, t - slot + 1, cnt))
            got += cnt
        return got

    def execute_slot(self, a: Action) -> SlotResult:
        a = Action(*a)
        s = ObservableState(self.queue_lengths(), self.b_d2d, self.b_track, None)
        check_feasible(a, s)
        if not (1 <= a.cb <= self.n_cb and 1 <= a.dest <= self.n_ue and 1 <= a.rx <= self.n_ue):
            raise ValueError("action %r out of range" % (a,))
        n = self.n_ue
        d = np.zeros(n, dtype=np.int64)
        delivered = np.zeros(n, dtype=np.int64)
        delays = []
        res = SlotResult(self.t, a, d, delivered, None, None, delays=delays)

        pending = self.pending_relay
        if pending is not None:
            d2d = self._link(pending.tx, pending.rx, 1, self.c_normal[0])
            u0 = pending.rx - 1
            d[u0] = min(pending.packets, d2d.packets)
            delivered[u0] = self._dequeue(u0, d[u0], delays)
            res.d2d, res.d2d_pair, res.prev_main = d2d, (pending.tx, pending.rx), pending.main
            self.pending_relay = None

        tracking = bool(self.b_track.any())
        k = a.cb
        coeff = self.c_track[k - 1] if tracking else self.c_normal[k - 1]
        main = self._link(AP, a.rx, k, coeff, tracking)
        res.main, res.tracking_slot = main, tracking
        res.main_blocked = main.blocked
        self._last_align = (a.rx,) + self._device_directions(a.rx)
        u0 = a.dest - 1
        if a.dest == a.rx:
            d[u0] += main.packets
            delivered[u0] += self._dequeue(u0, main.packets, delays)
        else:
            handed = min(main.packets, self.queues[u0].length)
            self.pending_relay = PendingRelay(a.rx, a.dest, handed, main, self.queues[u0].head(handed))

        self.b_d2d[:] = False
        if a.dest != a.rx:
            self.b_d2d[a.dest - 1] = self.b_d2d[a.rx - 1] = True
        self.b_track[:] = False
        if a.track:
            self.b_track[a.rx - 1] = True
        self.last_action = a

        z = self.rng.poisson(self.lam)
        for u in range(n):
            self.queues[u].push(self.t, int(z[u]))
        res.arrivals = z
        t_slot, rng, params = self.cfg.t_slot, self.rng, self.mob_params
        for m in self.mobility:
            step_mobility(m, t_slot, params, rng)
        for ch in self.blockage_main:
            ch.step(rng)
        for ch in self.blockage_d2d:
            ch.step(rng)
        self.t += 1
        return res
