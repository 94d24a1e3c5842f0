"""Training/testing orchestration, per-iteration metrics and plot-ready output files."""
import os
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import MabConfig, ScenarioConfig
from .env import MmWaveEnv
from .mab import MabController
from .ppo import PpoController

CONTROLLER_KINDS = ("ppo", "mab", "mab-no-relay", "mab-fixed-cb=<k>", "mab-no-track")


@dataclass
class MetricsRow:
    iteration: int
    avg_delay_ms: float
    rate_gbps: float
    blockage_pct: float  # percent of slots whose main-link receiver was blocked
    mean_queue_len: float  # total backlog, averaged over slots
    delivered: int
    per_ue_delay_ms: Tuple[float, ...]
    backlog: Tuple[int, ...] = ()  # per-UE queue length at the end of the iteration

    def columns(self) -> List[str]:
        return ["iteration", "avg_delay_ms", "rate_gbps", "blockage_pct", "mean_queue_len", "delivered"] + [
            "delay_ue%d_ms" % (u + 1) for u in range(len(self.per_ue_delay_ms))] + [
            "backlog_ue%d" % (u + 1) for u in range(len(self.backlog))]

    def values(self) -> List[str]:
        return [str(self.iteration), "%.6f" % self.avg_delay_ms, "%.6f" % self.rate_gbps,
                "%.6f" % self.blockage_pct, "%.6f" % self.mean_queue_len, str(self.delivered)] + [
            "%.6f" % d for d in self.per_ue_delay_ms] + [str(b) for b in self.backlog]


class SlotStats:
    """Accumulates slot results into one :class:`MetricsRow`."""

    def __init__(self, n_ue: int, t_slot: float, packet_bits: int):
        self.n_ue, self.t_slot, self.packet_bits = n_ue, t_slot, packet_bits
        self.slots = 0
        self.blocked = 0
        self.queue_sum = 0
        self.delivered = np.zeros(n_ue, dtype=np.int64)
        self.delay_sum = np.zeros(n_ue)  # in slots
        self.hist: Counter = Counter()  # delay in slots -> packets
        self.backlog = np.zeros(n_ue, dtype=np.int64)

    def add(self, res, queues) -> None:
        self.slots += 1
        self.blocked += res.main_blocked
        self.backlog = np.asarray(queues, dtype=np.int64)
        self.queue_sum += int(self.backlog.sum())
        for u, dl, c in res.delays:
            self.delivered[u] += c
            self.delay_sum[u] += dl * c
            self.hist[dl] += c

    def merge(self, other: "SlotStats") -> None:
        self.slots += other.slots
        self.blocked += other.blocked
        self.queue_sum += other.queue_sum
        self.delivered += other.delivered
        self.delay_sum += other.delay_sum
        self.hist.update(other.hist)
        self.backlog = other.backlog

    def row(self, iteration: int) -> MetricsRow:
        ms = self.t_slot * 1e3
        n = int(self.delivered.sum())
        per_ue = tuple(float(s / d * ms) if d else 0.0 for s, d in zip(self.delay_sum, self.delivered))
        slots = max(self.slots, 1)
        return MetricsRow(
            iteration=iteration,
            avg_delay_ms=float(self.delay_sum.sum() / n * ms) if n else 0.0,
            rate_gbps=n * self.packet_bits / (slots * self.t_slot * 1e9),
            blockage_pct=100.0 * self.blocked / slots,
            mean_queue_len=self.queue_sum / slots,
            delivered=n,
            per_ue_delay_ms=per_ue,
            backlog=tuple(int(b) for b in self.backlog),
        )


def parse_controller(kind: str, base: MabConfig) -> Tuple[str, Optional[MabConfig]]:
    """Map a CLI controller name to ('ppo', None) or ('mab', MabConfig)."""
    if kind == "ppo":
        return "ppo", None
    if kind == "mab":
        return "mab", base
    if kind == "mab-no-relay":
        return "mab", replace(base, use_relay=False)
    if kind == "mab-no-track":
        return "mab", replace(base, use_tracking=False)
    if kind.startswith("mab-fixed-cb="):
        try:
            k = int(kind.split("=", 1)[1])
        except ValueError:
            raise ValueError("bad controller %r: codebook must be an integer" % kind) from None
        return "mab", replace(base, fixed_codebook=k)
    raise ValueError("unknown controller %r (expected one of %s)" % (kind, ", ".join(CONTROLLER_KINDS)))


def make_controller(kind: str, cfg: ScenarioConfig, seed: int):
    family, mab_cfg = parse_controller(kind, cfg.mab)
    if family == "ppo":
        return PpoController(cfg.n_ue, cfg.n_codebooks, cfg.ppo, cfg.t_slot, cfg.packet_bits, seed=seed)
    if mab_cfg.fixed_codebook > cfg.n_codebooks:
        raise ValueError("codebook %d does not exist (K = %d)" % (mab_cfg.fixed_codebook, cfg.n_codebooks))
    rates = np.array([0.0] + [r * 1e6 for r in cfg.mcs_rate_mbps])
    return MabController(cfg.n_ue, cfg.n_codebooks, rates, mab_cfg, seed=seed)


def _child_seeds(seed: int, n: int) -> List[int]:
    ss = np.random.SeedSequence(seed)
    return [int(s.generate_state(1)[0]) for s in ss.spawn(n)]


def run_slots(env: MmWaveEnv, ctl, n_slots: int, stats: SlotStats) -> None:
    needs_mask = isinstance(ctl, PpoController)
    for _ in range(n_slots):
        s = env.observe()
        mask = env.mask() if needs_mask or not getattr(ctl, "init_done", True) else None
        res = env.execute_slot(ctl.act(s, mask))
        ctl.observe(res)
        stats.add(res, env.queue_lengths())


def _episodic(ctl, cfg: ScenarioConfig) -> bool:
    return isinstance(ctl, PpoController) and cfg.ppo.episode_reset


def train(cfg: ScenarioConfig, kind: str, seed: int, iterations: Optional[int] = None,
          out_dir=None, checkpoint_every: int = 1, on_row: Optional[Callable[[MetricsRow], None]] = None,
          controller=None, stop: Optional[Callable[[List[MetricsRow]], bool]] = None):
    """Train online for ``iterations`` x ``slots_per_iteration`` slots.

    Returns (rows, controller, delay histogram of the last iteration).
    Scenario changes scheduled at iteration ``i`` are applied before it runs;
    the controller is never reset. ``stop(rows)`` returning True ends training early.
    """
    iterations = cfg.iterations if iterations is None else iterations
    env_seed, ctl_seed = _child_seeds(seed, 2)
    env = MmWaveEnv(cfg, seed=env_seed)
    ctl = make_controller(kind, cfg, ctl_seed) if controller is None else controller
    ctl.learning = True
    rows: List[MetricsRow] = []
    last_hist: Counter = Counter()
    current = cfg
    for it in range(iterations):
        nxt = current.with_changes(it)
        if nxt is not current:
            current = nxt
            env.apply_config(current)
        stats = SlotStats(cfg.n_ue, current.t_slot, current.packet_bits)
        run_slots(env, ctl, current.slots_per_iteration, stats)
        if _episodic(ctl, current):
            ctl.end_episode(env.observe())
            env.reset()
        row = stats.row(it + 1)
        rows.append(row)
        last_hist = stats.hist
        if on_row is not None:
            on_row(row)
        if out_dir is not None and checkpoint_every and ((it + 1) % checkpoint_every == 0 or it + 1 == iterations):
            ctl.save(os.path.join(out_dir, "checkpoint_%d.bin" % (it + 1)))
        if stop is not None and stop(rows):
            break
    return rows, ctl, last_hist


def test(cfg: ScenarioConfig, kind: str, seed: int, realizations: Optional[int] = None,
         checkpoint=None, controller=None):
    """Evaluate a frozen controller on fresh environments.

    Returns (one row per realization, pooled row, pooled delay histogram).
    """
    realizations = cfg.test_realizations if realizations is None else realizations
    if controller is None:
        controller = make_controller(kind, cfg, _child_seeds(seed, 1)[0])
        if checkpoint is not None:
            controller.load(checkpoint)
    ctl = controller
    was_learning = ctl.learning
    ctl.learning = False
    rows = []
    pooled = SlotStats(cfg.n_ue, cfg.t_slot, cfg.packet_bits)
    try:
        for r, s in enumerate(_child_seeds(seed, realizations)):
            env = MmWaveEnv(cfg, seed=s)
            stats = SlotStats(cfg.n_ue, cfg.t_slot, cfg.packet_bits)
            run_slots(env, ctl, cfg.slots_per_iteration, stats)
            rows.append(stats.row(r + 1))
            pooled.merge(stats)
    finally:
        ctl.learning = was_learning
    return rows, pooled.row(0), pooled.hist


def emit_metrics(rows: Sequence[MetricsRow], path) -> None:
    if not rows:
        raise ValueError("no metric rows to write")
    lines = ["\t".join(rows[0].columns())] + ["\t".join(r.values()) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def delay_cdf(hist: Dict[int, int], t_slot: float) -> List[Tuple[float, float]]:
    """Sorted (delay_ms, cumulative fraction) pairs; the last fraction is exactly 1."""
    total = sum(hist.values())
    out = []
    acc = 0
    for d in sorted(hist):
        acc += hist[d]
        out.append((d * t_slot * 1e3, acc / total))
    if out:
        out[-1] = (out[-1][0], 1.0)
    return out


def emit_delay_cdf(hist: Dict[int, int], t_slot: float, path) -> None:
    lines = ["delay_ms\tcumulative_fraction"] + ["%.3f\t%.9f" % p for p in delay_cdf(hist, t_slot)]
    Path(path).write_text("\n".join(lines) + "\n")


def moving_average(x: Sequence[float], window: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if len(x) < window:
        return np.array([])
    c = np.cumsum(np.insert(x, 0, 0.0))
    return (c[window:] - c[:-window]) / window


def first_below(rows: Sequence[MetricsRow], threshold_ms: float, window: int = 5) -> Optional[int]:
    """First iteration whose trailing ``window``-iteration mean delay is below the threshold."""
    ma = moving_average([r.avg_delay_ms for r in rows], window)
    hit = np.flatnonzero(ma < threshold_ms)
    return int(rows[hit[0] + window - 1].iteration) if hit.size else None
