"""Scenario configuration: defaults, plain-text key/value loader and validation.

A scenario file is a list of ``key = value`` lines. ``#`` starts a comment.
Sequences are comma separated and fractions such as ``3/7`` are accepted.
Keys with a dotted prefix address nested sections::

    ue_distances = 10, 10, 15, 25, 30
    traffic_split = 1/7, 3/7, 1/7, 1/7, 1/7
    block_p.3 = 0, 0.1, 0.1, 0.1, 0.1, 0.1      # p_1 .. p_N for UE 3
    ppo.batch = 5
    mab.n_init = 5
    change.100.ue_distances = 12, 9, 15, 25, 30  # applied at iteration 100

Every key that is not given keeps its default, so an empty file yields the
reference five-UE scenario.
"""
import math
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from typing import Dict, Optional, Tuple, get_type_hints

__all__ = [
    "ConfigError",
    "PpoConfig",
    "MabConfig",
    "ScenarioConfig",
    "load_scenario",
    "parse_scenario",
    "DEFAULT_MCS_RSS_DBM",
    "DEFAULT_MCS_RATE_MBPS",
]

# 802.11ad single-carrier PHY rates, MCS 1..12.
DEFAULT_MCS_RATE_MBPS = (
    385.0, 770.0, 962.5, 1155.0, 1251.25, 1540.0,
    1925.0, 2310.0, 2502.5, 3080.0, 3850.0, 4620.0,
)
# Minimum RSS per MCS 1..12, placed by simulation (README, "MCS thresholds").
DEFAULT_MCS_RSS_DBM = (
    -70.0, -69.0, -68.0, -67.0, -64.0, -38.0,
    -37.0, -36.0, -35.0, -34.0, -33.0, -32.0,
)

LIGHT_BLOCKAGE = (0.0, 0.0026, 0.0026, 0.0026, 0.0026, 0.0026)
HEAVY_BLOCKAGE = (0.0, 0.1, 0.1, 0.1, 0.1, 0.1)


class ConfigError(ValueError):
    """Raised for malformed or inconsistent scenario files.

    ``key`` names the offending setting when a check concerns one key, so
    the loader can point at the line that set it.
    """

    def __init__(self, msg: str, key: Optional[str] = None):
        super().__init__(msg)
        self.key = key


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.999
    clip: float = 0.2
    entropy_coef: float = 0.05
    batch: int = 5
    lr: float = 1e-3
    lr_decay: float = 0.9
    # counted in gradient updates; 6000 updates is 20 iterations of 1500 slots
    decay_every: int = 6000
    hidden: Tuple[int, ...] = (128, 128, 128)
    # separate actor and critic trunks; a shared trunk lets the critic swamp the policy
    shared_trunk: bool = False
    reward_scale_gbps: float = 2.0
    n_block_tilde: int = 10
    # restart the environment at every iteration boundary while training
    episode_reset: bool = True


@dataclass(frozen=True)
class MabConfig:
    n_init: int = 5
    use_relay: bool = True
    use_tracking: bool = True
    # 0 lets the codebook learner choose; k in [1, K] pins codebook k.
    fixed_codebook: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    # radio
    carrier_ghz: float = 60.0
    bandwidth_hz: float = 2.16e9
    shadowing_db: float = 2.0
    margin_db: float = 10.0
    p_ap_dbm: float = 15.0
    p_ue_dbm: float = 10.0
    # timing and traffic
    t_slot: float = 10e-3
    t_meas: float = 10e-6
    phi_track_deg: float = 30.0
    packet_bits: int = 2312 * 8
    total_load_gbps: float = 1.0
    traffic_split: Tuple[float, ...] = (1 / 7, 3 / 7, 1 / 7, 1 / 7, 1 / 7)
    # arrays and codebooks
    n_arr_ap: int = 4
    n_arr_ue: int = 4
    codebook_beams: Tuple[int, ...] = (24, 32, 64, 128, 256, 512)
    elevation_deg: float = 75.0
    # blockage
    block_loss_db: Tuple[float, ...] = (10.0, 30.0)
    block_max_slots: int = 6
    block_p: Dict[int, Tuple[float, ...]] = field(default_factory=lambda: {3: HEAVY_BLOCKAGE})
    block_p_ue: Tuple[float, ...] = LIGHT_BLOCKAGE
    block_p_d2d: Tuple[float, ...] = LIGHT_BLOCKAGE
    # mobility; AP sits at the origin
    speed_range: Tuple[float, ...] = (0.0, 10.0)
    rotation_range_deg: Tuple[float, ...] = (0.0, 10.0)
    mobility_period: int = 20
    move_radius: float = 5.0
    ue_distances: Tuple[float, ...] = (10.0, 10.0, 15.0, 25.0, 30.0)
    ue_angles_deg: Tuple[float, ...] = (5.0, 85.0, 45.0, 10.0, 80.0)
    # rate adaptation
    mcs_rss_dbm: Tuple[float, ...] = DEFAULT_MCS_RSS_DBM
    mcs_rate_mbps: Tuple[float, ...] = DEFAULT_MCS_RATE_MBPS
    # run plan
    seed: int = 0
    iterations: int = 240
    slots_per_iteration: int = 1500
    train_realizations: int = 20
    test_realizations: int = 200
    controller: str = "mab"
    ppo: PpoConfig = PpoConfig()
    mab: MabConfig = MabConfig()
    # iteration -> tuple of (key, raw value, line number)
    changes: Dict[int, Tuple[Tuple[str, str, int], ...]] = field(default_factory=dict)

    @property
    def n_ue(self) -> int:
        return len(self.ue_distances)

    @property
    def n_codebooks(self) -> int:
        return len(self.codebook_beams)

    @property
    def n_mcs(self) -> int:
        """Number of non-zero MCS levels (M)."""
        return len(self.mcs_rate_mbps)

    @property
    def noise_dbm(self) -> float:
        return -174.0 + 10.0 * math.log10(self.bandwidth_hz) + 10.0

    @property
    def arrival_rates(self) -> Tuple[float, ...]:
        """Mean packet arrivals per slot for each UE."""
        total = self.total_load_gbps * 1e9 * self.t_slot / self.packet_bits
        return tuple(total * f for f in self.traffic_split)

    def blockage_probs(self, ue: int) -> Tuple[float, ...]:
        """Full transition vector (p_0, ..., p_N) for the AP link of UE ``ue`` (1-based)."""
        tail = self.block_p.get(ue, self.block_p_ue)
        return (1.0 - sum(tail),) + tuple(tail)

    def d2d_blockage_probs(self) -> Tuple[float, ...]:
        return (1.0 - sum(self.block_p_d2d),) + tuple(self.block_p_d2d)

    def with_changes(self, iteration: int) -> "ScenarioConfig":
        """Config after applying the deltas scheduled at ``iteration``."""
        deltas = self.changes.get(iteration)
        if not deltas:
            return self
        return _apply(self, deltas, "<change@%d>" % iteration, allow_changes=False)


_SECTIONS = {"ppo": PpoConfig, "mab": MabConfig}


def _parse_scalar(raw: str, typ, where: str):
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(Fraction(raw)) if "/" in raw else float(raw)
        return raw
    except (ValueError, ZeroDivisionError):
        raise ConfigError("%s: cannot parse %r as %s" % (where, raw, typ.__name__)) from None


def _parse_value(raw: str, typ, where: str):
    origin = getattr(typ, "__origin__", None)
    if origin is tuple:
        item = typ.__args__[0]
        parts = [p for p in raw.split(",") if p.strip()]
        if not parts:
            raise ConfigError("%s: empty list" % where)
        return tuple(_parse_scalar(p, item, where) for p in parts)
    return _parse_scalar(raw, typ, where)


def _apply(cfg: ScenarioConfig, entries, source: str, allow_changes: bool = True) -> ScenarioConfig:
    top_hints = get_type_hints(ScenarioConfig)
    top = {}
    sections = {name: {} for name in _SECTIONS}
    block_p = dict(cfg.block_p)
    changes = {k: list(v) for k, v in cfg.changes.items()}
    lines = {}
    for key, raw, lineno in entries:
        lines[key] = lineno
        where = "%s:%d" % (source, lineno)
        head, _, rest = key.partition(".")
        if head == "change" and rest:
            if not allow_changes:
                raise ConfigError("%s: nested change entries are not allowed" % where)
            it, _, sub = rest.partition(".")
            if not sub or not it.isdigit():
                raise ConfigError("%s: expected change.<iteration>.<key>" % where)
            changes.setdefault(int(it), []).append((sub, raw, lineno))
        elif head == "block_p" and rest:
            if not rest.isdigit():
                raise ConfigError("%s: expected block_p.<ue id>" % where)
            block_p[int(rest)] = _parse_value(raw, Tuple[float, ...], where)
        elif head in _SECTIONS and rest:
            hints = get_type_hints(_SECTIONS[head])
            if rest not in hints:
                raise ConfigError("%s: unknown key %r" % (where, key))
            sections[head][rest] = _parse_value(raw, hints[rest], where)
        elif key in top_hints and key not in ("ppo", "mab", "changes", "block_p"):
            top[key] = _parse_value(raw, top_hints[key], where)
        else:
            raise ConfigError("%s: unknown key %r" % (where, key))
    for name, vals in sections.items():
        if vals:
            top[name] = replace(getattr(cfg, name), **vals)
    top["block_p"] = block_p
    top["changes"] = {k: tuple(v) for k, v in changes.items()}
    out = replace(cfg, **top)
    try:
        validate(out)
    except ConfigError as exc:
        where = source if exc.key not in lines else "%s:%d" % (source, lines[exc.key])
        raise ConfigError("%s: %s" % (where, exc), exc.key) from None
    return out


def validate(cfg: ScenarioConfig) -> None:
    def check(ok, key, msg):
        if not ok:
            raise ConfigError(msg, key)

    u = cfg.n_ue
    check(u >= 2, "ue_distances", "at least two UEs are required")
    check(len(cfg.ue_angles_deg) == u, "ue_angles_deg",
          "ue_angles_deg has %d entries, expected %d" % (len(cfg.ue_angles_deg), u))
    check(len(cfg.traffic_split) == u, "traffic_split",
          "traffic_split has %d entries, expected %d" % (len(cfg.traffic_split), u))
    check(all(f >= 0 for f in cfg.traffic_split) and abs(sum(cfg.traffic_split) - 1.0) <= 1e-9, "traffic_split",
          "traffic_split must be nonnegative and sum to 1 (got %.6g)" % sum(cfg.traffic_split))
    check(all(d > 0 for d in cfg.ue_distances), "ue_distances", "ue_distances must be positive")
    check(0 < cfg.t_meas < cfg.t_slot, "t_meas", "need 0 < t_meas < t_slot")
    check(0 < cfg.phi_track_deg <= 360, "phi_track_deg", "phi_track_deg must lie in (0, 360]")
    check(cfg.packet_bits > 0, "packet_bits", "packet_bits must be positive")
    check(cfg.total_load_gbps >= 0, "total_load_gbps", "total_load_gbps must be nonnegative")
    check(bool(cfg.codebook_beams) and all(n >= 1 for n in cfg.codebook_beams), "codebook_beams",
          "codebook_beams must be positive integers")
    check(cfg.n_arr_ap >= 1, "n_arr_ap", "array counts must be >= 1")
    check(cfg.n_arr_ue >= 1, "n_arr_ue", "array counts must be >= 1")
    check(len(cfg.block_loss_db) == 2 and cfg.block_loss_db[0] <= cfg.block_loss_db[1], "block_loss_db",
          "block_loss_db must be an interval lo, hi")
    check(cfg.block_max_slots >= 1, "block_max_slots", "block_max_slots must be >= 1")
    tails = [("block_p_ue", cfg.block_p_ue), ("block_p_d2d", cfg.block_p_d2d)]
    tails += [("block_p.%d" % k, v) for k, v in cfg.block_p.items()]
    for name, tail in tails:
        check(len(tail) == cfg.block_max_slots, name, "%s needs %d entries (p_1..p_N)" % (name, cfg.block_max_slots))
        check(all(p >= 0 for p in tail) and sum(tail) <= 1.0 + 1e-12, name,
              "%s: probabilities must be >= 0 with sum <= 1" % name)
    for k in cfg.block_p:
        check(1 <= k <= u, "block_p.%d" % k, "block_p.%d refers to a UE outside 1..%d" % (k, u))
    check(len(cfg.speed_range) == 2 and 0 <= cfg.speed_range[0] <= cfg.speed_range[1], "speed_range",
          "speed_range must be 0 <= lo <= hi")
    check(len(cfg.rotation_range_deg) == 2 and 0 <= cfg.rotation_range_deg[0] <= cfg.rotation_range_deg[1],
          "rotation_range_deg", "rotation_range_deg must be 0 <= lo <= hi")
    check(cfg.mobility_period >= 1, "mobility_period", "mobility_period must be >= 1")
    check(cfg.move_radius >= 0, "move_radius", "move_radius must be >= 0")
    rates, rss = cfg.mcs_rate_mbps, cfg.mcs_rss_dbm
    check(len(rss) == len(rates) and len(rates) > 0, "mcs_rss_dbm",
          "mcs_rss_dbm and mcs_rate_mbps must have equal nonzero length")
    check(rates[0] > 0 and all(b > a for a, b in zip(rates, rates[1:])), "mcs_rate_mbps",
          "mcs_rate_mbps must be positive and strictly increasing")
    check(all(b > a for a, b in zip(rss, rss[1:])), "mcs_rss_dbm", "mcs_rss_dbm must be strictly increasing")
    check(cfg.iterations >= 0, "iterations", "iterations must be >= 0")
    check(cfg.slots_per_iteration >= 1, "slots_per_iteration", "slots_per_iteration must be >= 1")
    check(cfg.train_realizations >= 1, "train_realizations", "train_realizations must be >= 1")
    check(cfg.test_realizations >= 1, "test_realizations", "test_realizations must be >= 1")
    check(cfg.controller in ("ppo", "mab"), "controller", "controller must be 'ppo' or 'mab'")
    p = cfg.ppo
    check(0 <= p.gamma <= 1, "ppo.gamma", "ppo.gamma must lie in [0, 1]")
    check(p.clip > 0, "ppo.clip", "ppo.clip must be positive")
    check(p.entropy_coef >= 0, "ppo.entropy_coef", "ppo.entropy_coef must be nonnegative")
    check(p.batch >= 1, "ppo.batch", "ppo.batch must be >= 1")
    check(p.lr > 0, "ppo.lr", "ppo.lr must be positive")
    check(0 < p.lr_decay <= 1, "ppo.lr_decay", "ppo.lr_decay must lie in (0, 1]")
    check(p.decay_every >= 1, "ppo.decay_every", "ppo.decay_every must be >= 1")
    check(all(h >= 1 for h in p.hidden), "ppo.hidden", "ppo.hidden sizes must be >= 1")
    check(p.n_block_tilde > cfg.block_max_slots, "ppo.n_block_tilde", "ppo.n_block_tilde must exceed block_max_slots")
    check(p.reward_scale_gbps > 0, "ppo.reward_scale_gbps", "ppo.reward_scale_gbps must be positive")
    check(cfg.mab.n_init >= 0, "mab.n_init", "mab.n_init must be >= 0")
    check(0 <= cfg.mab.fixed_codebook <= cfg.n_codebooks, "mab.fixed_codebook",
          "mab.fixed_codebook must lie in 0..%d" % cfg.n_codebooks)


def _entries(text: str, source: str):
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError("%s:%d: expected 'key = value'" % (source, lineno))
        if not raw.strip():
            raise ConfigError("%s:%d: missing value for %r" % (source, lineno, key.strip()))
        yield key.strip(), raw.strip(), lineno


def parse_scenario(text: str, source: str = "<string>", base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    base = ScenarioConfig() if base is None else base
    return _apply(base, list(_entries(text, source)), source)


def load_scenario(path) -> ScenarioConfig:
    with open(path) as fh:
        text = fh.read()
    return parse_scenario(text, str(path))


def scenario_fields():
    return [f.name for f in fields(ScenarioConfig)]
