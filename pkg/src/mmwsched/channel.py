"""Link budget, codebooks, beam-training overhead and the outage model."""
import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


class InfeasibleCodebook(ValueError):
    """Beam training would consume the whole slot."""


def noise_power_dbm(bandwidth_hz: float) -> float:
    return -174.0 + 10.0 * math.log10(bandwidth_hz) + 10.0


def los_path_loss_db(distance_m: float, carrier_ghz: float, shadowing_db: float = 0.0) -> float:
    """Dominant-path LOS loss with ``d`` in meters and ``f_c`` in GHz."""
    if distance_m <= 0:
        raise ValueError("coincident devices: distance must be positive")
    return 28.0 + 22.0 * math.log10(distance_m) + 20.0 * math.log10(carrier_ghz) + shadowing_db


def beam_gain_dbi(azimuth_rad: float, elevation_rad: float) -> float:
    return 10.0 * math.log10(16.0 * math.pi / (6.67 * azimuth_rad * elevation_rad))


@dataclass(frozen=True)
class Codebook:
    id: int
    n_beams: int
    elevation_beamwidth: float

    def __post_init__(self):
        if self.n_beams < 1:
            raise ValueError("a codebook needs at least one beam")

    @property
    def azimuth_beamwidth(self) -> float:
        return TWO_PI / self.n_beams

    @property
    def gain_dbi(self) -> float:
        return beam_gain_dbi(self.azimuth_beamwidth, self.elevation_beamwidth)

    def beam_index(self, angle: float) -> int:
        """Beam whose sector contains ``angle``; sectors start at 0 rad."""
        return int((angle % TWO_PI) // self.azimuth_beamwidth) % self.n_beams

    def beam_center(self, j: int) -> float:
        return (j + 0.5) * self.azimuth_beamwidth


def make_codebooks(beams: Sequence[int], elevation_deg: float):
    ele = math.radians(elevation_deg)
    return [Codebook(k + 1, n, ele) for k, n in enumerate(beams)]


def link_rss_dbm(p_tx_dbm, g_tx_dbi, g_rx_dbi, path_loss_db, margin_db) -> float:
    return p_tx_dbm + g_tx_dbi + g_rx_dbi - path_loss_db - margin_db


class McsTable:
    """RSS to MCS lookup. Row 0 is the failed link (rate 0, threshold -inf).

    ``rss_dbm`` and ``rates_bps`` list MCS 1..M.
    """

    def __init__(self, rss_dbm: Sequence[float], rates_bps: Sequence[float]):
        if len(rss_dbm) != len(rates_bps):
            raise ValueError("threshold and rate lists differ in length")
        if any(b <= a for a, b in zip(rss_dbm, rss_dbm[1:])):
            raise ValueError("MCS thresholds must be strictly increasing")
        rates = [0.0] + list(rates_bps)
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ValueError("MCS rates must be strictly increasing from R_0 = 0")
        self.thresholds = [float(x) for x in rss_dbm]
        self.rates = np.array(rates)
        self._rates = rates

    @property
    def n_levels(self) -> int:
        """M, the number of non-zero levels."""
        return len(self.thresholds)

    def min_rss(self, m: int) -> float:
        return -math.inf if m == 0 else self.thresholds[m - 1]

    def select(self, rss: float) -> int:
        """Largest m with ``rss >= min_rss(m)``."""
        return bisect_right(self.thresholds, rss)

    def rate(self, m: int) -> float:
        return self._rates[m]


def coefficient_normal(n_beams_k, n_beams_ue, n_arr_ap, n_arr_ue, t_meas, t_slot) -> float:
    """Fraction of the slot left for data after a full beam sweep."""
    c = 1.0 - math.ceil(n_beams_k / n_arr_ap) * math.ceil(n_beams_ue / n_arr_ue) * t_meas / t_slot
    if c <= 0:
        raise InfeasibleCodebook("beam sweep of %d x %d beams does not fit in a slot" % (n_beams_k, n_beams_ue))
    return c


def tracking_beam_count(phi_track: float, n_beams: int) -> int:
    if not 0 < phi_track <= TWO_PI:
        raise ValueError("tracking sector must lie in (0, 2pi]")
    # 1e-12 guards ceil() against phi/2pi*N landing a hair above an integer
    return max(1, math.ceil(phi_track / TWO_PI * n_beams - 1e-12))


def coefficient_track(n_beams_k, n_beams_ue, phi_track, t_meas, t_slot) -> float:
    """Fraction of the slot left for data after a tracking sweep."""
    c = 1.0 - tracking_beam_count(phi_track, n_beams_k) * tracking_beam_count(phi_track, n_beams_ue) * t_meas / t_slot
    if c <= 0:
        raise InfeasibleCodebook("tracking sweep does not fit in a slot")
    return c


def tracking_subset(n_beams: int, best_beam: int, phi_track: float):
    """Beam indices swept while tracking, centred on ``best_beam``.

    The count is odd-extended to the left when even, so the sector stays as
    balanced around the current beam as an integer split allows.
    """
    n = min(tracking_beam_count(phi_track, n_beams), n_beams)
    left = n // 2
    return [(best_beam - left + i) % n_beams for i in range(n)]


def exit_time(half_width: float, residual: float, rate: float) -> float:
    """Time until a linearly drifting pointing error leaves the main lobe."""
    if rate == 0.0:
        return math.inf
    margin = half_width - residual if rate > 0 else half_width + residual
    return max(margin, 0.0) / abs(rate)


def outage_fraction(beamwidths, residuals, rates, dt_duration: float) -> float:
    """Share of the data phase during which either endpoint is misaligned.

    ``beamwidths``, ``residuals`` and ``rates`` hold one value per endpoint:
    the azimuth beamwidth, the pointing error right after alignment and the
    angular drift rate of the pointing error (rad/s).
    """
    if dt_duration <= 0:
        return 0.0
    t_out = min(exit_time(0.5 * bw, e0, w) for bw, e0, w in zip(beamwidths, residuals, rates))
    if t_out >= dt_duration:
        return 0.0
    return (dt_duration - t_out) / dt_duration
