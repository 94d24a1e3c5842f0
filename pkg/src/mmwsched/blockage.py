"""Countdown Markov chain for link blockage."""
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# initial age for links that have never been seen blocked
NEVER_BLOCKED = 10**6


@dataclass
class BlockageChain:
    """State ``H`` is the number of remaining blocked slots (0 means LOS).

    ``probs[n]`` is the chance of drawing an event of length ``n`` whenever a
    new draw happens; ``n = 0`` keeps the link clear for one slot.
    """

    probs: np.ndarray
    loss_range: tuple = (10.0, 30.0)
    H: int = 0
    l_block: int = NEVER_BLOCKED
    pl_block: float = 0.0
    _cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError("blockage probabilities must be >= 0 and sum to 1")
        self._cdf = np.cumsum(self.probs)

    @property
    def n_max(self) -> int:
        return len(self.probs) - 1

    @property
    def blocked(self) -> bool:
        return self.H > 0

    def step(self, rng: np.random.Generator) -> "BlockageChain":
        """Advance one slot.

        An ongoing event counts down. A fresh draw happens once the countdown
        would expire (``H`` in {0, 1}), so back-to-back events are possible.
        """
        if self.H > 1:
            self.H -= 1
            self.l_block += 1
            return self
        n = int(np.searchsorted(self._cdf, rng.random(), side="right"))
        n = min(n, self.n_max)
        if n > 0:
            self.H = n
            self.l_block = 0
            self.pl_block = rng.uniform(*self.loss_range)
        else:
            self.H = 0
            self.l_block += 1
        return self


def stationary_blocked_fraction(probs: Sequence[float]) -> float:
    """Long-run share of blocked slots for the chain in :class:`BlockageChain`."""
    p = np.asarray(probs, dtype=float)
    mean_len = float(np.dot(np.arange(len(p)), p))
    return mean_len / (mean_len + p[0])
