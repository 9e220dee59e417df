"""Static-threshold fault detector (sliding window sum).

The verdict at round k is Fault iff the sum of the monitored agent's last d
quantized priorities exceeds kappa (strict comparison). The sum acts as a
low pass on the detection decision: larger d smooths the verdict but delays
detection. Until d samples exist the verdict is NoFault, so startup cannot
raise alarms. O(1) per update, O(d) memory.
"""

from __future__ import annotations

from collections import deque

import numpy as np


class StaticDetector:
    """One instance per (observer, monitored) pair; instances independent."""

    def __init__(self, agent: int, kappa: float, d: int):
        if d < 1:
            raise ValueError(f"horizon d must be >= 1, got {d}")
        self.agent = agent
        self.kappa = float(kappa)
        self.d = d
        self.window = deque(maxlen=d)
        self._sum = 0

    def update(self, g_new: int) -> bool:
        """Feed the priority of one round (in round order); True = Fault."""
        if len(self.window) == self.d:
            self._sum -= self.window[0]
        self.window.append(g_new)
        self._sum += g_new
        if len(self.window) < self.d:
            return False
        return self._sum > self.kappa

    @property
    def window_sum(self) -> int:
        return self._sum


def sfd_update(state: StaticDetector, g_new: int) -> bool:
    return state.update(g_new)


def sfd_verdicts(priorities: np.ndarray, kappa: float, d: int) -> np.ndarray:
    """Vectorized replay: verdicts for rounds 0..T-1 given the full priority
    sequence of one agent. Identical to feeding StaticDetector round by
    round."""
    q = np.asarray(priorities, dtype=np.int64)
    sums = window_sums(q, d)
    out = np.zeros(q.shape[0], dtype=bool)
    out[d - 1:] = sums > kappa
    return out


def window_sums(priorities: np.ndarray, d: int) -> np.ndarray:
    """Sums over [k-d+1, k] for k = d-1 .. T-1 (length T-d+1)."""
    q = np.asarray(priorities, dtype=np.int64)
    if q.shape[0] < d:
        return np.zeros(0, dtype=np.int64)
    c = np.concatenate(([0], np.cumsum(q)))
    return c[d:] - c[:-d]
