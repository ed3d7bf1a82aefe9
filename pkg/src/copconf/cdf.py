"""Windowed estimators of the next-score CDF.

Three flavours are provided: the empirical CDF over a sliding window, a
Gaussian-kernel smoothed CDF with Silverman's bandwidth, and a noise
corrupted wrapper used for robustness experiments.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right, insort
from collections import deque
from enum import Enum
from typing import Iterable

import numpy as np

from .errors import EstimatorUnreadyError

SQRT2 = math.sqrt(2.0)


class CdfKind(str, Enum):
    ECDF = "ecdf"
    GAUSSIAN_KDE = "kde"
    NOISY = "noisy"


def order_statistic_index(p: float, n: int) -> int:
    """1-based index ``ceil(p * n)`` clipped to ``[1, n]``."""
    # the tolerance stops 0.9 * 100 style products from rounding up a slot
    k = math.ceil(p * n - 1e-12 * n)
    return min(max(k, 1), n)


class ScoreWindow:
    """Bounded FIFO of recent scores with a sorted shadow copy.

    The sorted copy makes ECDF evaluation and order statistics
    ``O(log n)``; pushes cost ``O(n)`` list shifting, which is
    negligible at the window sizes used here.
    """

    __slots__ = ("capacity", "_fifo", "_sorted")

    def __init__(self, capacity: int = 100, values: Iterable[float] = ()):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self._fifo: deque[float] = deque()
        self._sorted: list[float] = []
        for v in values:
            self.push(v)

    def push(self, x: float) -> None:
        x = float(x)
        if len(self._fifo) == self.capacity:
            old = self._fifo.popleft()
            del self._sorted[bisect_left(self._sorted, old)]
        self._fifo.append(x)
        insort(self._sorted, x)

    def __len__(self) -> int:
        return len(self._fifo)

    @property
    def values(self) -> tuple[float, ...]:
        """Window contents, oldest first."""
        return tuple(self._fifo)

    @property
    def sorted_values(self) -> list[float]:
        return self._sorted

    def max(self) -> float:
        return self._sorted[-1]

    def min(self) -> float:
        return self._sorted[0]

    def spread(self) -> float:
        """``max - min`` of the window, 0 when empty."""
        if not self._sorted:
            return 0.0
        return self._sorted[-1] - self._sorted[0]

    def ecdf(self, x: float) -> float:
        n = len(self._sorted)
        if n == 0:
            raise EstimatorUnreadyError("empty score window")
        return bisect_right(self._sorted, x) / n

    def quantile(self, p: float) -> float:
        """Order statistic at ``ceil(p * n)``."""
        n = len(self._sorted)
        if n == 0:
            raise EstimatorUnreadyError("empty score window")
        return self._sorted[order_statistic_index(p, n) - 1]

    def copy(self) -> "ScoreWindow":
        return ScoreWindow(self.capacity, self._fifo)


def normal_cdf(z: float) -> float:
    """Standard normal CDF via the complementary error function.

    ``math.erfc`` is accurate to a few ulps, far inside the 1e-7 budget,
    and avoids the cancellation ``0.5 * (1 + erf(z))`` suffers in the
    lower tail.
    """
    return 0.5 * math.erfc(-z / SQRT2)


def ecdf_eval(window: ScoreWindow, x: float) -> float:
    """Fraction of window scores ``<= x``."""
    return window.ecdf(x)


def silverman_bandwidth(window: ScoreWindow) -> float:
    """Silverman's rule ``0.9 * min(std, IQR / 1.34) * n ** -0.2``.

    The standard deviation is the sample one (``ddof=1``) and the IQR
    uses linearly interpolated quartiles. A zero dispersion falls back to
    ``max(1e-9, 1e-9 * |mean|)`` so kernel arguments stay finite.
    """
    n = len(window)
    if n < 2:
        raise EstimatorUnreadyError("bandwidth needs at least two scores")
    arr = np.asarray(window.sorted_values)
    std = float(arr.std(ddof=1))
    q25, q75 = np.percentile(arr, [25, 75])
    sigma = min(std, float(q75 - q25) / 1.34)
    if sigma <= 0.0:
        return max(1e-9, 1e-9 * abs(float(arr.mean())))
    return 0.9 * sigma * n ** -0.2


def kde_cdf_eval(window: ScoreWindow, h: float, x: float) -> float:
    """Gaussian-kernel CDF ``mean(Phi((x - s_i) / h))``."""
    n = len(window)
    if n == 0:
        raise EstimatorUnreadyError("empty score window")
    if not h > 0.0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    scale = -1.0 / (h * SQRT2)
    total = 0.0
    for s in window.sorted_values:
        total += math.erfc((x - s) * scale)
    return 0.5 * total / n


class CdfEstimate:
    """Evaluatable CDF snapshot for one step.

    Built from a copy of the window so later pushes do not leak into an
    estimate that was already handed out.
    """

    def __init__(
        self,
        kind: CdfKind | str,
        window: ScoreWindow,
        bandwidth: float | None = None,
        base: "CdfEstimate | None" = None,
        gamma: float = 1.0,
        noise: float = 0.0,
    ):
        self.kind = CdfKind(kind)
        self.window = window
        self.bandwidth = bandwidth
        self.base = base
        self.gamma = gamma
        self.noise = noise

    @classmethod
    def ecdf(cls, window: ScoreWindow) -> "CdfEstimate":
        return cls(CdfKind.ECDF, window.copy())

    @classmethod
    def kde(cls, window: ScoreWindow, bandwidth: float | None = None) -> "CdfEstimate":
        snap = window.copy()
        h = silverman_bandwidth(snap) if bandwidth is None else bandwidth
        return cls(CdfKind.GAUSSIAN_KDE, snap, bandwidth=h)

    @classmethod
    def noisy(cls, base: "CdfEstimate", gamma: float, noise: float) -> "CdfEstimate":
        if not 0.0 <= gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
        return cls(CdfKind.NOISY, base.window, base=base, gamma=gamma, noise=noise)

    def __call__(self, x: float) -> float:
        if self.kind is CdfKind.ECDF:
            return self.window.ecdf(x)
        if self.kind is CdfKind.GAUSSIAN_KDE:
            return kde_cdf_eval(self.window, self.bandwidth, x)
        return self.gamma * self.base(x) + (1.0 - self.gamma) * self.noise


def noisy_cdf_eval(base: CdfEstimate, gamma: float, rng: np.random.Generator, x: float) -> float:
    """One-off noisy evaluation ``gamma * base(x) + (1 - gamma) * u``.

    Draws a fresh ``u ~ U(0, 1)``. Inside a run the tracker draws ``u``
    once per step and reuses it through :meth:`CdfEstimate.noisy`.
    """
    return CdfEstimate.noisy(base, gamma, float(rng.random()))(x)
