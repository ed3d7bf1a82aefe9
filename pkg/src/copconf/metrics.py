"""Coverage, width, rolling coverage and post-shift recovery time."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

BAND_TOL = 1e-12


@dataclass(frozen=True)
class IntervalRecord:
    t: int
    y: float
    y_hat: float
    lower: float
    upper: float
    width: float
    covered: bool
    score_lower: float
    score_upper: float


def interval_width(q_lower: float, q_upper: float) -> float:
    """Width ``max(0, q_l + q_u)``; an empty side (``-inf``) gives 0."""
    if q_lower == -math.inf or q_upper == -math.inf:
        return 0.0
    return max(0.0, q_lower + q_upper)


def make_record(t: int, y: float, y_hat: float, q_lower: float, q_upper: float, log_scale: bool = False) -> IntervalRecord:
    """Interval ``[y_hat - q_l, y_hat + q_u]`` and its coverage of ``y``.

    With ``log_scale`` the forecast and radii live on the log scale and the
    record carries endpoints mapped back through ``exp`` (``y`` is already
    on the original scale).
    """
    y_model = math.log(y) if log_scale else y
    lo_s, up_s = y_hat - y_model, y_model - y_hat
    empty = q_lower == -math.inf or q_upper == -math.inf
    lower = y_hat - q_lower
    upper = y_hat + q_upper
    if log_scale:
        lower, upper = math.exp(lower), math.exp(upper)
        y_hat = math.exp(y_hat)
    if empty:
        width, covered = 0.0, False
    else:
        width = max(0.0, upper - lower) if log_scale else interval_width(q_lower, q_upper)
        covered = lower <= y <= upper
    return IntervalRecord(t, y, y_hat, lower, upper, width, covered, lo_s, up_s)


@dataclass
class RunRecord:
    records: list[IntervalRecord]
    config: dict = field(default_factory=dict)
    step_ns: list[int] = field(default_factory=list)

    def __post_init__(self):
        ts = [r.t for r in self.records]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("records must have strictly increasing t")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def covered(self) -> np.ndarray:
        return np.fromiter((r.covered for r in self.records), dtype=bool, count=len(self.records))

    @property
    def widths(self) -> np.ndarray:
        return np.fromiter((r.width for r in self.records), dtype=float, count=len(self.records))

    def mean_step_ns(self) -> float:
        return float(np.mean(self.step_ns)) if self.step_ns else math.nan


def summarize(run: RunRecord) -> dict:
    """Coverage, average width (``inf`` if any width is) and lower-median width."""
    if len(run) == 0:
        raise ValueError("cannot summarize an empty run")
    widths = run.widths
    avg = math.inf if np.isinf(widths).any() else float(widths.mean())
    ordered = np.sort(widths)
    return {
        "coverage": float(run.covered.mean()),
        "avg_width": avg,
        "median_width": float(ordered[(len(ordered) - 1) // 2]),
    }


def rolling_coverage(run: RunRecord | np.ndarray, window: int) -> np.ndarray:
    """Trailing-window coverage; entry ``i`` is ``cvg(t = window + i)``."""
    covered = run.covered if isinstance(run, RunRecord) else np.asarray(run, dtype=bool)
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if window > len(covered):
        raise ValueError(f"window {window} exceeds run length {len(covered)}")
    c = np.concatenate([[0], np.cumsum(covered, dtype=np.int64)])
    return (c[window:] - c[:-window]) / window


def recovery_time(
    run: RunRecord | np.ndarray,
    changepoint: int,
    w_r: int = 20,
    k: int = 10,
    alpha: float = 0.1,
) -> int | None:
    """Steps from ``changepoint`` until rolling coverage settles.

    Recovery is the earliest ``t_r > changepoint`` whose trailing
    ``w_r``-window coverage stays within ``1 - alpha +/- 1/w_r`` (ends
    inclusive) for ``k`` consecutive indices. Returns ``t_r - changepoint``
    or ``None``. Times are 1-based.
    """
    covered = run.covered if isinstance(run, RunRecord) else np.asarray(run, dtype=bool)
    n = len(covered)
    if w_r < 1 or k < 1:
        raise ValueError("w_r and k must be positive")
    if changepoint < 0 or changepoint + w_r + k > n:
        raise ValueError(f"changepoint {changepoint} + w_r + k exceeds run length {n}")
    cvg = rolling_coverage(covered, w_r)
    target = 1.0 - alpha
    ok = np.abs(cvg - target) <= 1.0 / w_r + BAND_TOL
    # ok[i] refers to t = w_r + i
    run_len = 0
    for t in range(max(changepoint + 1, w_r), n + 1):
        if ok[t - w_r]:
            run_len += 1
            if run_len == k:
                return t - k + 1 - changepoint
        else:
            run_len = 0
    return None
