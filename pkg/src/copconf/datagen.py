"""Seeded synthetic regression streams with distribution shift.

All settings draw ``Y_t = X_t^T beta_t + eps_t`` with ``X_t ~ N(0, I_4)``.
Randomness comes from numpy's PCG64; the seed is expanded with
``SeedSequence`` and spawned into two child streams, the first feeding
``X`` and the second the noise, so changing one never shifts the other.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigError

DIM = 4


class Setting(str, Enum):
    CHANGEPOINT = "changepoint"
    DRIFT = "drift"
    VAR_CHANGEPOINT = "var_changepoint"
    HEAVY_TAIL = "heavy_tail"
    EXTREME_DRIFT = "extreme_drift"


# last 1-based index before each shift (CHANGEPOINT and VAR_CHANGEPOINT)
CHANGEPOINTS = (500, 1500)

_CP_BETAS = np.array([[2.0, 1.0, 0.0, 0.0], [0.0, -2.0, -1.0, 0.0], [0.0, 0.0, 2.0, 1.0]])
_FIXED_BETA = np.array([2.0, 1.0, 0.5, -0.5])
_VAR_SIGMAS = (1.0, 3.0, 0.5)
_DRIFT_ENDS = {
    Setting.DRIFT: ((2.0, 1.0, 0.0, 0.0), (0.0, 0.0, 2.0, 1.0)),
    Setting.EXTREME_DRIFT: ((20.0, 10.0, 1.0, 1.0), (1.0, 1.0, 20.0, 10.0)),
}


@dataclass(frozen=True)
class SynthConfig:
    setting: Setting = Setting.CHANGEPOINT
    n: int = 2000
    seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "setting", Setting(self.setting))
        except ValueError as exc:
            raise ConfigError(f"unknown setting {self.setting!r}") from exc
        if self.n < 2:
            raise ConfigError(f"n must be >= 2, got {self.n}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


def _regime(t: np.ndarray) -> np.ndarray:
    """Regime index 0/1/2 for 1-based times ``t``."""
    return (t > CHANGEPOINTS[0]).astype(int) + (t > CHANGEPOINTS[1]).astype(int)


def coefficient_path(config: SynthConfig) -> np.ndarray:
    """``(n, 4)`` array of ``beta_t``."""
    n = config.n
    t = np.arange(1, n + 1)
    if config.setting is Setting.CHANGEPOINT:
        return _CP_BETAS[_regime(t)]
    if config.setting in _DRIFT_ENDS:
        b1, bn = (np.asarray(b) for b in _DRIFT_ENDS[config.setting])
        frac = ((t - 1) / (n - 1))[:, None]
        return b1 + frac * (bn - b1)
    return np.tile(_FIXED_BETA, (n, 1))


def abs_third_moment(beta: np.ndarray) -> float:
    """``E|X^T beta|^3`` for ``X ~ N(0, I)``: ``||beta||^3 * 2 * sqrt(2 / pi)``."""
    return float(np.linalg.norm(beta)) ** 3 * 2.0 * math.sqrt(2.0 / math.pi)


def substreams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    kids = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.PCG64(kids[0])), np.random.Generator(np.random.PCG64(kids[1]))


def generate(config: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(X, Y)`` with shapes ``(n, 4)`` and ``(n,)``.

    For HEAVY_TAIL the t(2) draw is multiplied by
    ``1 + 2 |X^T beta|^3 / E|X^T beta|^3``; t(2) has no finite variance so
    the factor acts as a scale rather than a matched standard deviation.
    """
    rng_x, rng_eps = substreams(config.seed)
    n = config.n
    x = rng_x.standard_normal((n, DIM))
    beta = coefficient_path(config)
    mean = np.einsum("ij,ij->i", x, beta)
    setting = config.setting
    if setting is Setting.VAR_CHANGEPOINT:
        sigma = np.asarray(_VAR_SIGMAS)[_regime(np.arange(1, n + 1))]
        eps = sigma * rng_eps.standard_normal(n)
    elif setting is Setting.HEAVY_TAIL:
        scale = 1.0 + 2.0 * np.abs(mean) ** 3 / abs_third_moment(_FIXED_BETA)
        eps = scale * rng_eps.standard_t(2, size=n)
    else:
        eps = rng_eps.standard_normal(n)
    return x, mean + eps


def write_csv(y, path: str | Path) -> None:
    """Dump a series in the ``t,value`` ingestion schema."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in enumerate(y, start=1):
            w.writerow([t, repr(float(v))])
