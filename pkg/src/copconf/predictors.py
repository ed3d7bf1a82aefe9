"""Causal one-step forecasters and the signed score pair.

Both forecasters refit on the most recent ``fit_window`` observations at
every call, so a forecast for time ``t`` only ever sees ``Y_1..Y_{t-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

RIDGE_PENALTY = 1e-6
SES_GRID = np.round(np.arange(1, 100) / 100.0, 2)


class PredictorKind(str, Enum):
    AR3 = "ar3"
    THETA = "theta"


@dataclass
class ForecastState:
    kind: PredictorKind = PredictorKind.AR3
    history: list[float] = field(default_factory=list)
    fit_window: int = 200
    order: int = 3
    coefficients: tuple[float, ...] = ()

    def __post_init__(self):
        self.kind = PredictorKind(self.kind)
        if self.fit_window < 2:
            raise ValueError(f"fit_window must be >= 2, got {self.fit_window}")

    def observe(self, y: float) -> None:
        self.history.append(float(y))

    def forecast(self) -> float:
        if self.kind is PredictorKind.AR3:
            return ar_forecast(self)
        return theta_forecast(self)


def _last_value(history: list[float]) -> float:
    return history[-1] if history else 0.0


def fit_ar(y: np.ndarray, p: int) -> tuple[float, np.ndarray]:
    """OLS fit of ``y_t = c + sum_k phi_k y_{t-k}`` returning ``(c, phi)``.

    Regressors are centred so the intercept is never penalised; a rank
    deficient design falls back to ridge with a tiny penalty.
    """
    lags = sliding_window_view(y, p)[:-1, ::-1]
    target = y[p:]
    x_mean = lags.mean(axis=0)
    y_mean = target.mean()
    xc = lags - x_mean
    yc = target - y_mean
    phi, _, rank, _ = np.linalg.lstsq(xc, yc, rcond=None)
    if rank < p:
        phi = np.linalg.solve(xc.T @ xc + RIDGE_PENALTY * np.eye(p), xc.T @ yc)
    return float(y_mean - x_mean @ phi), phi


def ar_forecast(state: ForecastState) -> float:
    """One-step AR(p) forecast, refit by least squares on the fit window."""
    p = state.order
    hist = state.history
    if len(hist) < p + 1:
        return _last_value(hist)
    y = np.asarray(hist[-state.fit_window:], dtype=float)
    if len(y) < p + 1:
        return _last_value(hist)
    c, phi = fit_ar(y, p)
    state.coefficients = (c, *phi.tolist())
    return float(c + phi @ y[-1 : -p - 1 : -1])


def _ses_with_drift(z: np.ndarray, drift: float) -> tuple[float, float]:
    """Grid-fit SES with a fixed per-step drift; return (alpha, forecast)."""
    a = SES_GRID
    level = np.full(a.shape, z[0])
    sse = np.zeros(a.shape)
    for zi in z[1:]:
        pred = level + drift
        e = zi - pred
        sse += e * e
        level = pred + a * e
    best = int(np.argmin(sse))
    return float(a[best]), float(level[best] + drift)


def theta_forecast(state: ForecastState) -> float:
    """Classical two-line Theta forecast.

    The theta=0 line is the least-squares linear trend; the theta=2 line
    ``2 y - trend`` is extrapolated by exponential smoothing that carries
    the trend slope as drift (so a linear series is reproduced exactly).
    The forecast averages the two lines.
    """
    hist = state.history
    if len(hist) < 3:
        return _last_value(hist)
    y = np.asarray(hist[-state.fit_window:], dtype=float)
    n = len(y)
    idx = np.arange(n, dtype=float)
    slope, intercept = np.polyfit(idx, y, 1)
    trend = intercept + slope * idx
    trend_next = intercept + slope * n
    a, z_next = _ses_with_drift(2.0 * y - trend, slope)
    state.coefficients = (float(intercept), float(slope), a)
    return 0.5 * (trend_next + z_next)


def forecast_series(y, kind: PredictorKind | str = PredictorKind.AR3, fit_window: int = 200) -> np.ndarray:
    """Causal one-step forecasts for a whole series."""
    state = ForecastState(PredictorKind(kind), fit_window=fit_window)
    out = np.empty(len(y))
    for t, yt in enumerate(y):
        out[t] = state.forecast()
        state.observe(yt)
    return out


def score_pair(y: float, y_hat: float) -> tuple[float, float]:
    """Return ``(lower_score, upper_score) = (y_hat - y, y - y_hat)``."""
    return y_hat - y, y - y_hat
