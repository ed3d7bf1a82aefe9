"""Numerical certification of COP's coverage, boundedness, regret and
convergence guarantees on concrete runs.

Each ``check_*`` function evaluates an inequality on a recorded
:class:`~copconf.trackers.Trajectory` and returns a :class:`BoundReport`
holding the worst prefix (smallest slack) plus every prefix checked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .cdf import normal_cdf
from .trackers import TrackerConfig, Trajectory, Variant, track

FLOAT_SLACK = 1e-9
_STD_NORMAL = NormalDist()


@dataclass
class BoundReport:
    name: str
    lhs: float
    rhs: float
    satisfied: bool
    slack: float
    prefixes: list[tuple[int, float, float]] = field(default_factory=list)

    @classmethod
    def from_prefixes(cls, name: str, ts, lhs, rhs) -> "BoundReport":
        lhs = np.asarray(lhs, dtype=float)
        rhs = np.asarray(rhs, dtype=float)
        slack = rhs - lhs
        worst = int(np.argmin(slack))
        ok = bool(np.all(lhs <= rhs + FLOAT_SLACK))
        rows = list(zip((int(t) for t in ts), lhs.tolist(), rhs.tolist()))
        return cls(name, float(lhs[worst]), float(rhs[worst]), ok, float(slack[worst]), rows)

    def row(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "satisfied": self.satisfied,
            "prefixes": len(self.prefixes),
        }


@dataclass(frozen=True)
class ComparatorSequence:
    """Comparator ``u_1..u_T`` for dynamic regret; ``u_0 = 0`` is implicit."""

    u: tuple[float, ...]

    def __post_init__(self):
        if not all(math.isfinite(x) for x in self.u):
            raise ValueError("comparator entries must be finite")

    def __len__(self) -> int:
        return len(self.u)


def quantile_loss(alpha: float, residual: float) -> float:
    """Pinball loss ``(1{r > 0} - alpha) * r`` for the (1 - alpha) quantile."""
    return ((1.0 if residual > 0 else 0.0) - alpha) * residual


def quantile_loss_array(alpha: float, residual: np.ndarray) -> np.ndarray:
    return ((residual > 0).astype(float) - alpha) * residual


def _checked_scores(traj: Trajectory) -> tuple[np.ndarray, float, float]:
    """Return ``(scores, low, B)`` with every score in ``[low, low + B]``.

    The updates are shift-equivariant (rates use the window spread, the
    ECDF is shift-invariant), so signed scores are handled by measuring
    from ``low = min(0, min s)``; for non-negative scores ``low = 0``.
    """
    s = np.asarray(traj.scores, dtype=float)
    if not np.all(np.isfinite(s)):
        raise ValueError("bound checks need finite scores")
    low = min(0.0, float(s.min(initial=0.0)))
    return s, low, float(s.max(initial=0.0)) - low


def _hint_bound(alpha: float) -> float:
    return max(alpha, 1.0 - alpha)


def delta_norms(eta: np.ndarray) -> np.ndarray:
    """Prefix sums ``||Delta_{1:T}||_1`` with ``Delta_t = |1/eta_t - 1/eta_{t-1}|``."""
    with np.errstate(divide="ignore"):
        inv = 1.0 / np.asarray(eta, dtype=float)
    d = np.empty_like(inv)
    d[0] = inv[0]
    d[1:] = np.abs(np.diff(inv))
    d[np.isnan(d)] = math.inf
    return np.cumsum(d)


def check_coverage_bound(traj: Trajectory) -> BoundReport:
    """Finite-sample coverage bound at every prefix ``T``.

    ``|mean(err_{1:T}) - alpha| <= (B + (2 + 6M) Omega_T) ||Delta_{1:T}||_1 / T``
    which for a constant rate reduces to ``(B + (2 + 6M) eta) / (T eta)``.
    """
    _, _, b = _checked_scores(traj)
    alpha = traj.config.alpha
    m = _hint_bound(alpha)
    err = np.asarray(traj.err, dtype=float)
    t = np.arange(1, len(err) + 1)
    lhs = np.abs(np.cumsum(err) / t - alpha)
    omega = np.maximum.accumulate(traj.eta)
    with np.errstate(invalid="ignore"):
        rhs = (b + (2.0 + 6.0 * m) * omega) * delta_norms(traj.eta) / t
    rhs = np.where(np.isnan(rhs), math.inf, rhs)
    return BoundReport.from_prefixes("coverage_bound", t, lhs, rhs)


def check_boundedness(traj: Trajectory) -> BoundReport:
    """``-Omega_t (2M + 1) <= q_t <= B + Omega_t (2M + 1)`` at every step.

    Reported as ``lhs = max(lower - q_t, q_t - upper)`` against ``rhs = 0``.
    """
    _, low, b = _checked_scores(traj)
    q1 = traj.q[0] - low
    if not 0.0 <= q1 <= b:
        raise ValueError(f"initial radius {traj.q[0]} outside the score range")
    m = _hint_bound(traj.config.alpha)
    omega = np.maximum.accumulate(traj.eta)
    pad = omega * (2.0 * m + 1.0)
    q = np.asarray(traj.q, dtype=float) - low
    lhs = np.maximum(-pad - q, q - (b + pad))
    t = np.arange(1, len(q) + 1)
    return BoundReport.from_prefixes("boundedness", t, lhs, np.zeros_like(lhs))


def check_regret_coverage(
    traj: Trajectory, comparator: ComparatorSequence, eta: float, literal: bool = False
) -> BoundReport:
    """Joint dynamic-regret / coverage bound for a constant rate ``eta``.

    LHS: ``mean(l_t(q_t) - l_t(u_t)) + eta (1 - 2 alpha) / 4 * (mean(err) - alpha)``.
    RHS: ``eta / T * sum (alpha - err_t - M_t)^2
    + sum (|u_t - q_hat_t|^2 - |u_{t-1} - q_hat_t|^2) / (2 eta T)``.

    The environment sum is averaged over ``T`` like every other term of
    the telescoped per-step inequality. ``literal=True`` drops that
    ``1 / T``, which is only weaker when the sum is non-negative. The
    telescoping step needs ``q_hat_1 = u_0 = 0``.
    """
    n = len(traj)
    if len(comparator) != n:
        raise ValueError(f"comparator length {len(comparator)} != run length {n}")
    if not eta > 0.0:
        raise ValueError("the regret bound needs a positive constant rate")
    alpha = traj.config.alpha
    s = np.asarray(traj.scores, dtype=float)
    u = np.asarray(comparator.u, dtype=float)
    u_prev = np.concatenate([[0.0], u[:-1]])
    err = np.asarray(traj.err, dtype=float)
    t = np.arange(1, n + 1)
    regret = np.cumsum(quantile_loss_array(alpha, s - traj.q) - quantile_loss_array(alpha, s - u)) / t
    cover = eta * (1.0 - 2.0 * alpha) / 4.0 * (np.cumsum(err) / t - alpha)
    grad_term = eta * np.cumsum((alpha - err - traj.hint) ** 2) / t
    env = np.cumsum((u - traj.q_hat) ** 2 - (u_prev - traj.q_hat) ** 2) / (2.0 * eta)
    if not literal:
        env = env / t
    return BoundReport.from_prefixes("regret_coverage", t, regret + cover, grad_term + env)


def rolling_quantile_comparator(scores: Sequence[float], alpha: float, window: int = 100) -> ComparatorSequence:
    """``u_t`` = empirical (1 - alpha) quantile of the previous ``window`` scores (0 at t = 1)."""
    from .cdf import ScoreWindow

    w = ScoreWindow(window)
    out = []
    for s in scores:
        out.append(w.quantile(1.0 - alpha) if len(w) else 0.0)
        w.push(s)
    return ComparatorSequence(tuple(out))


class Dist(str, Enum):
    UNIFORM01 = "uniform01"
    NORMAL01 = "normal01"


def true_quantile(dist: Dist | str, p: float) -> float:
    return p if Dist(dist) is Dist.UNIFORM01 else _STD_NORMAL.inv_cdf(p)


def true_cdf(dist: Dist | str, x: float) -> float:
    if Dist(dist) is Dist.UNIFORM01:
        return min(max(x, 0.0), 1.0)
    return normal_cdf(x)


def density_sup(dist: Dist | str) -> float:
    return 1.0 if Dist(dist) is Dist.UNIFORM01 else 1.0 / math.sqrt(2.0 * math.pi)


def sample(dist: Dist | str, n: int, rng: np.random.Generator) -> np.ndarray:
    if Dist(dist) is Dist.UNIFORM01:
        return rng.random(n)
    return rng.standard_normal(n)


def robbins_monro_rates(horizon: int, exponent: float, c: float = 1.0) -> np.ndarray:
    if not 0.5 < exponent <= 1.0:
        raise ValueError(f"rate exponent {exponent} violates Robbins-Monro (need 0.5 < a <= 1)")
    return c * np.arange(1, horizon + 1, dtype=float) ** -exponent


def check_convergence(
    dist: Dist | str,
    alpha: float,
    rate_exponent: float,
    horizon: int,
    seed: int,
    c: float = 1.0,
    scale: float = 0.5,
    window: int = 100,
) -> dict:
    """Run COP with ``eta_t = c t^-a`` on iid scores and compare to ``q*``."""
    rates = robbins_monro_rates(horizon, rate_exponent, c)
    rng = np.random.default_rng(seed)
    scores = sample(dist, horizon, rng)
    cfg = TrackerConfig(variant=Variant.COP, alpha=alpha, eta=c, scale=scale, window=window)
    traj = track(scores, cfg, rates=rates)
    q_star = true_quantile(dist, 1.0 - alpha)
    return {"q_final": traj.q_next, "q_star": q_star, "gap": abs(traj.q_next - q_star)}


def expected_quantile_loss(dist: Dist | str, alpha: float, q: float, grid_points: int = 100_000) -> float:
    """``E[l(s - q)]`` by trapezoidal integration against the true density.

    The kink at ``s = q`` is inserted into the grid so the integrand is
    piecewise linear times a smooth density on every panel.
    """
    dist = Dist(dist)
    if dist is Dist.UNIFORM01:
        s = np.linspace(0.0, 1.0, grid_points)
        dens = lambda x: np.ones_like(x)
    else:
        s = np.linspace(-12.0, 12.0, grid_points)
        dens = lambda x: np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    if s[0] < q < s[-1]:
        s = np.insert(s, np.searchsorted(s, q), q)
    f = quantile_loss_array(alpha, s - q) * dens(s)
    return float(np.trapezoid(f, s))


def check_refinement_improvement(
    dist: Dist | str,
    alpha: float,
    lam: float,
    q_hat: float | None = None,
    seed: int | None = None,
) -> dict:
    """Expected loss of the refined radius versus the primary one.

    The refinement ``q = q_hat - lam (F(q_hat) - (1 - alpha))`` uses the
    true CDF, and ``lam`` must sit below ``2 / L`` (``L`` the density sup).
    Without ``q_hat`` one is drawn from ``q* + N(0, 1)`` using ``seed``.
    """
    if not 0.0 <= lam < 2.0 / density_sup(dist):
        raise ValueError(f"lam={lam} must lie in [0, 2/L)")
    if q_hat is None:
        q_hat = true_quantile(dist, 1.0 - alpha) + float(np.random.default_rng(seed).standard_normal())
    q = q_hat - lam * (true_cdf(dist, q_hat) - (1.0 - alpha))
    return {
        "q_hat": q_hat,
        "q": q,
        "loss_refined": expected_quantile_loss(dist, alpha, q),
        "loss_primary": expected_quantile_loss(dist, alpha, q_hat),
    }


def random_schedule(n: int, rng: np.random.Generator, max_increases: int = 10) -> np.ndarray:
    """Positive piecewise schedule, non-increasing except at <= ``max_increases`` jumps."""
    base = float(rng.uniform(0.05, 2.0))
    rates = base * np.arange(1, n + 1, dtype=float) ** -float(rng.uniform(0.0, 1.0))
    k = int(rng.integers(0, max_increases + 1))
    for t in np.sort(rng.choice(np.arange(1, n), size=min(k, n - 1), replace=False)):
        rates[t:] *= float(rng.uniform(1.0, 4.0))
    return rates


def adversarial_stream(seed: int, n: int = 400, bound: float = 10.0) -> tuple[np.ndarray, np.ndarray]:
    """Seeded bounded score stream in ``[0, bound]`` plus a random rate schedule.

    Streams mix uniform noise, alternating extremes, long bursts at one end
    of the range and regime switches, the patterns that push a tracker
    hardest against its bounds.
    """
    rng = np.random.default_rng(seed)
    kind = seed % 4
    if kind == 0:
        s = rng.uniform(0.0, bound, n)
    elif kind == 1:
        s = np.where(np.arange(n) % 2 == 0, bound, 0.0)
    elif kind == 2:
        burst = rng.integers(10, 80)
        s = np.where((np.arange(n) // burst) % 2 == 0, bound, rng.uniform(0.0, 0.2 * bound, n))
    else:
        level = rng.uniform(0.0, bound, size=8)
        s = np.clip(level[np.arange(n) * 8 // n] + rng.normal(0.0, 0.1 * bound, n), 0.0, bound)
    s[0] = bound  # pin B so the range is known exactly
    return s, random_schedule(n, rng)


def worst_case_streams(n: int = 400, bound: float = 10.0) -> dict[str, np.ndarray]:
    """Constant streams: every step misses (scores at B) or every step covers (scores at 0)."""
    return {"all_miss": np.full(n, bound), "all_cover": np.zeros(n)}


def certify_stream(scores, rates, alpha: float = 0.1, scale: float = 0.5, initial_radius: float = 0.0) -> list[BoundReport]:
    """Coverage and boundedness reports for COP driven by an explicit schedule."""
    cfg = TrackerConfig(variant=Variant.COP, alpha=alpha, eta=1.0, scale=scale, initial_radius=initial_radius)
    traj = track(scores, cfg, rates=rates)
    return [check_coverage_bound(traj), check_boundedness(traj)]
