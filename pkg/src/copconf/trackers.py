"""One-sided radius trackers: COP and the OGD-family baselines.

Each tracker consumes one non-conformity score per step and emits the
radius for the next step. Two layers are exposed:

* pure step functions (:func:`ogd_step`, :func:`cop_step`,
  :func:`aci_step`) over immutable state records, convenient for
  reasoning and testing single transitions;
* stateful :class:`QuantileTracker` / :class:`AciTracker` objects that own
  the score window and rate schedule and are what runs use. They apply
  exactly the same arithmetic as the step functions (checked in tests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .cdf import CdfEstimate, CdfKind, ScoreWindow, kde_cdf_eval, silverman_bandwidth
from .errors import ConfigError, EstimatorContractError, StreamCorruptionError

DECAY_EPS = 0.1


class Variant(str, Enum):
    COP = "cop"
    COP_GATED = "cop_gated"
    OGD = "ogd"
    DECAY_OGD = "decay_ogd"
    SF_OGD = "sf_ogd"
    ACI = "aci"


class Schedule(str, Enum):
    CONSTANT = "constant"
    WINDOW_ADAPTIVE = "window"
    DECAY = "decay"
    SF = "sf"


DEFAULT_SCHEDULE = {
    Variant.COP: Schedule.WINDOW_ADAPTIVE,
    Variant.COP_GATED: Schedule.WINDOW_ADAPTIVE,
    Variant.OGD: Schedule.CONSTANT,
    Variant.DECAY_OGD: Schedule.DECAY,
    Variant.SF_OGD: Schedule.SF,
    Variant.ACI: Schedule.CONSTANT,
}

REFINING = (Variant.COP, Variant.COP_GATED)
OGD_FAMILY = (Variant.OGD, Variant.DECAY_OGD, Variant.SF_OGD)


@dataclass(frozen=True)
class TrackerConfig:
    """Hyperparameters of a single one-sided tracker."""

    variant: Variant = Variant.COP
    alpha: float = 0.05
    eta: float = 0.1
    schedule: Schedule | None = None
    scale: float = 0.5
    window: int = 100
    initial_radius: float = 0.0
    epsilon_gate: float = 0.0
    warmup: int = 10
    cdf_kind: CdfKind = CdfKind.ECDF
    gamma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "cdf_kind", CdfKind(self.cdf_kind))
        sched = DEFAULT_SCHEDULE[self.variant] if self.schedule is None else Schedule(self.schedule)
        object.__setattr__(self, "schedule", sched)
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.eta >= 0.0 or not math.isfinite(self.eta):
            raise ConfigError(f"eta must be a finite non-negative number, got {self.eta}")
        if not 0.0 <= self.scale <= 1.0:
            raise ConfigError(f"scale must lie in [0, 1], got {self.scale}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if self.warmup < 0:
            raise ConfigError(f"warmup must be >= 0, got {self.warmup}")
        if not self.epsilon_gate >= 0.0:
            raise ConfigError(f"epsilon_gate must be >= 0, got {self.epsilon_gate}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.cdf_kind is CdfKind.NOISY:
            raise ConfigError("cdf_kind 'noisy' is selected through gamma < 1")
        if not math.isfinite(self.initial_radius):
            raise ConfigError("initial_radius must be finite")


@dataclass(frozen=True)
class TrackerState:
    """Snapshot of a COP / OGD-family tracker at step ``t``.

    ``eta_t`` and ``lam`` are the rate and refinement scale that the next
    call to a step function will use; the caller sets them from the
    schedule after observing the score.
    """

    q_hat: float
    q: float
    t: int
    eta_base: float
    eta_t: float
    lam: float
    alpha: float
    epsilon_gate: float = 0.0
    variant: Variant = Variant.COP
    offset: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.eta_base < 0.0 or self.eta_t < 0.0 or self.lam < 0.0:
            raise ConfigError("rates must be non-negative")
        if self.eta_t > 0.0 and self.lam > self.eta_t * (1.0 + 1e-12):
            raise ConfigError(f"lam={self.lam} exceeds eta_t={self.eta_t}")


@dataclass(frozen=True)
class AciState:
    alpha_hat: float
    eta: float
    window: ScoreWindow
    target_alpha: float
    initial_radius: float = 0.0


@dataclass(frozen=True)
class OptimisticTerm:
    value: float
    bound: float


def optimistic_term(cdf_value: float, alpha: float, lam: float, eta: float) -> OptimisticTerm:
    """COP's hint ``(F(q_hat) - (1 - alpha)) * lam / eta``."""
    ratio = lam / eta if eta > 0.0 else 0.0
    return OptimisticTerm((cdf_value - (1.0 - alpha)) * ratio, ratio * max(alpha, 1.0 - alpha))


def _check_score(score: float) -> float:
    s = float(score)
    if not math.isfinite(s):
        raise StreamCorruptionError(f"non-finite score {score!r}")
    return s


def effective_rate(
    schedule: Schedule | str,
    eta_base: float,
    t: int,
    window: ScoreWindow | None = None,
    grad_history_norm: float = 0.0,
    grad: float = 0.0,
) -> float:
    """Learning rate used at step ``t``.

    ``grad`` is the current gradient magnitude ``|err_t - alpha|`` and
    ``grad_history_norm`` is ``sqrt(sum_{i<=t} grad_i**2)``, both only
    needed by the scale-free schedule.
    """
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    schedule = Schedule(schedule)
    if schedule is Schedule.CONSTANT:
        return eta_base
    if schedule is Schedule.WINDOW_ADAPTIVE:
        return eta_base * (window.spread() if window is not None else 0.0)
    if schedule is Schedule.DECAY:
        return eta_base * t ** (-0.5 - DECAY_EPS)
    if grad_history_norm <= 0.0:
        return eta_base
    return eta_base * grad / grad_history_norm


def reset(config: TrackerConfig) -> TrackerState:
    """Fresh state with ``q_hat = q = initial_radius`` at ``t = 1``."""
    if config.variant is Variant.ACI:
        raise ConfigError("use reset_aci for the ACI variant")
    return TrackerState(
        q_hat=config.initial_radius,
        q=config.initial_radius,
        t=1,
        eta_base=config.eta,
        eta_t=config.eta,
        lam=0.0,
        alpha=config.alpha,
        epsilon_gate=config.epsilon_gate,
        variant=config.variant,
    )


def reset_aci(config: TrackerConfig) -> AciState:
    return AciState(
        alpha_hat=config.alpha,
        eta=config.eta,
        window=ScoreWindow(config.window),
        target_alpha=config.alpha,
        initial_radius=config.initial_radius,
    )


def ogd_step(state: TrackerState, score: float) -> TrackerState:
    """Plain quantile-tracking step ``q <- q + eta_t (err - alpha)``."""
    if state.variant not in OGD_FAMILY:
        raise ConfigError(f"ogd_step does not apply to variant {state.variant.value}")
    s = _check_score(score)
    err = 1 if s > state.q else 0
    q_hat = state.q_hat + state.eta_t * (err - state.alpha)
    return replace(state, q_hat=q_hat, q=q_hat, t=state.t + 1, offset=0.0)


def cop_step(state: TrackerState, score: float, cdf: CdfEstimate | None) -> TrackerState:
    """Primary update against the refined radius, then CDF refinement.

    ``cdf=None`` skips the refinement (estimator still warming up).
    """
    if state.variant not in REFINING:
        raise ConfigError(f"cop_step does not apply to variant {state.variant.value}")
    s = _check_score(score)
    err = 1 if s > state.q else 0
    q_hat = state.q_hat + state.eta_t * (err - state.alpha)
    offset = 0.0
    if cdf is not None:
        f = cdf(q_hat)
        if not 0.0 <= f <= 1.0:
            raise EstimatorContractError(f"CDF value {f} outside [0, 1]")
        dev = f - (1.0 - state.alpha)
        if state.variant is Variant.COP or abs(dev) >= state.epsilon_gate:
            offset = state.lam * dev
    return replace(state, q_hat=q_hat, q=q_hat - offset, t=state.t + 1, offset=offset)


def aci_radius(state: AciState) -> float:
    """Radius ACI emits: +inf / -inf outside (0, 1), else a window quantile."""
    if state.alpha_hat <= 0.0:
        return math.inf
    if state.alpha_hat >= 1.0:
        return -math.inf
    if len(state.window) == 0:
        return state.initial_radius
    return state.window.quantile(1.0 - state.alpha_hat)


def aci_step(state: AciState, score: float) -> AciState:
    s = _check_score(score)
    err = 1 if s > aci_radius(state) else 0
    window = state.window.copy()
    window.push(s)
    return replace(
        state,
        alpha_hat=state.alpha_hat + state.eta * (state.target_alpha - err),
        window=window,
    )


class QuantileTracker:
    """Stateful COP / OGD-family tracker.

    Per step: emit :attr:`radius`, then :meth:`update` with the observed
    score. The rate for step ``t`` is computed after the score is seen
    (window spread and gradient include ``s_t``), and the refinement
    scale is ``scale * eta_t``.
    """

    def __init__(
        self,
        config: TrackerConfig,
        rng: np.random.Generator | None = None,
        rates: Sequence[float] | None = None,
    ):
        if config.variant is Variant.ACI:
            raise ConfigError("use AciTracker for the ACI variant")
        self.config = config
        self.alpha = config.alpha
        self.eta = config.eta
        self.schedule = config.schedule
        self.window = ScoreWindow(config.window)
        self.q_hat = config.initial_radius
        self.q = config.initial_radius
        self.t = 1
        self.eta_t = 0.0
        self.offset = 0.0
        self._grad_sq = 0.0
        self._refines = config.variant in REFINING and config.scale > 0.0
        self._gated = config.variant is Variant.COP_GATED
        self._noisy = config.gamma < 1.0
        if self._noisy and rng is None:
            raise ConfigError("a noisy CDF (gamma < 1) needs an rng")
        self._rng = rng
        # explicit per-step rates override the schedule (theory checks)
        self._rates = None if rates is None else np.asarray(rates, dtype=float).tolist()

    @property
    def radius(self) -> float:
        return self.q

    def state(self) -> TrackerState:
        return TrackerState(
            q_hat=self.q_hat,
            q=self.q,
            t=self.t,
            eta_base=self.eta,
            eta_t=self.eta_t,
            lam=self.config.scale * self.eta_t,
            alpha=self.alpha,
            epsilon_gate=self.config.epsilon_gate,
            variant=self.config.variant,
            offset=self.offset,
        )

    def _rate(self, grad: float) -> float:
        if self._rates is not None:
            return self._rates[self.t - 1]
        sched = self.schedule
        if sched is Schedule.CONSTANT:
            return self.eta
        if sched is Schedule.WINDOW_ADAPTIVE:
            return self.eta * self.window.spread()
        if sched is Schedule.DECAY:
            return self.eta * self.t ** (-0.5 - DECAY_EPS)
        return self.eta * grad / math.sqrt(self._grad_sq)

    def _cdf(self, x: float) -> float:
        if self.config.cdf_kind is CdfKind.ECDF:
            return self.window.ecdf(x)
        return kde_cdf_eval(self.window, silverman_bandwidth(self.window), x)

    def update(self, score: float) -> int:
        """Consume ``s_t``; return the miscoverage indicator ``err_t``."""
        s = float(score)
        if not math.isfinite(s):
            raise StreamCorruptionError(f"non-finite score {score!r} at step {self.t}")
        alpha = self.alpha
        err = 1 if s > self.q else 0
        self.window.push(s)
        grad = abs(err - alpha)
        self._grad_sq += grad * grad
        eta_t = self._rate(grad)
        q_hat = self.q_hat + eta_t * (err - alpha)
        u = float(self._rng.random()) if self._noisy else 0.0
        offset = 0.0
        if self._refines and len(self.window) >= self.config.warmup:
            f = self._cdf(q_hat)
            if self._noisy:
                g = self.config.gamma
                f = g * f + (1.0 - g) * u
            dev = f - (1.0 - alpha)
            if not self._gated or abs(dev) >= self.config.epsilon_gate:
                offset = self.config.scale * eta_t * dev
        self.q_hat = q_hat
        self.q = q_hat - offset
        self.offset = offset
        self.eta_t = eta_t
        self.t += 1
        return err


class AciTracker:
    """Stateful ACI: radius is a rolling-window quantile at level ``1 - alpha_hat``."""

    def __init__(self, config: TrackerConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.alpha = config.alpha
        self.eta = config.eta
        self.alpha_hat = config.alpha
        self.window = ScoreWindow(config.window)
        self.t = 1
        self.eta_t = config.eta
        self.offset = 0.0
        self.q_hat = self.radius

    @property
    def radius(self) -> float:
        a = self.alpha_hat
        if a <= 0.0:
            return math.inf
        if a >= 1.0:
            return -math.inf
        if len(self.window) == 0:
            return self.config.initial_radius
        return self.window.quantile(1.0 - a)

    @property
    def q(self) -> float:
        return self.radius

    def state(self) -> AciState:
        return AciState(self.alpha_hat, self.eta, self.window.copy(), self.alpha, self.config.initial_radius)

    def update(self, score: float) -> int:
        s = float(score)
        if not math.isfinite(s):
            raise StreamCorruptionError(f"non-finite score {score!r} at step {self.t}")
        err = 1 if s > self.radius else 0
        self.alpha_hat += self.eta * (self.alpha - err)
        self.window.push(s)
        self.t += 1
        self.q_hat = self.radius
        return err


def make_tracker(config: TrackerConfig, rng: np.random.Generator | None = None, rates=None):
    if config.variant is Variant.ACI:
        return AciTracker(config)
    return QuantileTracker(config, rng, rates)


@dataclass
class Trajectory:
    """Per-step record of a one-sided tracker over a score stream.

    Index ``i`` holds step ``t = i + 1``: the emitted radius ``q``, the
    primary radius ``q_hat`` before the update, the score, ``err``, the
    rate ``eta`` used by the update and the optimistic term ``hint``
    (``M_t``) that produced ``q`` from ``q_hat``. ``q_next``/``q_hat_next``
    hold the radii after the final step.
    """

    config: TrackerConfig
    scores: np.ndarray
    q: np.ndarray
    q_hat: np.ndarray
    err: np.ndarray
    eta: np.ndarray
    hint: np.ndarray
    q_next: float = 0.0
    q_hat_next: float = 0.0
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.scores)


def track(
    scores: Iterable[float] | Sequence[float],
    config: TrackerConfig,
    rng: np.random.Generator | None = None,
    rates: Sequence[float] | None = None,
) -> Trajectory:
    """Run one tracker over a whole score stream.

    ``rates`` optionally fixes ``eta_t`` for every step instead of the
    configured schedule.
    """
    scores = np.asarray(list(scores) if not isinstance(scores, np.ndarray) else scores, dtype=float)
    if rates is not None and len(rates) < len(scores):
        raise ValueError("need one rate per score")
    tr = make_tracker(config, rng, rates)
    n = len(scores)
    q = np.empty(n)
    q_hat = np.empty(n)
    err = np.empty(n, dtype=np.int8)
    eta = np.empty(n)
    hint = np.zeros(n)
    prev_hint = 0.0
    for i in range(n):
        q[i] = tr.q
        q_hat[i] = tr.q_hat
        hint[i] = prev_hint
        err[i] = tr.update(scores[i])
        eta[i] = tr.eta_t
        prev_hint = tr.offset / tr.eta_t if tr.eta_t > 0.0 else 0.0
    return Trajectory(config, scores, q, q_hat, err, eta, hint, q_next=tr.q, q_hat_next=tr.q_hat)
