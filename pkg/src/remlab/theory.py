"""Closed-form limits: free energies, rate functions, SCGF limits, scaling regimes.

Two inverse temperatures organise everything here.  ``BETA_C`` is the
freezing point where quenched and annealed free energies separate, and
``BETA_CRIT`` is the point above which the Gaussian fluctuation picture of
log Z breaks down.  Exact equality with ``BETA_CRIT`` is meaningless for a
float, so callers state the regime with a :class:`Regime` flag and we only
check that the claim is within ``CRIT_TOL``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from remlab.errors import DomainError, InvalidSchedule, UnsupportedRegime

LOG2 = math.log(2.0)
BETA_C = math.sqrt(2.0 * LOG2)
BETA_CRIT = math.sqrt(LOG2 / 2.0)
CRIT_TOL = 1e-12


class Regime(enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


class RateFunctionKind(enum.Enum):
    LDP = "ldp"
    MDP_GAUSSIAN = "mdp_gaussian"
    MDP_CRITICAL = "mdp_critical"
    DEGENERATE = "degenerate"


class ScalingRegime(enum.Enum):
    SUB_ROOT_N = "sub_root_n"
    CRITICAL_LOG = "critical_log"
    OVERSCALED = "overscaled"
    UNSUPPORTED = "unsupported"


@dataclass(frozen=True)
class ExtendedReal:
    """A value in [-inf, +inf] with infinity carried as a tag, not a float."""

    value: Optional[float] = None
    infinite: bool = False

    @classmethod
    def finite(cls, v: float) -> "ExtendedReal":
        if not math.isfinite(v):
            raise DomainError(f"finite value expected, got {v!r}")
        return cls(value=float(v))

    @property
    def is_finite(self) -> bool:
        return not self.infinite

    def __float__(self) -> float:
        return math.inf if self.infinite else float(self.value)

    def to_json(self):
        return "inf" if self.infinite else self.value

    def __str__(self) -> str:
        return "inf" if self.infinite else repr(self.value)


INFINITE = ExtendedReal(value=None, infinite=True)
ZERO = ExtendedReal(value=0.0)


@dataclass(frozen=True)
class ModelParams:
    """Inverse temperature and system size.

    ``beta = 0`` is accepted so that the simulator can be pinned against the
    trivial partition function Z = 2^N; the closed-form limits below still
    reject it.
    """

    beta: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta >= 0.0):
            raise DomainError(f"beta must be a finite number >= 0, got {self.beta!r}")
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def beta_c(self) -> float:
        return BETA_C


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not (math.isfinite(beta) and beta > 0.0):
        raise DomainError(f"beta must be > 0, got {beta!r}")
    return beta


def resolve_regime(beta: float, regime: Optional[Regime] = None) -> Regime:
    """Validate or infer the fluctuation regime of ``beta``.

    Without a flag, a beta within ``CRIT_TOL`` of the critical value is
    ambiguous and rejected.
    """
    beta = _check_beta(beta)
    gap = beta - BETA_CRIT
    if regime is None:
        if abs(gap) <= CRIT_TOL:
            raise DomainError("beta is within tolerance of beta_crit; pass an explicit Regime flag")
        return Regime.SUBCRITICAL if gap < 0 else Regime.SUPERCRITICAL
    regime = Regime(regime)
    if regime is Regime.CRITICAL and abs(gap) > CRIT_TOL:
        raise DomainError(f"CRITICAL claimed but |beta - beta_crit| = {abs(gap):.3e} > {CRIT_TOL}")
    if regime is Regime.SUBCRITICAL and not gap < -CRIT_TOL:
        raise DomainError(f"SUBCRITICAL claimed but beta = {beta!r} >= beta_crit")
    if regime is Regime.SUPERCRITICAL and not gap > CRIT_TOL:
        raise DomainError(f"SUPERCRITICAL claimed but beta = {beta!r} <= beta_crit")
    return regime


def limiting_free_energy(beta: float) -> float:
    beta = _check_beta(beta)
    if beta <= BETA_C:
        return 0.5 * beta * beta + LOG2
    return beta * BETA_C


def annealed_free_energy(beta: float) -> float:
    beta = _check_beta(beta)
    return 0.5 * beta * beta + LOG2


def ldp_rate(beta: float, x: float) -> ExtendedReal:
    """Speed-N rate function of the free energy F_N."""
    f = limiting_free_energy(beta)
    if x < f:
        return INFINITE
    if x == f:
        return ZERO
    return ExtendedReal.finite(x * x / (2.0 * beta * beta) - LOG2)


def mdp_rate(kind: RateFunctionKind, x: float) -> ExtendedReal:
    kind = RateFunctionKind(kind)
    if kind is RateFunctionKind.LDP:
        raise DomainError("mdp_rate does not evaluate the LDP rate; use ldp_rate(beta, x)")
    if kind is RateFunctionKind.MDP_GAUSSIAN:
        return ExtendedReal.finite(0.5 * x * x)
    if kind is RateFunctionKind.MDP_CRITICAL:
        return ExtendedReal.finite(x * x)
    return ZERO if x == 0 else INFINITE


def scgf_limit(beta: float, regime: Optional[Regime] = None) -> Callable[[float], float]:
    """Limit of the normalised log-MGF of the truncated sum, as a function of lambda."""
    regime = resolve_regime(beta, regime)
    if regime is Regime.SUPERCRITICAL:
        raise UnsupportedRegime(f"no SCGF limit for beta = {beta!r} > beta_crit")
    if regime is Regime.CRITICAL:
        return lambda lam: 0.25 * lam * lam
    return lambda lam: 0.5 * lam * lam


def fluct_scale_log(params: ModelParams) -> float:
    """Log of the fluctuation blow-up factor exp((N/2)(log 2 - beta^2))."""
    return 0.5 * params.n * (LOG2 - params.beta * params.beta)


def legendre_transform(fn: Callable[[float], float], x: float, grid: Iterable[float]) -> float:
    """sup over the grid of (lam * x - fn(lam))."""
    return max(lam * x - fn(lam) for lam in grid)


@dataclass(frozen=True)
class ScalingSchedule:
    """A rule N -> t_N, optionally with an explicit speed gamma_N = N**speed_exponent.

    ``form`` is ``"power"`` (t = coef * N**alpha), ``"logpower"``
    (t = coef * (log N)**alpha) or ``"table"`` (explicit (N, t) pairs).
    """

    form: str
    alpha: float = 0.0
    coef: float = 1.0
    table: tuple = field(default=())
    speed_exponent: Optional[float] = None

    def __post_init__(self):
        if self.form not in ("power", "logpower", "table"):
            raise InvalidSchedule(f"unknown schedule form {self.form!r}")
        if self.form == "table":
            pairs = tuple(sorted((int(n), float(t)) for n, t in self.table))
            if not pairs:
                raise InvalidSchedule("table schedule needs at least one (N, t) pair")
            object.__setattr__(self, "table", pairs)
            ns = [n for n, _ in pairs]
            if len(set(ns)) != len(ns):
                raise InvalidSchedule("table schedule repeats an N")
            ts = [t for _, t in pairs]
            if any(not (t > 0 and math.isfinite(t)) for t in ts):
                raise InvalidSchedule("table schedule values must be finite and > 0")
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise InvalidSchedule("table schedule must be strictly increasing in N")
        else:
            if not (self.alpha > 0 and math.isfinite(self.alpha)):
                raise InvalidSchedule(f"exponent must be > 0 so that t_N diverges, got {self.alpha!r}")
            if not (self.coef > 0 and math.isfinite(self.coef)):
                raise InvalidSchedule(f"coefficient must be > 0, got {self.coef!r}")
        if self.speed_exponent is not None and not self.speed_exponent > 0:
            raise InvalidSchedule("speed exponent must be > 0")

    @classmethod
    def power(cls, alpha: float, coef: float = 1.0, **kw) -> "ScalingSchedule":
        return cls("power", alpha=alpha, coef=coef, **kw)

    @classmethod
    def logpower(cls, alpha: float, coef: float = 1.0, **kw) -> "ScalingSchedule":
        return cls("logpower", alpha=alpha, coef=coef, **kw)

    @classmethod
    def parse(cls, text: str) -> "ScalingSchedule":
        """Parse ``power:<alpha>:<coef>`` or ``logpower:<alpha>:<coef>`` (coef optional)."""
        parts = text.strip().split(":")
        if parts[0] not in ("power", "logpower") or len(parts) not in (2, 3):
            raise InvalidSchedule(f"cannot parse schedule {text!r}")
        try:
            alpha = float(parts[1])
            coef = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError as exc:
            raise InvalidSchedule(f"cannot parse schedule {text!r}") from exc
        return cls(parts[0], alpha=alpha, coef=coef)

    def describe(self) -> str:
        if self.form == "table":
            return "table:" + ",".join(f"{n}={t!r}" for n, t in self.table)
        return f"{self.form}:{self.alpha!r}:{self.coef!r}"

    def t(self, n: int) -> float:
        if self.form == "power":
            return self.coef * float(n) ** self.alpha
        if self.form == "logpower":
            if n < 2:
                raise InvalidSchedule("log-power schedule needs N >= 2")
            return self.coef * math.log(n) ** self.alpha
        for m, t in self.table:
            if m == n:
                return t
        raise InvalidSchedule(f"table schedule has no entry for N = {n}")

    def speed(self, n: int) -> float:
        if self.speed_exponent is not None:
            return float(n) ** self.speed_exponent
        return self.t(n) ** 2

    def check_grid(self, ns: Iterable[int]) -> list:
        """Evaluate on a grid; t must be > 0 and strictly increasing there."""
        ns = sorted(ns)
        ts = [self.t(n) for n in ns]
        if any(not t > 0 for t in ts):
            raise InvalidSchedule("t_N must be > 0 on the grid")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise InvalidSchedule("t_N must be strictly increasing on the grid")
        return ts

    def growth_exponents(self) -> tuple:
        """(exponent against N, exponent against log N) of the schedule.

        Table schedules only have a finite grid, so both are least-squares
        slopes on that grid.  A log-power law has exponent 0 against N.
        """
        if self.form == "power":
            return self.alpha, math.inf
        if self.form == "logpower":
            return 0.0, self.alpha
        if len(self.table) < 2:
            raise InvalidSchedule("a table schedule needs two entries to be classified")
        ns = [n for n, _ in self.table]
        if ns[0] < 2:
            raise InvalidSchedule("table schedules must start at N >= 2 to be classified")
        ys = [math.log(t) for _, t in self.table]
        return _slope([math.log(n) for n in ns], ys), _slope([math.log(math.log(n)) for n in ns], ys)


def _slope(xs, ys):
    mx = sum(xs) / len(xs)
    my = sum(ys) / len(ys)
    sxx = sum((x - mx) ** 2 for x in xs)
    if sxx == 0:
        raise InvalidSchedule("table schedule grid is degenerate")
    return sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sxx


def classify_scaling(
    schedule: ScalingSchedule, beta: float, regime: Optional[Regime] = None
) -> tuple:
    """Return ``(ScalingRegime, RateFunctionKind | None)`` for a schedule at ``beta``.

    The coefficient of the schedule never enters; only its growth exponent does.
    At the critical point, scalings that are not o(sqrt(log N)) are reported
    UNSUPPORTED: no rate function is known there.
    """
    regime = resolve_regime(beta, regime)
    n_exp, log_exp = schedule.growth_exponents()
    if regime is Regime.SUPERCRITICAL:
        return ScalingRegime.UNSUPPORTED, None
    if regime is Regime.SUBCRITICAL:
        if n_exp < 0.5:
            return ScalingRegime.SUB_ROOT_N, RateFunctionKind.MDP_GAUSSIAN
        return ScalingRegime.OVERSCALED, RateFunctionKind.DEGENERATE
    if schedule.form == "power":
        return ScalingRegime.UNSUPPORTED, None
    if log_exp < 0.5:
        return ScalingRegime.CRITICAL_LOG, RateFunctionKind.MDP_CRITICAL
    return ScalingRegime.UNSUPPORTED, None
