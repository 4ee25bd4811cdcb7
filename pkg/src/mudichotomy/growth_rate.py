"""Growth rates in log-space, their translations, comparisons and classification.

A growth rate is stored through ``log mu``; superexponential rates leave the
floating point range around ``|t| ~ 27`` while their logarithms stay small.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, ParameterError
from .grids import (
    DIVERGENCE_THRESHOLD,
    PLATEAU_TOL,
    WindowSchedule,
    pair_ratio_extrema,
    running_excess,
    symmetric_log_grid,
    window_verdict,
)


class RateKind(str, Enum):
    EXPONENTIAL = "exponential"
    POLYNOMIAL = "polynomial"
    SUPEREXPONENTIAL = "superexponential"
    SUBEXPONENTIAL = "subexponential"
    TRANSLATED = "translated"
    POWER = "power"


def _check_time(t):
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"growth rates are evaluated at finite times only, got {t!r}")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


@dataclass(frozen=True)
class GrowthRate:
    """Immutable growth rate; build instances with the module-level constructors."""

    kind: RateKind
    r: Optional[float] = None
    base: Optional["GrowthRate"] = None
    tau: float = 0.0
    k: float = 1.0

    def __post_init__(self):
        kind = RateKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is RateKind.SUPEREXPONENTIAL and not (self.r is not None and self.r > 1):
            raise ParameterError(f"superexponential exponent must exceed 1, got {self.r}")
        if kind is RateKind.SUBEXPONENTIAL and not (self.r is not None and 0 < self.r < 1):
            raise ParameterError(f"subexponential exponent must lie in (0, 1), got {self.r}")
        if kind in (RateKind.TRANSLATED, RateKind.POWER) and self.base is None:
            raise ParameterError(f"{kind.value} rate needs a base rate")
        if kind is RateKind.POWER and not (self.k > 0 and math.isfinite(self.k)):
            raise ParameterError(f"power exponent must be positive, got {self.k}")
        if not math.isfinite(self.tau):
            raise DomainError(f"translation must be finite, got {self.tau}")

    # -- evaluation -------------------------------------------------------
    def _log(self, t: np.ndarray) -> np.ndarray:
        kind = self.kind
        if kind is RateKind.EXPONENTIAL:
            return t.copy()
        if kind is RateKind.POLYNOMIAL:
            return np.sign(t) * np.log1p(np.abs(t))
        if kind is RateKind.SUPEREXPONENTIAL:
            return np.sign(t) * np.abs(t) ** self.r
        if kind is RateKind.SUBEXPONENTIAL:
            return np.sign(t) * ((np.abs(t) + 1.0) ** self.r - 1.0)
        if kind is RateKind.TRANSLATED:
            return self.base._log(t + self.tau) - self.base._log(np.asarray(self.tau))
        return self.k * self.base._log(t)

    def _dlog(self, t: np.ndarray) -> np.ndarray:
        kind = self.kind
        if kind is RateKind.EXPONENTIAL:
            return np.ones_like(t)
        if kind is RateKind.POLYNOMIAL:
            return 1.0 / (1.0 + np.abs(t))
        if kind is RateKind.SUPEREXPONENTIAL:
            return self.r * np.abs(t) ** (self.r - 1.0)
        if kind is RateKind.SUBEXPONENTIAL:
            return self.r * (np.abs(t) + 1.0) ** (self.r - 1.0)
        if kind is RateKind.TRANSLATED:
            return self.base._dlog(t + self.tau)
        return self.k * self.base._dlog(t)

    def log_eval(self, t):
        """``log mu(t)``; accepts scalars or arrays."""
        arr = _check_time(t)
        return _out(self._log(arr), t)

    def log_derivative(self, t):
        """``d/dt log mu(t) = mu'(t) / mu(t)``."""
        arr = _check_time(t)
        return _out(self._dlog(arr), t)

    @property
    def kinks(self) -> tuple:
        """Times where ``log_derivative`` may be non-smooth."""
        kind = self.kind
        if kind is RateKind.EXPONENTIAL:
            return ()
        if kind is RateKind.TRANSLATED:
            return tuple(x - self.tau for x in self.base.kinks)
        if kind is RateKind.POWER:
            return self.base.kinks
        return (0.0,)

    @property
    def is_exponential_family(self) -> bool:
        """True for ``exp`` and its powers, the rates fixed by translation."""
        if self.kind is RateKind.EXPONENTIAL:
            return True
        return self.kind is RateKind.POWER and self.base.is_exponential_family

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        kind = self.kind
        if kind in (RateKind.EXPONENTIAL, RateKind.POLYNOMIAL):
            params = {}
        elif kind in (RateKind.SUPEREXPONENTIAL, RateKind.SUBEXPONENTIAL):
            params = {"r": self.r}
        elif kind is RateKind.TRANSLATED:
            params = {"base": self.base.to_dict(), "tau": self.tau}
        else:
            params = {"base": self.base.to_dict(), "k": self.k}
        return {"kind": kind.value, "parameters": params}

    @classmethod
    def from_dict(cls, d: dict) -> "GrowthRate":
        kind = RateKind(d["kind"])
        p = d.get("parameters", {}) or {}
        if kind in (RateKind.TRANSLATED, RateKind.POWER):
            base = cls.from_dict(p["base"])
            if kind is RateKind.TRANSLATED:
                return cls(kind, base=base, tau=float(p["tau"]))
            return cls(kind, base=base, k=float(p["k"]))
        if kind in (RateKind.SUPEREXPONENTIAL, RateKind.SUBEXPONENTIAL):
            return cls(kind, r=float(p["r"]))
        return cls(kind)

    def __str__(self):
        kind = self.kind
        if kind is RateKind.EXPONENTIAL:
            return "exp"
        if kind is RateKind.POLYNOMIAL:
            return "p"
        if kind is RateKind.SUPEREXPONENTIAL:
            return f"s_{self.r:g}"
        if kind is RateKind.SUBEXPONENTIAL:
            return f"u_{self.r:g}"
        if kind is RateKind.TRANSLATED:
            return f"({self.base})_{self.tau:g}"
        return f"({self.base})^{self.k:g}"


def exponential() -> GrowthRate:
    return GrowthRate(RateKind.EXPONENTIAL)


def polynomial() -> GrowthRate:
    """``p(t) = (|t| + 1)^{sgn t}``."""
    return GrowthRate(RateKind.POLYNOMIAL)


def superexponential(r: float) -> GrowthRate:
    """``s_r(t) = exp(sgn(t) |t|^r)``, ``r > 1``; ``r = 2`` is the quadratic rate."""
    return GrowthRate(RateKind.SUPEREXPONENTIAL, r=float(r))


def subexponential(r: float) -> GrowthRate:
    """``u_r(t) = exp(sgn(t) ((|t| + 1)^r - 1))``, ``0 < r < 1``."""
    return GrowthRate(RateKind.SUBEXPONENTIAL, r=float(r))


def quadratic() -> GrowthRate:
    return superexponential(2.0)


def power(rate: GrowthRate, k: float) -> GrowthRate:
    if rate.kind is RateKind.POWER:
        return GrowthRate(RateKind.POWER, base=rate.base, k=rate.k * float(k))
    return GrowthRate(RateKind.POWER, base=rate, k=float(k))


def eval_log(rate: GrowthRate, t):
    return rate.log_eval(t)


def translate(rate: GrowthRate, tau: float) -> GrowthRate:
    """The rate ``t -> mu(t + tau) / mu(tau)``.

    The exponential family is returned unchanged; nested translations collapse.
    """
    tau = float(tau)
    if not math.isfinite(tau):
        raise DomainError(f"translation must be finite, got {tau}")
    if tau == 0.0 or rate.is_exponential_family:
        return rate
    if rate.kind is RateKind.TRANSLATED:
        total = rate.tau + tau
        return rate.base if total == 0.0 else GrowthRate(RateKind.TRANSLATED, base=rate.base, tau=total)
    return GrowthRate(RateKind.TRANSLATED, base=rate, tau=tau)


# ---------------------------------------------------------------------------
# comparison

class Relation(str, Enum):
    WEAKLY_FASTER = "WeaklyFaster"
    WEAKLY_SLOWER = "WeaklySlower"
    FASTER = "Faster"
    SLOWER = "Slower"
    INCOMPARABLE = "Incomparable"
    INCONCLUSIVE = "Inconclusive"


BOUNDED_RELATIONS = frozenset(
    {Relation.WEAKLY_FASTER, Relation.WEAKLY_SLOWER, Relation.FASTER, Relation.SLOWER})


@dataclass(frozen=True)
class ComparisonVerdict:
    relation: Relation
    constant_estimate: Optional[float] = None
    evidence: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if (self.constant_estimate is not None) != (self.relation in BOUNDED_RELATIONS):
            raise ValueError("constant_estimate must be present exactly for bounded verdicts")

    def to_dict(self):
        return {"relation": self.relation.value, "constant_estimate": self.constant_estimate,
                "evidence": self.evidence}


DEFAULT_WINDOW = WindowSchedule()


def _weak_stage_sups(mu, sigma, window, step):
    grid = symmetric_log_grid(window.final, step)
    f = sigma.log_eval(grid) - mu.log_eval(grid)
    fwd, bwd = [], []
    for T in window.windows:
        sel = np.abs(grid) <= T
        fwd.append(float(running_excess(f[sel])[-1]))
        bwd.append(float(running_excess(-f[sel])[-1]))
    return np.array(fwd), np.array(bwd), grid.size


def compare_weak(mu: GrowthRate, sigma: GrowthRate, window: WindowSchedule | None = None,
                 step: float = 0.01, plateau_tol: float = PLATEAU_TOL,
                 threshold: float = DIVERGENCE_THRESHOLD) -> ComparisonVerdict:
    """Decide ``mu`` weakly faster / slower than ``sigma`` from expanding windows.

    ``S(T) = sup_{-T <= s <= t <= T} [log sigma(t)/sigma(s) - log mu(t)/mu(s)]`` is the
    log of the smallest admissible ``M`` on the window; a plateau under doubling means
    ``mu`` is weakly faster, with ``constant_estimate = S``.
    """
    window = window or DEFAULT_WINDOW
    fwd, bwd, n = _weak_stage_sups(mu, sigma, window, step)
    vf = window_verdict(fwd, plateau_tol, threshold)
    vb = window_verdict(bwd, plateau_tol, threshold)
    evidence = {
        "grid_size": n,
        "window": window.final,
        "stages": window.stages,
        "sup_forward": fwd[-3:].tolist(),
        "sup_backward": bwd[-3:].tolist(),
        "plateau_slope": [float(fwd[-1] - fwd[-2]), float(bwd[-1] - bwd[-2])],
    }
    if vf == "plateau":
        return ComparisonVerdict(Relation.WEAKLY_FASTER, float(fwd[-1]), evidence)
    if vb == "plateau":
        return ComparisonVerdict(Relation.WEAKLY_SLOWER, float(bwd[-1]), evidence)
    if vf == "diverging" and vb == "diverging":
        return ComparisonVerdict(Relation.INCOMPARABLE, None, evidence)
    return ComparisonVerdict(Relation.INCONCLUSIVE, None, evidence)


def _separation_floor(rate: GrowthRate, T: float, d_min: float = 1.0) -> float:
    lo, hi = rate.log_eval(np.array([-T, T]))
    return max(d_min, min(hi, -lo))


def strong_ratios(mu: GrowthRate, sigma: GrowthRate, window: WindowSchedule,
                  step: float = 0.05, trend_stages: int = 3) -> np.ndarray:
    """``r(T) = sup dlog sigma / dlog mu`` over pairs with ``dlog mu`` at least the one-sided range of ``mu`` on ``[-T, T]``.

    Only the last ``trend_stages`` windows are evaluated.
    """
    grid = symmetric_log_grid(window.final, step)
    lm, ls = mu.log_eval(grid), sigma.log_eval(grid)
    out = []
    for T in window.windows[-trend_stages:]:
        sel = np.abs(grid) <= T
        _, hi = pair_ratio_extrema(ls[sel], lm[sel], _separation_floor(mu, T))
        out.append(hi)
    return np.array(out)


def _decays(r, threshold):
    return bool(np.all(np.isfinite(r)) and np.all(np.diff(r) <= 1e-12) and r[-1] < threshold)


def compare_strong(mu: GrowthRate, sigma: GrowthRate, window: WindowSchedule | None = None,
                   threshold: float = 0.05, step: float = 0.05) -> ComparisonVerdict:
    """Decide ``mu >> sigma`` (Faster) or ``mu << sigma`` (Slower).

    The quantifier over all exponent pairs is replaced by the decay of
    ``dlog sigma / dlog mu`` at large separations, combined with the weak test.
    """
    window = window or DEFAULT_WINDOW
    weak = compare_weak(mu, sigma, window)
    r_fwd = strong_ratios(mu, sigma, window, step)
    r_bwd = strong_ratios(sigma, mu, window, step)
    evidence = dict(weak.evidence)
    evidence.update({"weak_relation": weak.relation.value, "ratio_forward": r_fwd.tolist(),
                     "ratio_backward": r_bwd.tolist(), "ratio_threshold": threshold})
    if weak.relation is Relation.WEAKLY_FASTER and _decays(r_fwd, threshold):
        return ComparisonVerdict(Relation.FASTER, weak.constant_estimate, evidence)
    if _decays(r_bwd, threshold):
        back = compare_weak(sigma, mu, window)
        if back.relation is Relation.WEAKLY_FASTER:
            return ComparisonVerdict(Relation.SLOWER, back.constant_estimate, evidence)
    stable = all(np.all(np.isfinite(r)) and abs(r[-1] - r[-2]) < PLATEAU_TOL * max(1.0, abs(r[-1]))
                 for r in (r_fwd, r_bwd))
    if stable and min(r_fwd[-1], r_bwd[-1]) >= threshold:
        return ComparisonVerdict(Relation.INCOMPARABLE, None, evidence)
    return ComparisonVerdict(Relation.INCONCLUSIVE, None, evidence)


# ---------------------------------------------------------------------------
# classification

class RateClassKind(str, Enum):
    SLOW = "Slow"
    FAST = "Fast"
    EXPONENTIAL_LIKE = "ExponentialLike"
    UNCLASSIFIED = "Unclassified"


@dataclass(frozen=True)
class RateClass:
    kind: RateClassKind
    witness: Optional[float] = None
    diagnostic: str = ""

    def to_dict(self):
        return {"class": self.kind.value, "witness": self.witness, "diagnostic": self.diagnostic}


DEFAULT_SLOW_GRID = (0.1, 0.25, 0.5, 0.75, 0.9)
DEFAULT_FAST_GRID = (1.25, 1.5, 2.0, 3.0)


def classify(rate: GrowthRate, r_grid: Sequence[float] | None = None,
             window: WindowSchedule | None = None) -> RateClass:
    """Slow / Fast / ExponentialLike / Unclassified.

    The slow witness is the smallest ``r`` with ``rate`` weakly slower than ``u_r``;
    the fast witness is the largest ``r`` with ``rate`` weakly faster than ``s_r``.
    """
    if r_grid is None:
        r_grid = DEFAULT_SLOW_GRID + DEFAULT_FAST_GRID
    r_grid = [float(r) for r in r_grid]
    if not r_grid:
        raise ParameterError("empty exponent grid")
    slow_rs = sorted(r for r in r_grid if 0 < r < 1)
    fast_rs = sorted((r for r in r_grid if r > 1), reverse=True)
    window = window or DEFAULT_WINDOW

    slow = next((r for r in slow_rs
                 if compare_weak(subexponential(r), rate, window).relation is Relation.WEAKLY_FASTER),
                None)
    fast = next((r for r in fast_rs
                 if compare_weak(rate, superexponential(r), window).relation is Relation.WEAKLY_FASTER),
                None)
    if slow is not None and fast is not None:
        return RateClass(RateClassKind.UNCLASSIFIED,
                         diagnostic=f"both slow (r={slow}) and fast (r={fast}) tests passed")
    if slow is not None:
        return RateClass(RateClassKind.SLOW, slow)
    if fast is not None:
        return RateClass(RateClassKind.FAST, fast)
    e = exponential()
    if (compare_weak(rate, e, window).relation is Relation.WEAKLY_FASTER
            and compare_weak(e, rate, window).relation is Relation.WEAKLY_FASTER):
        return RateClass(RateClassKind.EXPONENTIAL_LIKE)
    return RateClass(RateClassKind.UNCLASSIFIED, diagnostic="no witness on the exponent grid")


# ---------------------------------------------------------------------------
# limits of translated rates

class LimitKind(str, Enum):
    FINITE_POSITIVE = "FinitePositive"
    DIVERGES_TO_INFINITY = "DivergesToInfinity"
    DECAYS_TO_ZERO = "DecaysToZero"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class TranslatedLimit:
    kind: LimitKind
    bounds: Optional[tuple] = None
    log_values: tuple = ()

    def to_dict(self):
        return {"verdict": self.kind.value,
                "bounds": list(self.bounds) if self.bounds is not None else None,
                "log_values": list(self.log_values)}


def default_tau_schedule(direction: int = 1) -> np.ndarray:
    return direction * 2.0 ** np.arange(3, 13)


def translated_limit_probe(rate: GrowthRate, t: float, tau_schedule=None,
                           stab_tol: float = 0.1,
                           threshold: float = DIVERGENCE_THRESHOLD) -> TranslatedLimit:
    """Track ``mu_tau(t)`` along a diverging schedule of translations, in log-space.

    FinitePositive when the last half of the log-values spreads less than
    ``stab_tol``; divergence when they pass ``±threshold`` with a monotone trend.
    """
    t = float(_check_time(t))
    taus = default_tau_schedule() if tau_schedule is None else np.asarray(tau_schedule, float)
    if taus.size < 8:
        raise ParameterError("translation schedule needs at least 8 entries")
    d = np.diff(taus)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ParameterError("translation schedule must be strictly monotone")
    if t == 0.0:
        return TranslatedLimit(LimitKind.FINITE_POSITIVE, (1.0, 1.0), (0.0,) * taus.size)
    v = rate.log_eval(t + taus) - rate.log_eval(taus)
    tail = v[v.size // 2:]
    steps = np.diff(tail)
    if v[-1] > threshold and np.all(steps > 0):
        kind, bounds = LimitKind.DIVERGES_TO_INFINITY, None
    elif v[-1] < -threshold and np.all(steps < 0):
        kind, bounds = LimitKind.DECAYS_TO_ZERO, None
    elif np.ptp(tail) < stab_tol and np.all(np.abs(tail) < threshold):
        kind, bounds = LimitKind.FINITE_POSITIVE, (float(np.exp(tail.min())), float(np.exp(tail.max())))
    else:
        kind, bounds = LimitKind.INCONCLUSIVE, None
    return TranslatedLimit(kind, bounds, tuple(float(x) for x in v))
