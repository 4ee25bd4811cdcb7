"""Translation orbits of coefficient functions: limit probes and limit-behaviour classification.

The hull of ``omega`` is probed through its pointwise-on-compacts behaviour along
diverging translation schedules ``omega(. + tau_n)``; predictions derived from
growth-rate classes and certificates are logged next to the probes that could
contradict them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .dichotomy import (
    DichotomyCertificate,
    Growth,
    GrowthCertificate,
    classify_growth,
    direction_log_norms,
    verify_dichotomy,
    verify_growth,
)
from .errors import DomainError, ParameterError
from .grids import PLATEAU_TOL
from .growth_rate import GrowthRate, RateClassKind, classify
from .linear_system import (
    DiagonalSystem,
    EvolutionOperator,
    LinearSystem,
    MatrixSystem,
    ScalarSystem,
    constant,
    tabulated,
)
from .spectrum import estimate_spectrum

CAUCHY_TOL = 1e-6
DIVERGENCE_LEVEL = 1e3
QUAD_TOL = 1e-6
ENDPOINT_TOL = 1e-2


def default_schedule(direction: int = 1, n_min: int = 3, n_max: int = 24) -> np.ndarray:
    """``tau_n = +-2^n`` for ``n = n_min .. n_max``."""
    return float(np.sign(direction)) * 2.0 ** np.arange(n_min, n_max + 1)


def _callable(omega) -> Callable:
    if isinstance(omega, ScalarSystem):
        return omega.coefficient
    if isinstance(omega, LinearSystem):
        return omega.coefficient_matrix
    if callable(omega):
        return omega
    raise ParameterError("omega must be a linear system or a callable")


def _evaluate(f, t):
    try:
        v = np.asarray(f(t), dtype=float)
    except Exception as exc:  # noqa: BLE001 - any evaluation failure is an input problem
        raise DomainError(f"coefficient evaluation failed at shifted arguments: {exc}") from exc
    if v.ndim == 0:
        v = np.full(t.shape, float(v))
    if not np.all(np.isfinite(v)):
        raise DomainError("coefficient is not finite at some shifted argument")
    return v


def _pointwise_norm(v):
    if v.ndim == 3:
        return np.linalg.norm(v, ord=2, axis=(1, 2))
    return np.abs(v)


@dataclass
class OrbitProbe:
    omega: object
    tau_schedule: np.ndarray = field(default_factory=default_schedule)
    compact_radius: float = 10.0
    n_grid: int = 401

    def __post_init__(self):
        s = np.asarray(self.tau_schedule, dtype=float)
        if s.size < 8:
            raise ParameterError("translation schedule needs at least 8 entries")
        d = np.diff(s)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ParameterError("translation schedule must be strictly monotone")
        if not self.compact_radius > 0:
            raise ParameterError("compact radius must be positive")
        self.tau_schedule = s

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(-self.compact_radius, self.compact_radius, self.n_grid)


class LimitVerdict(str, Enum):
    CONVERGENT = "ConvergentTo"
    DIVERGES = "DivergesPointwise"
    NON_CAUCHY = "NonCauchy"


@dataclass
class LimitProbeReport:
    verdict: LimitVerdict
    sup_distances: list
    grid: np.ndarray
    limit: Optional[np.ndarray] = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        d = {"verdict": self.verdict.value, "sup_distances": self.sup_distances, "notes": self.notes}
        if self.limit is not None:
            d["limit_range"] = [float(np.min(self.limit)), float(np.max(self.limit))]
        return d

    def limit_csv_rows(self):
        """Rows ``(t, value)`` of the sampled limit (scalar limits only)."""
        if self.limit is None or self.limit.ndim != 1:
            return []
        return list(zip(self.grid.tolist(), self.limit.tolist()))


def pointwise_limit_probe(probe: OrbitProbe, tol: float = CAUCHY_TOL, level: float = DIVERGENCE_LEVEL,
                          tail: int = 3) -> LimitProbeReport:
    """Cauchy test of ``omega(. + tau_n)`` uniformly on ``[-T, T]``.

    ConvergentTo when the last ``tail`` consecutive sup-distances are below ``tol``;
    DivergesPointwise when over the last ``tail`` entries the values exceed ``level``
    at every grid point and grow in magnitude there; otherwise NonCauchy.
    """
    f = _callable(probe.omega)
    grid = probe.grid
    vals = [_evaluate(f, grid + tau) for tau in probe.tau_schedule]
    dists = [float(np.max(_pointwise_norm(b - a))) for a, b in zip(vals, vals[1:])]
    notes = []
    if all(d < tol for d in dists[-tail:]):
        return LimitProbeReport(LimitVerdict.CONVERGENT, dists, grid, vals[-1],
                                [f"tail sup-distances below {tol:g}"])
    mags = np.array([_pointwise_norm(v) for v in vals[-tail - 1:]])
    if np.all(mags[-1] > level) and np.all(np.diff(mags, axis=0) > 0):
        notes.append(f"|omega| > {level:g} on the whole grid and increasing")
        return LimitProbeReport(LimitVerdict.DIVERGES, dists, grid, None, notes)
    notes.append(f"last sup-distance {dists[-1]:.3g}")
    return LimitProbeReport(LimitVerdict.NON_CAUCHY, dists, grid, None, notes)


def limit_system(report: LimitProbeReport, label: str = "limit") -> LinearSystem:
    """Linear system with the sampled limit as coefficient (constant limits are exact)."""
    if report.limit is None:
        raise ParameterError("probe found no limit")
    v = report.limit
    if np.ptp(v.reshape(v.shape[0], -1), axis=0).max() < CAUCHY_TOL:
        if v.ndim == 1:
            c = float(np.round(np.mean(v), 12))
            return constant(c if c != 0 else 0.0)
        M = v.mean(axis=0)
        return MatrixSystem(lambda t: np.broadcast_to(M, np.shape(t) + M.shape), M.shape[0], label,
                            periodic=True)
    return tabulated(report.grid, v, label=label)


# ---------------------------------------------------------------------------

_GL_CACHE = {}


def _gauss(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def window_integral(g: Callable, a: float, b: float, breakpoints=(), tol: float = QUAD_TOL,
                    order: int = 8, max_panels: int = 1 << 16) -> float:
    """``int_a^b g`` by composite Gauss-Legendre, doubling panels until two estimates agree to ``tol``."""
    cuts = np.unique(np.concatenate([[a, b], [x for x in breakpoints if a < x < b]]))
    x, w = _gauss(order)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        prev, n = None, 1
        while True:
            edges = np.linspace(lo, hi, n + 1)
            half = 0.5 * np.diff(edges)
            mid = 0.5 * (edges[1:] + edges[:-1])
            pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
            est = float(np.sum(g(pts).reshape(n, -1) * w[None, :] * half[:, None]))
            if prev is not None and abs(est - prev) <= tol:
                break
            if n >= max_panels:
                raise ParameterError(f"quadrature did not reach {tol:g} on [{lo}, {hi}]")
            prev, n = est, 2 * n
        total += est
    return total


def default_tau_grid(n_max: int = 16) -> np.ndarray:
    p = 2.0 ** np.arange(0, n_max + 1)
    return np.concatenate([-p[::-1], [0.0], p])


@dataclass
class IntegrabilityReport:
    sup_estimate: float
    unbounded: bool
    trend: str
    growth_exponent: Optional[float]
    radii: list
    running_sup: list
    window_values: dict

    def to_dict(self):
        return {"sup_estimate": "Unbounded" if self.unbounded else self.sup_estimate,
                "last_sup": self.running_sup[-1], "trend": self.trend,
                "growth_exponent": self.growth_exponent, "radii": self.radii,
                "running_sup": self.running_sup}


def uniform_local_integrability(omega, t0: float = 1.0, tau_grid=None, plateau_tol: float = PLATEAU_TOL,
                                tol: float = QUAD_TOL) -> IntegrabilityReport:
    """Running sup of ``(1/t0) int_tau^{tau+t0} ||omega||`` as ``|tau|`` expands.

    Unbounded when the running sup grows at each of the last three radii; bounded when
    the last step adds less than ``plateau_tol``.
    """
    if not t0 > 0:
        raise ParameterError("window length must be positive")
    taus = np.sort(np.asarray(default_tau_grid() if tau_grid is None else tau_grid, dtype=float))
    if not (taus.min() < 0 < taus.max()):
        raise ParameterError("tau grid must span both signs")
    f = _callable(omega)
    kinks = tuple(getattr(omega, "breakpoints", ()))

    def g(t):
        return _pointwise_norm(_evaluate(f, t))

    values = {float(tau): window_integral(g, tau, tau + t0, kinks, tol * t0) / t0 for tau in taus}
    radii = np.unique(np.abs(taus))
    run, best = [], -math.inf
    for r in radii:
        best = max([best] + [v for tau, v in values.items() if abs(tau) <= r])
        run.append(best)
    inc = np.diff(run[-4:])
    unbounded = bool(len(inc) == 3 and np.all(inc > plateau_tol))
    exponent = None
    if unbounded and run[-2] > 0 and radii[-2] > 0:
        exponent = float(math.log(run[-1] / run[-2]) / math.log(radii[-1] / radii[-2]))
    if unbounded:
        trend = "linear" if exponent is not None and abs(exponent - 1) < 0.1 else "growing"
    else:
        trend = "plateau" if abs(run[-1] - run[-2]) < plateau_tol else "undecided"
    return IntegrabilityReport(float(run[-1]), unbounded, trend, exponent, radii.tolist(), run,
                               {str(k): v for k, v in values.items()})


@dataclass
class BoundedSolutionsReport:
    all_bounded: bool
    ambiguous: list
    directions: list

    def to_dict(self):
        return {"all_bounded": self.all_bounded, "ambiguous": self.ambiguous, "directions": self.directions}


def bounded_solutions_probe(system: LinearSystem, horizon: float = 50.0, basis=None,
                            n_points: int = 400) -> BoundedSolutionsReport:
    """Whether every basis solution stays bounded on ``[-T, T]``."""
    if not horizon > 0:
        raise ParameterError("horizon must be positive")
    n = system.dimension
    if not system.log_space:
        horizon = min(horizon, EvolutionOperator(system, "rk4").horizon)
    X = np.eye(n) if basis is None else np.linalg.qr(np.asarray(basis, float).reshape(n, -1))[0]
    ts = np.linspace(0.0, horizon, n_points)
    fwd = direction_log_norms(system, ts, X)
    bwd = direction_log_norms(system, -ts, X)
    dirs, amb, ok = [], [], True
    for k in range(X.shape[1]):
        gf, gb = classify_growth(fwd[:, k]), classify_growth(bwd[:, k])
        dirs.append({"forward": gf.value, "backward": gb.value})
        if Growth.AMBIGUOUS in (gf, gb):
            amb.append(k)
        ok = ok and gf is Growth.BOUNDED and gb is Growth.BOUNDED
    return BoundedSolutionsReport(ok, amb, dirs)


# ---------------------------------------------------------------------------

class Prediction(str, Enum):
    EMPTY_LIMIT_SETS = "EmptyLimitSets"
    LIMITS_BOUNDED = "LimitEquationsAllBounded"
    NO_DICHOTOMY_ON_HULL = "NoDichotomyOnHull"
    SPECTRUM_ZERO = "SpectrumCollapsesToZero"
    ZERO_OR_INFINITY = "SpectralIntervalsOnlyZeroOrInfinity"


@dataclass
class LimitClassification:
    predictions: dict
    cross_checks: list
    falsifications: list
    outcome: str
    rate_class: Optional[str] = None

    def to_dict(self):
        return {"outcome": self.outcome, "rate_class": self.rate_class,
                "predictions": {k.value: v for k, v in self.predictions.items()},
                "cross_checks": self.cross_checks, "falsifications": self.falsifications}


def _near(x, target, tol=ENDPOINT_TOL):
    if math.isinf(target):
        return x == target
    return math.isfinite(x) and abs(x - target) <= tol


def _spectrum_is(est, allowed) -> bool:
    return all(any(_near(a, v) and _near(b, v) for v in allowed) for a, b in est.intervals)


def classify_limit_behavior(omega: LinearSystem, dichotomy: Optional[DichotomyCertificate] = None,
                            growth: Optional[GrowthCertificate] = None,
                            query_rate: Optional[GrowthRate] = None, periodic: Optional[bool] = None,
                            radius: float = 10.0, schedules: Optional[Sequence] = None,
                            uli_window: float = 1.0, horizon: float = 50.0) -> LimitClassification:
    """Predict limit behaviour of the hull and cross-check each prediction with the probes.

    Supplied certificates are verified first. Disagreement between a prediction and
    a probe is recorded in ``falsifications``; rates that are neither slow nor fast,
    with no growth certificate, give the ``unclassified-input`` outcome.
    """
    for cert, verify in ((dichotomy, verify_dichotomy), (growth, verify_growth)):
        if cert is not None:
            rep = verify(omega, cert)
            if not rep.passed:
                raise ParameterError(f"supplied certificate fails verification (margin {rep.worst_margin:.3g})")
    rate = dichotomy.rate if dichotomy else growth.rate if growth else query_rate
    periodic = omega.periodic if periodic is None else periodic
    preds: dict = {}

    def predict(p, witness):
        preds.setdefault(p, []).append(witness)

    rate_class = classify(rate) if rate is not None else None
    kind = rate_class.kind if rate_class else None
    if dichotomy is not None and dichotomy.uniform and kind is RateClassKind.FAST:
        predict(Prediction.EMPTY_LIMIT_SETS, {"rule": "fast rate with uniform dichotomy",
                                              "rate": str(dichotomy.rate), "witness_r": rate_class.witness})
    if growth is not None and growth.epsilon == 0 and kind is RateClassKind.SLOW:
        w = {"rule": "slow rate with uniform growth", "rate": str(growth.rate), "witness_r": rate_class.witness}
        predict(Prediction.LIMITS_BOUNDED, w)
        predict(Prediction.NO_DICHOTOMY_ON_HULL, w)
        predict(Prediction.SPECTRUM_ZERO, dict(w, spectrum="exponential spectrum of the limit equations"))
    uli = uniform_local_integrability(omega, uli_window)
    if uli.unbounded:
        predict(Prediction.EMPTY_LIMIT_SETS, {"rule": "not uniformly locally integrable", "trend": uli.trend})
    fast_query = query_rate is not None and classify(query_rate).kind is RateClassKind.FAST
    if growth is not None and growth.epsilon == 0 and growth.rate.is_exponential_family and fast_query:
        predict(Prediction.SPECTRUM_ZERO, {"rule": "exponential growth with fast query rate",
                                           "query_rate": str(query_rate)})
    slow_rate = query_rate if query_rate is not None else rate
    if periodic and slow_rate is not None and classify(slow_rate).kind is RateClassKind.SLOW:
        predict(Prediction.ZERO_OR_INFINITY, {"rule": "periodic coefficient with slow rate", "rate": str(slow_rate)})

    if not preds and growth is None and kind not in (RateClassKind.SLOW, RateClassKind.FAST):
        return LimitClassification({}, [{"check": "uniform_local_integrability", **uli.to_dict()}], [],
                                   "unclassified-input", kind.value if kind else None)

    checks, falsified = [], []

    def record(prediction, check, ok, detail):
        entry = {"prediction": prediction.value, "check": check, "consistent": ok, **detail}
        checks.append(entry)
        if not ok:
            falsified.append(entry)

    schedules = list(schedules) if schedules is not None else [default_schedule(1), default_schedule(-1)]
    probes = [pointwise_limit_probe(OrbitProbe(omega, s, radius)) for s in schedules]
    limits = [limit_system(p) for p in probes if p.verdict is LimitVerdict.CONVERGENT]
    for p, s in zip(probes, schedules):
        checks.append({"check": "pointwise_limit_probe", "direction": "+" if s[-1] > 0 else "-", **p.to_dict()})

    if Prediction.EMPTY_LIMIT_SETS in preds:
        for p, s in zip(probes, schedules):
            record(Prediction.EMPTY_LIMIT_SETS, "pointwise_limit_probe",
                   p.verdict is not LimitVerdict.CONVERGENT,
                   {"direction": "+" if s[-1] > 0 else "-", "verdict": p.verdict.value})
    if Prediction.LIMITS_BOUNDED in preds or Prediction.NO_DICHOTOMY_ON_HULL in preds:
        for lim in limits:
            rep = bounded_solutions_probe(lim, horizon)
            if Prediction.LIMITS_BOUNDED in preds:
                record(Prediction.LIMITS_BOUNDED, "bounded_solutions_probe", rep.all_bounded,
                       {"limit": lim.label, **rep.to_dict()})
            if Prediction.NO_DICHOTOMY_ON_HULL in preds:
                record(Prediction.NO_DICHOTOMY_ON_HULL, "bounded_solutions_probe", rep.all_bounded,
                       {"limit": lim.label, "reason": "every solution bounded, so no dichotomy"})
        if not limits:
            checks.append({"check": "bounded_solutions_probe", "note": "no convergent limit found to test"})
    if Prediction.SPECTRUM_ZERO in preds:
        targets = []
        if growth is not None and growth.epsilon == 0 and kind is RateClassKind.SLOW:
            from .growth_rate import exponential

            targets += [(lim, exponential()) for lim in limits if isinstance(lim, (ScalarSystem, DiagonalSystem))]
        if fast_query and isinstance(omega, (ScalarSystem, DiagonalSystem)):
            targets.append((omega, query_rate))
        for sys_, r in targets:
            est = estimate_spectrum(sys_, r)
            record(Prediction.SPECTRUM_ZERO, "estimate_spectrum", _spectrum_is(est, [0.0]),
                   {"system": sys_.label, "rate": str(r), "intervals": est.to_dict()["intervals"]})
    if Prediction.ZERO_OR_INFINITY in preds and isinstance(omega, (ScalarSystem, DiagonalSystem)):
        est = estimate_spectrum(omega, slow_rate)
        record(Prediction.ZERO_OR_INFINITY, "estimate_spectrum",
               _spectrum_is(est, [0.0, math.inf, -math.inf]),
               {"system": omega.label, "rate": str(slow_rate), "intervals": est.to_dict()["intervals"]})
    # chain check: no local integrability bound means no limit on any schedule
    if uli.unbounded:
        for p in probes:
            if p.verdict is LimitVerdict.CONVERGENT:
                falsified.append({"check": "uniform_local_integrability vs pointwise_limit_probe",
                                  "detail": "convergent limit despite unbounded local averages"})
    return LimitClassification(preds, checks, falsified, "classified", kind.value if kind else None)
