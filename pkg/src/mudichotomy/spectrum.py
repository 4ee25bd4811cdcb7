"""Dichotomy spectra of scalar and diagonal systems from rate-relative Bohl exponents.

For a scalar system the shifted evolution ``Phi(t,s) (mu(t)/mu(s))^-gamma`` contracts
exactly when ``gamma`` exceeds the upper exponent

    limsup  log Phi(t,s) / (log mu(t) - log mu(s))      as the separation grows,

and expands when ``gamma`` is below the lower one, so each diagonal entry contributes
the interval ``[lower, upper]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dichotomy import DichotomyCertificate, KFit, Projector, fit_minimal_K
from .errors import ParameterError, UnsupportedCapabilityError
from .grids import DIVERGENCE_THRESHOLD, PairGrid, WindowSchedule, pair_ratio_extrema, symmetric_log_grid
from .growth_rate import GrowthRate
from .linear_system import DiagonalSystem, EvolutionOperator, LinearSystem, ScalarSystem, shift_system

SPECTRUM_WINDOW = WindowSchedule(base=4.0, stages=39, factor=2.0)
SPECTRUM_STEP = 0.05
TREND_STAGES = 3
MERGE_TOL = 1e-9


def ext_to_json(x: float):
    """Extended reals serialize with ``"-inf"``/``"+inf"`` sentinels."""
    if x == math.inf:
        return "+inf"
    if x == -math.inf:
        return "-inf"
    return float(x)


def ext_from_json(x) -> float:
    if x in ("+inf", "inf"):
        return math.inf
    if x == "-inf":
        return -math.inf
    return float(x)


@dataclass
class BohlExponents:
    lower: float
    upper: float
    lower_uncertainty: float
    upper_uncertainty: float
    stage_lower: list
    stage_upper: list
    floors: list

    def to_dict(self):
        return {"lower": ext_to_json(self.lower), "upper": ext_to_json(self.upper),
                "lower_uncertainty": self.lower_uncertainty, "upper_uncertainty": self.upper_uncertainty,
                "stage_lower": self.stage_lower, "stage_upper": self.stage_upper, "floors": self.floors}


def _resolve(values, threshold):
    v = np.asarray(values, dtype=float)
    inc = np.diff(v)
    if v[-1] > threshold and np.all(inc > 0):
        return math.inf, 0.0
    if v[-1] < -threshold and np.all(inc < 0):
        return -math.inf, 0.0
    return float(v[-1]), float(abs(v[-1] - v[-2]) / 2)


def _bohl_floor(rate: GrowthRate, T: float, d_min: float) -> float:
    # separations must grow with the window, but much slower than it
    r = math.sqrt(T)
    lo, hi = rate.log_eval(np.array([-r, r]))
    return max(d_min, hi - lo)


def bohl_exponents(system: ScalarSystem, rate: GrowthRate, window: Optional[WindowSchedule] = None,
                   step: float = SPECTRUM_STEP, d_min: float = 1.0,
                   threshold: float = DIVERGENCE_THRESHOLD, n_sep: int = 160,
                   n_edge: int = 128) -> BohlExponents:
    """Lower/upper ``mu``-relative exponents of a scalar system.

    Pairs (all pairs of a log-spaced grid, plus anchors from that grid and from the
    outer half of each window against geometric separations) on each of the last three windows must have ``log mu(t) - log mu(s) >= D``
    where ``D`` is the range of ``log mu`` on ``[-sqrt(T), sqrt(T)]`` (at least ``d_min``).
    ``+-inf`` is returned when the stage estimates run past ``+-threshold`` monotonically.
    """
    if not isinstance(system, ScalarSystem):
        raise ParameterError("bohl_exponents takes a scalar system")
    window = window or SPECTRUM_WINDOW
    method = "closed" if system.has_closed_form else "rk4"
    op = EvolutionOperator(system, method)
    if method != "closed" and window.final > op.horizon:
        window = window.scaled(op.horizon / window.final)
    T = window.final
    lo_end, hi_end = rate.log_eval(np.array([-T, T]))
    if min(hi_end, -lo_end) < d_min:
        raise ParameterError(f"log {rate} stays within {d_min:g} of 0 on the window; no pair qualifies")
    grid = symmetric_log_grid(T, step)
    logmu = rate.log_eval(grid)
    F = op.log_primitive(grid)[:, 0]
    # anchored pairs (s, s +- d): separations small relative to |s|, which the
    # log grid alone never pairs up far from the origin
    stages = window.windows[-TREND_STAGES:]
    seps = np.unique(np.concatenate([np.geomspace(1e-3, 2 * T, n_sep),
                                     np.outer(np.sqrt(stages), np.geomspace(1.0, 4.0, 24)).ravel()]))
    edge = np.concatenate([np.linspace(Tk / 2, Tk, n_edge) for Tk in stages])
    anchors = np.unique(np.concatenate([grid, edge, -edge]))
    S = np.repeat(anchors, 2 * seps.size)
    Tt = S + np.tile(np.concatenate([seps, -seps]), anchors.size)
    ok = np.abs(Tt) <= T
    S, Tt = S[ok], Tt[ok]
    pts, inv = np.unique(np.concatenate([S, Tt]), return_inverse=True)
    Fp, Lp = op.log_primitive(pts)[:, 0], rate.log_eval(pts)
    dF = Fp[inv[S.size:]] - Fp[inv[:S.size]]
    dL = Lp[inv[S.size:]] - Lp[inv[:S.size]]
    reach = np.maximum(np.abs(S), np.abs(Tt))
    lows, highs, floors = [], [], []
    for Tk in stages:
        sel = np.abs(grid) <= Tk
        D = _bohl_floor(rate, Tk, d_min)
        lo, hi = pair_ratio_extrema(F[sel], logmu[sel], D)
        use = (reach <= Tk) & (dL >= D)
        if use.any():
            r = dF[use] / dL[use]
            lo = np.nanmin([lo, r.min()])
            hi = np.nanmax([hi, r.max()])
        if math.isnan(lo):
            raise ParameterError(f"no pair with separation >= {D:g} on window {Tk:g}")
        lows.append(lo)
        highs.append(hi)
        floors.append(D)
    lower, lu = _resolve(lows, threshold)
    upper, uu = _resolve(highs, threshold)
    return BohlExponents(lower, upper, lu, uu, lows, highs, floors)


@dataclass
class SpectrumEstimate:
    intervals: list
    rate: GrowthRate
    uncertainties: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        check_structure(self.intervals, self.diagnostics.get("dimension"))

    def to_dict(self):
        return {"intervals": [{"lo": ext_to_json(a), "hi": ext_to_json(b)} for a, b in self.intervals],
                "uncertainties": self.uncertainties, "rate": self.rate.to_dict(),
                "diagnostics": self.diagnostics}

    def contains(self, gamma: float) -> bool:
        return any(a <= gamma <= b for a, b in self.intervals)

    def gaps(self) -> list:
        """Open gaps between consecutive intervals plus the unbounded ends, as (lo, hi) pairs."""
        out, prev = [], -math.inf
        for a, b in self.intervals:
            if a > prev:
                out.append((prev, a))
            prev = b
        if prev < math.inf:
            out.append((prev, math.inf))
        return out


def check_structure(intervals, dimension: Optional[int] = None) -> None:
    """Sorted, each ``a <= b``, strictly separated, at most ``dimension`` pieces."""
    for a, b in intervals:
        if not a <= b:
            raise AssertionError(f"interval [{a}, {b}] is reversed")
    for (a0, b0), (a1, b1) in zip(intervals, intervals[1:]):
        if not b0 < a1:
            raise AssertionError(f"intervals [{a0},{b0}] and [{a1},{b1}] are not strictly separated")
    if dimension is not None and len(intervals) > dimension:
        raise AssertionError(f"{len(intervals)} intervals exceed dimension {dimension}")


def merge_intervals(intervals, uncertainties=None, tol: float = MERGE_TOL):
    if uncertainties is None:
        uncertainties = [(0.0, 0.0)] * len(intervals)
    order = sorted(range(len(intervals)), key=lambda i: (intervals[i][0], intervals[i][1]))
    merged, unc = [], []
    for i in order:
        a, b = intervals[i]
        ua, ub = uncertainties[i]
        if merged and a <= merged[-1][1] + tol:
            if b > merged[-1][1]:
                merged[-1] = (merged[-1][0], b)
                unc[-1] = (unc[-1][0], ub)
            continue
        merged.append((a, b))
        unc.append((ua, ub))
    return merged, unc


def _components(system):
    if isinstance(system, ScalarSystem):
        return (system,)
    if isinstance(system, DiagonalSystem):
        return system.components
    raise UnsupportedCapabilityError(
        "spectrum estimation covers scalar and diagonal systems; general matrix systems are not supported")


def estimate_spectrum(system: LinearSystem, rate: GrowthRate, window: Optional[WindowSchedule] = None,
                      step: float = SPECTRUM_STEP) -> SpectrumEstimate:
    comps = _components(system)
    window = window or SPECTRUM_WINDOW
    exps = [bohl_exponents(c, rate, window, step) for c in comps]
    merged, unc = merge_intervals([(e.lower, e.upper) for e in exps],
                                  [(e.lower_uncertainty, e.upper_uncertainty) for e in exps])
    diag = {"dimension": system.dimension, "window": window.to_dict(), "step": step,
            "threshold": DIVERGENCE_THRESHOLD, "components": [e.to_dict() for e in exps],
            # no computable test separates the nonuniform spectrum from this one
            "nonuniform_strictness": "not assessed",
            "endpoints": "estimates; attainment by trajectories is not checked"}
    return SpectrumEstimate(merged, rate, [list(u) for u in unc], diag)


def interval_distance(a: list, b: list) -> float:
    """Max endpoint distance between two interval lists of equal length (inf if lengths differ)."""
    if len(a) != len(b):
        return math.inf
    worst = 0.0
    for (a0, a1), (b0, b1) in zip(a, b):
        for x, y in ((a0, b0), (a1, b1)):
            if x == y:
                continue
            worst = max(worst, abs(x - y))
    return worst


@dataclass
class ResolventResult:
    in_resolvent: bool
    certificate: Optional[DichotomyCertificate]
    gamma: float
    anchor: Optional[float] = None
    exponents: list = field(default_factory=list)
    fit: Optional[KFit] = None
    reason: str = ""

    def to_dict(self):
        return {"in_resolvent": self.in_resolvent, "gamma": ext_to_json(self.gamma), "anchor": self.anchor,
                "certificate": self.certificate.to_dict() if self.certificate else None,
                "exponents": [e.to_dict() for e in self.exponents],
                "fit": self.fit.to_dict() if self.fit else None, "reason": self.reason}


MAX_RATE_EXPONENT = 0.5


def resolvent_test(system: LinearSystem, rate: GrowthRate, gamma: float, grid: Optional[PairGrid] = None,
                   window: Optional[WindowSchedule] = None) -> ResolventResult:
    """Does the ``(rate, gamma)``-shifted system admit a uniform dichotomy?

    Each component goes to the stable side when its shifted upper exponent is negative
    and to the unstable side when the lower one is positive; a component whose
    exponents straddle 0 puts ``gamma`` in the spectrum. The certificate exponents sit
    halfway to 0 (magnitude capped at 1/2) and ``K`` is fitted on the pair grid.
    ``gamma = +inf`` (``-inf``) is tested with an identity (zero) projector at a finite anchor.
    """
    comps = _components(system)
    gamma = float(gamma)
    base = [bohl_exponents(c, rate, window) for c in comps]
    anchor = None
    if math.isinf(gamma):
        if gamma > 0:
            if any(e.upper == math.inf for e in base):
                return ResolventResult(False, None, gamma, None, base, reason="upper exponent is +inf")
            anchor = max(0.0, max(e.upper for e in base)) + 1.0
        else:
            if any(e.lower == -math.inf for e in base):
                return ResolventResult(False, None, gamma, None, base, reason="lower exponent is -inf")
            anchor = min(0.0, min(e.lower for e in base)) - 1.0
        g = anchor
    else:
        g = gamma
    shifted = shift_system(system, rate, g)
    exps = [bohl_exponents(c, rate, window) for c in _components(shifted)]
    stable = []
    for i, e in enumerate(exps):
        if e.upper < 0:
            stable.append(True)
        elif e.lower > 0:
            stable.append(False)
        else:
            return ResolventResult(False, None, gamma, anchor, exps,
                                   reason=f"component {i} exponents [{e.lower:g}, {e.upper:g}] contain 0")
    n = len(exps)
    if all(stable):
        projector = Projector.identity(n)
    elif not any(stable):
        projector = Projector.zero(n)
    else:
        projector = Projector.constant(np.diag([1.0 if s else 0.0 for s in stable]))
    alpha = beta = None
    if any(stable):
        worst = max(e.upper for e, s in zip(exps, stable) if s)
        alpha = -MAX_RATE_EXPONENT if worst == -math.inf else max(0.5 * worst, -MAX_RATE_EXPONENT)
    if not all(stable):
        worst = min(e.lower for e, s in zip(exps, stable) if not s)
        beta = MAX_RATE_EXPONENT if worst == math.inf else min(0.5 * worst, MAX_RATE_EXPONENT)
    fit = fit_minimal_K(shifted, projector, rate, alpha, beta, grid=grid)
    cert = DichotomyCertificate(projector, fit.log_K, rate, alpha, beta) if fit.stable else None
    reason = "" if fit.stable else "fitted K does not plateau under window doubling"
    return ResolventResult(fit.stable, cert, gamma, anchor, exps, fit, reason)
