"""Dichotomy and bounded-growth certificates: verification, fitting, propagation.

Every inequality is checked in log-space, e.g. for ``t >= s``

    log ||Phi(t,s) P(s)|| <= log K + alpha (log mu(t) - log mu(s)) + theta sgn(s) log mu(s)

and the margin is ``rhs - lhs``; a negative margin is a violation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .errors import ParameterError
from .grids import PLATEAU_TOL, PairGrid
from .growth_rate import ComparisonVerdict, GrowthRate, Relation, translate
from .linear_system import EvolutionOperator, LinearSystem

CLOSED_FORM_TOL = 1e-9
NUMERIC_TOL = 1e-5
BOUNDED_LOG_THRESHOLD = math.log(1e3)


class ProjectorKind(str, Enum):
    ZERO = "zero"
    IDENTITY = "identity"
    CONSTANT = "constant"
    TIME_VARYING = "time-varying"


@dataclass(frozen=True)
class Projector:
    """Invariant projector; ``matrix`` for constant kinds, ``func`` (t -> N x N) for time-varying."""

    kind: ProjectorKind
    dimension: int = 1
    matrix: Optional[np.ndarray] = field(default=None, compare=False)
    func: Optional[Callable] = field(default=None, compare=False)
    offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ProjectorKind(self.kind))
        if self.kind is ProjectorKind.CONSTANT:
            M = np.asarray(self.matrix, dtype=float)
            if M.shape != (self.dimension, self.dimension):
                raise ParameterError(f"projector matrix must be {self.dimension}x{self.dimension}")
            if np.max(np.abs(M @ M - M)) > 1e-10:
                raise ParameterError("projector matrix is not idempotent")
            object.__setattr__(self, "matrix", M)
        if self.kind is ProjectorKind.TIME_VARYING and self.func is None:
            raise ParameterError("time-varying projector needs a callable")

    @classmethod
    def zero(cls, n: int = 1):
        return cls(ProjectorKind.ZERO, n)

    @classmethod
    def identity(cls, n: int = 1):
        return cls(ProjectorKind.IDENTITY, n)

    @classmethod
    def constant(cls, M):
        M = np.asarray(M, dtype=float)
        return cls(ProjectorKind.CONSTANT, M.shape[0], matrix=M)

    @classmethod
    def time_varying(cls, func, n):
        return cls(ProjectorKind.TIME_VARYING, n, func=func)

    def at(self, s) -> np.ndarray:
        """``P(s)``; an ``(n, N, N)`` stack for array input."""
        s = np.asarray(s, dtype=float)
        n = self.dimension
        if self.kind is ProjectorKind.ZERO:
            M = np.zeros((n, n))
        elif self.kind is ProjectorKind.IDENTITY:
            M = np.eye(n)
        elif self.kind is ProjectorKind.CONSTANT:
            M = self.matrix
        else:
            if s.ndim == 0:
                return np.asarray(self.func(float(s) + self.offset), float)
            return np.array([self.func(float(x) + self.offset) for x in s.ravel()]).reshape(s.shape + (n, n))
        return M.copy() if s.ndim == 0 else np.broadcast_to(M, s.shape + (n, n))

    def complement_at(self, s) -> np.ndarray:
        return np.eye(self.dimension) - self.at(s)

    def shifted(self, tau: float) -> "Projector":
        """``s -> P(s + tau)``."""
        if self.kind is not ProjectorKind.TIME_VARYING or tau == 0:
            return self
        return replace(self, offset=self.offset + float(tau))

    def idempotence_defect(self, ts) -> float:
        P = self.at(np.asarray(ts, float))
        return float(np.max(np.abs(P @ P - P)))

    def invariance_defect(self, system: LinearSystem, t, s, method: str = "closed") -> float:
        """Max relative ``||P(t) Phi(t,s) - Phi(t,s) P(s)||``."""
        Phi = EvolutionOperator(system, method).evaluate_pairs(t, s)
        lhs = self.at(np.atleast_1d(t)) @ Phi
        rhs = Phi @ self.at(np.atleast_1d(s))
        scale = np.maximum(np.linalg.norm(Phi, axis=(1, 2)), 1e-300)
        return float(np.max(np.linalg.norm(lhs - rhs, axis=(1, 2)) / scale))

    def to_dict(self):
        d = {"kind": self.kind.value, "dimension": self.dimension}
        if self.kind is ProjectorKind.CONSTANT:
            d["matrix"] = self.matrix.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        kind = ProjectorKind(d["kind"])
        if kind is ProjectorKind.CONSTANT:
            return cls.constant(d["matrix"])
        if kind is ProjectorKind.TIME_VARYING:
            raise ParameterError("time-varying projectors cannot be declared in a config")
        return cls(kind, int(d.get("dimension", 1)))


def _opt(x):
    return None if x is None else float(x)


@dataclass(frozen=True)
class DichotomyCertificate:
    """Parameters ``(P; K, alpha, beta, theta, nu)`` relative to ``rate``; ``K`` is stored as ``log_K``.

    Zero projectors carry no ``alpha``/``theta``, identity projectors no ``beta``/``nu``.
    """

    projector: Projector
    log_K: float
    rate: GrowthRate
    alpha: Optional[float] = None
    beta: Optional[float] = None
    theta: Optional[float] = None
    nu: Optional[float] = None

    def __post_init__(self):
        kind = self.projector.kind
        has_stable = kind is not ProjectorKind.ZERO
        has_unstable = kind is not ProjectorKind.IDENTITY
        theta = self.theta if self.theta is not None else (0.0 if has_stable else None)
        nu = self.nu if self.nu is not None else (0.0 if has_unstable else None)
        object.__setattr__(self, "theta", _opt(theta))
        object.__setattr__(self, "nu", _opt(nu))
        object.__setattr__(self, "alpha", _opt(self.alpha))
        object.__setattr__(self, "beta", _opt(self.beta))
        object.__setattr__(self, "log_K", float(self.log_K))
        if not (self.log_K >= 0 and math.isfinite(self.log_K)):
            raise ParameterError(f"K must be a finite constant >= 1, got exp({self.log_K})")
        if has_stable:
            if self.alpha is None:
                raise ParameterError("alpha is required unless the projector is zero")
            if self.theta < 0 or not self.alpha < 0 or not self.alpha + self.theta < 0:
                raise ParameterError(
                    f"need alpha < 0, theta >= 0, alpha + theta < 0; got alpha={self.alpha}, theta={self.theta}")
        elif self.alpha is not None or self.theta is not None:
            raise ParameterError("a zero projector takes no alpha/theta")
        if has_unstable:
            if self.beta is None:
                raise ParameterError("beta is required unless the projector is the identity")
            if self.nu < 0 or not self.beta > 0 or not self.beta - self.nu > 0:
                raise ParameterError(
                    f"need beta > 0, nu >= 0, beta - nu > 0; got beta={self.beta}, nu={self.nu}")
        elif self.beta is not None or self.nu is not None:
            raise ParameterError("an identity projector takes no beta/nu")

    @classmethod
    def from_K(cls, projector, K, rate, alpha=None, beta=None, theta=None, nu=None):
        if not K >= 1:
            raise ParameterError(f"K must be >= 1, got {K}")
        return cls(projector, math.log(K), rate, alpha, beta, theta, nu)

    @property
    def K(self) -> float:
        return math.exp(self.log_K)

    @property
    def uniform(self) -> bool:
        return not (self.theta or self.nu)

    def to_dict(self):
        return {"projector_kind": self.projector.kind.value, "projector": self.projector.to_dict(),
                "K": self.K if self.log_K < 700 else None, "log_K": self.log_K,
                "alpha": self.alpha, "beta": self.beta, "theta": self.theta, "nu": self.nu,
                "rate": self.rate.to_dict()}

    @classmethod
    def from_dict(cls, d):
        proj = Projector.from_dict(d.get("projector") or {"kind": d["projector_kind"]})
        log_K = d["log_K"] if d.get("log_K") is not None else math.log(d["K"])
        return cls(proj, log_K, GrowthRate.from_dict(d["rate"]), d.get("alpha"), d.get("beta"),
                   d.get("theta"), d.get("nu"))


@dataclass(frozen=True)
class GrowthCertificate:
    """``||Phi(t,s)|| <= L (mu(t)/mu(s))^{sgn(t-s) a} mu(s)^{sgn(s) eps}``; ``L`` stored as ``log_L``."""

    log_L: float
    a: float
    epsilon: float
    rate: GrowthRate

    def __post_init__(self):
        for name in ("log_L", "a", "epsilon"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.log_L >= 0 and math.isfinite(self.log_L)):
            raise ParameterError("L must be a finite constant >= 1")
        if not self.a > 0:
            raise ParameterError(f"a must be positive, got {self.a}")
        if not self.epsilon >= 0:
            raise ParameterError(f"epsilon must be non-negative, got {self.epsilon}")

    @classmethod
    def from_L(cls, L, a, epsilon, rate):
        if not L >= 1:
            raise ParameterError(f"L must be >= 1, got {L}")
        return cls(math.log(L), a, epsilon, rate)

    @property
    def L(self) -> float:
        return math.exp(self.log_L)

    def to_dict(self):
        return {"L": self.L if self.log_L < 700 else None, "log_L": self.log_L, "a": self.a,
                "epsilon": self.epsilon, "rate": self.rate.to_dict()}

    @classmethod
    def from_dict(cls, d):
        log_L = d["log_L"] if d.get("log_L") is not None else math.log(d["L"])
        return cls(log_L, d["a"], d.get("epsilon", 0.0), GrowthRate.from_dict(d["rate"]))


@dataclass
class VerificationReport:
    passed: bool
    worst_margin: float
    violating_pair: Optional[tuple] = None
    tolerance: float = CLOSED_FORM_TOL
    pairs_checked: int = 0
    branch_margins: dict = field(default_factory=dict)

    def to_dict(self):
        return {"pass": self.passed, "worst_margin": self.worst_margin,
                "violating_pair": list(self.violating_pair) if self.violating_pair else None,
                "tolerance": self.tolerance, "pairs_checked": self.pairs_checked,
                "branch_margins": self.branch_margins}


def default_grid(system: Optional[LinearSystem] = None, T: float = 40.0, seed: int = 0) -> PairGrid:
    """Dense grid for log-space systems; a coarse one inside the numeric horizon for matrices."""
    if system is not None and not system.log_space:
        return PairGrid.default(T=min(T, 0.5 * EvolutionOperator(system, "rk4").horizon), n_anchor=12,
                                n_sep=12, seed=seed)
    return PairGrid.default(T=T, n_anchor=200, n_sep=200, seed=seed)


def _operator(system, method, tol=None):
    if method is None:
        method = "closed" if getattr(system, "has_closed_form", False) else "rk4"
    if tol is None:
        tol = CLOSED_FORM_TOL if method == "closed" else NUMERIC_TOL
    return EvolutionOperator(system, method), tol


def _initial_penalty(rate, s, coeff):
    # coeff * sgn(s) log mu(s); log mu has the sign of s, so this is coeff |log mu(s)|
    if not coeff:
        return np.zeros_like(s)
    return coeff * np.abs(rate.log_eval(s))


def _branch_slack(op, cert, grid, stable: bool):
    """``lhs - (rhs - log K)`` for one branch: the log K that branch requires at each pair."""
    sub = grid.forward() if stable else grid.backward()
    if len(sub) == 0:
        raise ParameterError(f"pair grid has no {'t >= s' if stable else 't <= s'} pairs")
    rate = cert.rate
    proj = cert.projector
    Q = proj.at(sub.s) if stable else proj.complement_at(sub.s)
    if proj.kind in (ProjectorKind.IDENTITY, ProjectorKind.ZERO):
        Q = None
    lhs = op.log_norm_projected(sub.t, sub.s, Q)
    d = rate.log_eval(sub.t) - rate.log_eval(sub.s)
    if stable:
        rhs = cert.alpha * d + _initial_penalty(rate, sub.s, cert.theta)
    else:
        rhs = cert.beta * d + _initial_penalty(rate, sub.s, cert.nu)
    return lhs - rhs, sub


def _report(parts, log_K, tol):
    worst, pair, n, branches = np.inf, None, 0, {}
    for name, (slack, sub) in parts.items():
        margin = log_K - slack
        n += margin.size
        finite = np.where(np.isnan(margin), -np.inf, margin)
        i = int(np.argmin(finite))
        branches[name] = float(finite[i])
        if finite[i] < worst:
            worst, pair = float(finite[i]), (float(sub.t[i]), float(sub.s[i]))
    return VerificationReport(worst >= -tol, worst, pair if worst < -tol else None, tol, n, branches)


def verify_dichotomy(system: LinearSystem, cert: DichotomyCertificate, grid: Optional[PairGrid] = None,
                     method: Optional[str] = None, tol: Optional[float] = None) -> VerificationReport:
    """Check both dichotomy inequalities on the pair grid; margin is in log-scale.

    ``tol`` defaults to 1e-9 for closed-form evolution and 1e-5 for numeric evolution.
    """
    if cert.projector.dimension != system.dimension:
        raise ParameterError("projector and system dimensions differ")
    grid = grid if grid is not None else default_grid(system)
    op, tol = _operator(system, method, tol)
    parts = {}
    if cert.projector.kind is not ProjectorKind.ZERO:
        parts["stable"] = _branch_slack(op, cert, grid, True)
    if cert.projector.kind is not ProjectorKind.IDENTITY:
        parts["unstable"] = _branch_slack(op, cert, grid, False)
    return _report(parts, cert.log_K, tol)


def verify_growth(system: LinearSystem, cert: GrowthCertificate, grid: Optional[PairGrid] = None,
                  method: Optional[str] = None, tol: Optional[float] = None) -> VerificationReport:
    grid = grid if grid is not None else default_grid(system)
    if len(grid) == 0:
        raise ParameterError("pair grid is empty")
    op, tol = _operator(system, method, tol)
    rate = cert.rate
    lhs = op.log_norm_projected(grid.t, grid.s, None)
    d = rate.log_eval(grid.t) - rate.log_eval(grid.s)
    rhs = cert.a * np.abs(d) + _initial_penalty(rate, grid.s, cert.epsilon)
    return _report({"two-sided": (lhs - rhs, grid)}, cert.log_L, tol)


def propagate_dichotomy(cert: DichotomyCertificate, tau: float) -> DichotomyCertificate:
    """Certificate for the ``tau``-translated system under the ``tau``-translated rate.

    ``log K_tau = log K + 3 sgn(tau) max(theta, nu) log mu(tau)``; uniform certificates keep ``K``.
    """
    tau = float(tau)
    exponent = max(cert.theta or 0.0, cert.nu or 0.0)
    if exponent == 0.0:
        log_K = cert.log_K
    else:
        log_K = cert.log_K + 3.0 * np.sign(tau) * exponent * cert.rate.log_eval(tau)
    return DichotomyCertificate(cert.projector.shifted(tau), float(log_K), translate(cert.rate, tau),
                                cert.alpha, cert.beta, cert.theta, cert.nu)


def propagate_growth(cert: GrowthCertificate, tau: float) -> GrowthCertificate:
    """``log L_tau = log L + 3 sgn(tau) eps log mu(tau)``."""
    tau = float(tau)
    if cert.epsilon == 0.0:
        log_L = cert.log_L
    else:
        log_L = cert.log_L + 3.0 * np.sign(tau) * cert.epsilon * cert.rate.log_eval(tau)
    return GrowthCertificate(float(log_L), cert.a, cert.epsilon, translate(cert.rate, tau))


def transfer_certificate(cert: DichotomyCertificate, sigma: GrowthRate,
                         verdict: ComparisonVerdict) -> DichotomyCertificate:
    """Re-express a uniform ``mu``-certificate against a rate ``sigma`` that ``mu`` weakly dominates.

    ``verdict`` must be ``compare_weak(cert.rate, sigma)`` = WeaklyFaster with constant
    ``log M``. Then ``(mu(t)/mu(s))^alpha <= M^|alpha| (sigma(t)/sigma(s))^alpha`` for
    ``t >= s`` and likewise with ``beta`` for ``t <= s``, so ``K`` becomes
    ``K M^max(|alpha|, beta)``.
    """
    if not cert.uniform:
        raise ParameterError("transfer is defined for uniform certificates")
    if verdict.relation is not Relation.WEAKLY_FASTER:
        raise ParameterError(f"need the certificate rate weakly faster than sigma, got {verdict.relation.value}")
    power = max(abs(cert.alpha or 0.0), cert.beta or 0.0)
    return replace(cert, log_K=cert.log_K + power * verdict.constant_estimate, rate=sigma)


@dataclass
class KFit:
    K_estimate: float
    log_K: float
    stable: bool
    stage_log_K: list
    worst_pair: Optional[tuple] = None

    def to_dict(self):
        return {"K_estimate": self.K_estimate if self.log_K < 700 else None, "log_K": self.log_K,
                "stable": self.stable, "stage_log_K": self.stage_log_K,
                "worst_pair": list(self.worst_pair) if self.worst_pair else None}


def fit_minimal_K(system: LinearSystem, projector: Projector, rate: GrowthRate,
                  alpha: Optional[float] = None, beta: Optional[float] = None,
                  theta: Optional[float] = None, nu: Optional[float] = None,
                  grid: Optional[PairGrid] = None, stages: int = 4,
                  plateau_tol: float = PLATEAU_TOL, method: Optional[str] = None) -> KFit:
    """Smallest ``K >= 1`` making the inequalities hold on the grid, tracked under window doubling.

    Windows are ``T / 2**j`` for ``j = stages-1 .. 0``; the fit is stable when the last
    doubling moves ``log K`` by less than ``plateau_tol``.
    """
    grid = grid if grid is not None else default_grid(system)
    cert = DichotomyCertificate(projector, 0.0, rate, alpha, beta, theta, nu)
    op, _ = _operator(system, method)
    branches = []
    if projector.kind is not ProjectorKind.ZERO:
        branches.append(_branch_slack(op, cert, grid, True))
    if projector.kind is not ProjectorKind.IDENTITY:
        branches.append(_branch_slack(op, cert, grid, False))
    T = grid.window if math.isfinite(grid.window) else float(np.max(np.abs(grid.points())))
    stage_vals, worst = [], None
    for j in range(stages - 1, -1, -1):
        Tj = T / 2 ** j
        best = 0.0
        for slack, sub in branches:
            keep = (np.abs(sub.t) <= Tj) & (np.abs(sub.s) <= Tj) & ~np.isnan(slack)
            if keep.any():
                i = int(np.argmax(np.where(keep, slack, -np.inf)))
                if slack[i] > best:
                    best = float(slack[i])
                    if j == 0:
                        worst = (float(sub.t[i]), float(sub.s[i]))
        stage_vals.append(best)
    log_K = stage_vals[-1]
    stable = abs(stage_vals[-1] - stage_vals[-2]) < plateau_tol
    return KFit(math.exp(min(log_K, 700.0)), log_K, stable, stage_vals, worst)


# ---------------------------------------------------------------------------
# subbundles

class Growth(str, Enum):
    BOUNDED = "bounded"
    DIVERGING = "diverging"
    AMBIGUOUS = "ambiguous"


@dataclass
class SubbundleReport:
    stable_dim: int
    unstable_dim: int
    bounded_dim: int
    directions: list
    ambiguous: list

    def to_dict(self):
        return {"stable_dim": self.stable_dim, "unstable_dim": self.unstable_dim,
                "bounded_dim": self.bounded_dim, "directions": self.directions,
                "ambiguous": self.ambiguous}


def classify_growth(values, threshold: float = BOUNDED_LOG_THRESHOLD,
                    plateau_tol: float = PLATEAU_TOL) -> Growth:
    """Bounded/diverging call for a log-norm trajectory sampled on ``[0, T]`` (time order)."""
    v = np.asarray(values, dtype=float)
    half = v.size // 2
    run = np.maximum.accumulate(v)
    if run[-1] <= threshold and run[-1] - run[half] < plateau_tol:
        return Growth.BOUNDED
    if v[-1] > threshold and v[-1] > v[half]:
        return Growth.DIVERGING
    return Growth.AMBIGUOUS


def direction_log_norms(system: LinearSystem, ts, basis, method: Optional[str] = None) -> np.ndarray:
    """``log ||Phi(t, 0) x||`` for each column ``x`` of ``basis``; shape ``(len(ts), k)``."""
    op, _ = _operator(system, method)
    ts = np.asarray(ts, dtype=float)
    X = np.asarray(basis, dtype=float)
    if system.log_space:
        F = op.log_primitive(ts)
        with np.errstate(divide="ignore"):
            logx = np.log(np.abs(X))
        z = 2.0 * (F[:, :, None] + logx[None, :, :])
        m = np.max(z, axis=1, keepdims=True)
        return 0.5 * (m[:, 0, :] + np.log(np.sum(np.exp(z - m), axis=1)))
    Phi = op.evaluate_pairs(ts, np.zeros_like(ts))
    with np.errstate(divide="ignore"):
        return np.log(np.linalg.norm(Phi @ X, axis=1))


def subbundle_probe(system: LinearSystem, horizon: float = 50.0, basis=None, n_points: int = 400,
                    threshold: float = BOUNDED_LOG_THRESHOLD, method: Optional[str] = None) -> SubbundleReport:
    """Empirical ``dim S(0)``, ``dim U(0)``, ``dim B(0)`` from the growth of basis solutions.

    A direction counts towards ``S`` when ``||Phi(t,0)x||`` stays bounded on ``[0, T]``,
    towards ``U`` when bounded on ``[-T, 0]``, towards ``B`` when both. Directions that are
    neither clearly bounded nor clearly diverging are listed in ``ambiguous``.
    """
    if not horizon > 0:
        raise ParameterError("horizon must be positive")
    n = system.dimension
    if not system.log_space:
        horizon = min(horizon, EvolutionOperator(system, "rk4").horizon)
    X = np.eye(n) if basis is None else np.linalg.qr(np.asarray(basis, float).reshape(n, -1))[0]
    ts = np.linspace(0.0, horizon, n_points)
    fwd = direction_log_norms(system, ts, X, method)
    bwd = direction_log_norms(system, -ts, X, method)
    dirs, ambiguous = [], []
    s_dim = u_dim = b_dim = 0
    for k in range(X.shape[1]):
        gf = classify_growth(fwd[:, k], threshold)
        gb = classify_growth(bwd[:, k], threshold)
        dirs.append({"direction": X[:, k].tolist(), "forward": gf.value, "backward": gb.value})
        if Growth.AMBIGUOUS in (gf, gb):
            ambiguous.append(k)
        s_dim += gf is Growth.BOUNDED
        u_dim += gb is Growth.BOUNDED
        b_dim += gf is Growth.BOUNDED and gb is Growth.BOUNDED
    return SubbundleReport(s_dim, u_dim, b_dim, dirs, ambiguous)
