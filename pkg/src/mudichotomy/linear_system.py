"""Linear systems ``x' = A(t) x`` and their evolution operators.

Scalar and diagonal systems are handled in log-space end to end: the evolution
operator of ``x' = a(t) x`` is ``exp(F(t) - F(s))`` with ``F`` an antiderivative
of ``a``, so only ``F`` is ever stored. General matrices are integrated directly
with a fixed-step classical Runge-Kutta scheme inside a bounded horizon.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, EvolutionOverflowError, ParameterError
from .growth_rate import GrowthRate

DEFAULT_STEP = 1e-3
MATRIX_HORIZON = 30.0
SCALAR_HORIZON = 1e4
_OVERFLOW_LOG = 690.0


def _finite(*xs):
    for x in xs:
        if not np.all(np.isfinite(np.asarray(x, dtype=float))):
            raise DomainError(f"times must be finite, got {x!r}")


# ---------------------------------------------------------------------------
# systems

class LinearSystem:
    """Common interface; concrete systems are immutable dataclasses."""

    dimension: int
    label: str
    log_space: bool = False
    periodic: bool = False
    declaration: Optional[dict] = None

    def translate(self, tau: float) -> "LinearSystem":
        raise NotImplementedError

    def shift(self, rate: GrowthRate, gamma: float) -> "LinearSystem":
        raise NotImplementedError

    def coefficient_matrix(self, t) -> np.ndarray:
        raise NotImplementedError

    def evolution(self, method: str = "closed", step: float = DEFAULT_STEP,
                  horizon: Optional[float] = None) -> "EvolutionOperator":
        return EvolutionOperator(self, method, step, horizon)

    def to_dict(self) -> dict:
        return dict(self.declaration) if self.declaration else {"label": self.label}


@dataclass(frozen=True)
class ScalarSystem(LinearSystem):
    """``x' = a(t) x``; ``antiderivative`` (any primitive of ``a``) enables closed form."""

    a: Callable
    antiderivative: Optional[Callable] = None
    label: str = "scalar"
    breakpoints: tuple = ()
    periodic: bool = False
    declaration: Optional[dict] = field(default=None, compare=False)

    dimension = 1
    log_space = True

    @property
    def has_closed_form(self) -> bool:
        return self.antiderivative is not None

    def coefficient(self, t):
        return self.a(np.asarray(t, dtype=float))

    def coefficient_matrix(self, t):
        return np.asarray(self.coefficient(t), dtype=float)[..., None, None]

    def translate(self, tau):
        tau = float(tau)
        _finite(tau)
        if tau == 0.0:
            return self
        a, F = self.a, self.antiderivative
        decl = None
        if self.declaration is not None:
            decl = {"kind": "translated", "base": self.declaration, "tau": tau}
        return ScalarSystem(
            a=lambda t: a(t + tau),
            antiderivative=None if F is None else (lambda t: F(t + tau)),
            label=f"{self.label}[t+{tau:g}]",
            breakpoints=tuple(b - tau for b in self.breakpoints),
            periodic=self.periodic,
            declaration=decl,
        )

    def shift(self, rate, gamma):
        gamma = float(gamma)
        _finite(gamma)
        if gamma == 0.0:
            return self
        a, F = self.a, self.antiderivative
        decl = None
        if self.declaration is not None:
            decl = {"kind": "shifted", "base": self.declaration, "rate": rate.to_dict(), "gamma": gamma}
        return ScalarSystem(
            a=lambda t: a(t) - gamma * rate.log_derivative(t),
            antiderivative=None if F is None else (lambda t: F(t) - gamma * rate.log_eval(t)),
            label=f"{self.label}-({gamma:g},{rate})",
            breakpoints=tuple(sorted(set(self.breakpoints) | set(rate.kinks))),
            declaration=decl,
        )

    def numeric(self) -> "ScalarSystem":
        """Same coefficient with the closed form dropped (forces numeric evolution)."""
        return replace(self, antiderivative=None, label=self.label + "~num")


@dataclass(frozen=True)
class DiagonalSystem(LinearSystem):
    components: tuple
    label: str = "diagonal"
    declaration: Optional[dict] = field(default=None, compare=False)

    log_space = True

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps or not all(isinstance(c, ScalarSystem) for c in comps):
            raise ParameterError("diagonal systems are built from scalar systems")
        object.__setattr__(self, "components", comps)

    @property
    def dimension(self):
        return len(self.components)

    @property
    def periodic(self):
        return all(c.periodic for c in self.components)

    @property
    def has_closed_form(self):
        return all(c.has_closed_form for c in self.components)

    @property
    def breakpoints(self):
        return tuple(sorted({b for c in self.components for b in c.breakpoints}))

    def coefficient_matrix(self, t):
        t = np.asarray(t, dtype=float)
        vals = np.stack([np.broadcast_to(c.coefficient(t), t.shape) for c in self.components], -1)
        out = np.zeros(t.shape + (self.dimension, self.dimension))
        idx = np.arange(self.dimension)
        out[..., idx, idx] = vals
        return out

    def translate(self, tau):
        decl = None if self.declaration is None else {"kind": "translated", "base": self.declaration, "tau": float(tau)}
        return DiagonalSystem(tuple(c.translate(tau) for c in self.components),
                              f"{self.label}[t+{float(tau):g}]", decl)

    def shift(self, rate, gamma):
        decl = None if self.declaration is None else {
            "kind": "shifted", "base": self.declaration, "rate": rate.to_dict(), "gamma": float(gamma)}
        return DiagonalSystem(tuple(c.shift(rate, gamma) for c in self.components),
                              f"{self.label}-({float(gamma):g},{rate})", decl)

    def numeric(self):
        return DiagonalSystem(tuple(c.numeric() for c in self.components), self.label + "~num")


@dataclass(frozen=True)
class MatrixSystem(LinearSystem):
    """General ``x' = A(t) x``; ``A`` maps an array of times to ``(..., N, N)``.

    ``closed_form(t, s)`` optionally supplies the exact evolution operator.
    """

    A: Callable
    dimension: int
    label: str = "matrix"
    breakpoints: tuple = ()
    closed_form: Optional[Callable] = None
    periodic: bool = False
    declaration: Optional[dict] = field(default=None, compare=False)

    @property
    def has_closed_form(self):
        return self.closed_form is not None

    def coefficient_matrix(self, t):
        return np.asarray(self.A(np.asarray(t, dtype=float)), dtype=float)

    def translate(self, tau):
        tau = float(tau)
        A, cf = self.A, self.closed_form
        decl = None if self.declaration is None else {"kind": "translated", "base": self.declaration, "tau": tau}
        return MatrixSystem(
            A=lambda t: A(np.asarray(t) + tau), dimension=self.dimension,
            label=f"{self.label}[t+{tau:g}]",
            breakpoints=tuple(b - tau for b in self.breakpoints),
            closed_form=None if cf is None else (lambda t, s: cf(t + tau, s + tau)),
            periodic=self.periodic, declaration=decl)

    def shift(self, rate, gamma):
        gamma = float(gamma)
        A, cf, n = self.A, self.closed_form, self.dimension
        decl = None if self.declaration is None else {
            "kind": "shifted", "base": self.declaration, "rate": rate.to_dict(), "gamma": gamma}

        def shifted_A(t):
            t = np.asarray(t, dtype=float)
            return A(t) - gamma * np.asarray(rate.log_derivative(t))[..., None, None] * np.eye(n)

        def shifted_cf(t, s):
            return cf(t, s) * math.exp(-gamma * (rate.log_eval(t) - rate.log_eval(s)))

        return MatrixSystem(
            A=shifted_A, dimension=n, label=f"{self.label}-({gamma:g},{rate})",
            breakpoints=tuple(sorted(set(self.breakpoints) | set(rate.kinks))),
            closed_form=None if cf is None else shifted_cf, declaration=decl)

    def numeric(self):
        return replace(self, closed_form=None, label=self.label + "~num")


def translate_system(system: LinearSystem, tau: float) -> LinearSystem:
    """System with coefficient ``t -> A(t + tau)``; ``Phi_tau(t, s) = Phi(t + tau, s + tau)``."""
    return system.translate(tau)


def shift_system(system: LinearSystem, rate: GrowthRate, gamma: float) -> LinearSystem:
    """The ``(mu, gamma)``-shifted system ``A(t) - gamma mu'(t)/mu(t) Id``."""
    return system.shift(rate, gamma)


# ---------------------------------------------------------------------------
# catalog

def _decl(name, **params):
    return {"kind": "catalog", "name": name, "parameters": params}


def constant(c: float) -> ScalarSystem:
    c = float(c)
    return ScalarSystem(lambda t: np.full_like(np.asarray(t, float), c), lambda t: c * np.asarray(t, float),
                        f"const({c:g})", periodic=True, declaration=_decl("constant", c=c))


def zero() -> ScalarSystem:
    s = constant(0.0)
    return replace(s, label="zero", declaration=_decl("zero"))


def poly_example() -> ScalarSystem:
    """``a(t) = 1/(1 + |t|)``; ``Phi(t, s) = p(t)/p(s)``."""
    return ScalarSystem(lambda t: 1.0 / (1.0 + np.abs(t)), lambda t: np.sign(t) * np.log1p(np.abs(t)),
                        "1/(1+|t|)", breakpoints=(0.0,), declaration=_decl("poly-example"))


def quadratic_example() -> ScalarSystem:
    """``a(t) = 2|t|``; ``Phi(t, s) = q(t)/q(s)``."""
    return ScalarSystem(lambda t: 2.0 * np.abs(t), lambda t: np.sign(t) * np.asarray(t, float) ** 2,
                        "2|t|", breakpoints=(0.0,), declaration=_decl("quadratic-example"))


def abs_example(scale: float = 1.0) -> ScalarSystem:
    k = float(scale)
    return ScalarSystem(lambda t: k * np.abs(t), lambda t: 0.5 * k * np.sign(t) * np.asarray(t, float) ** 2,
                        f"{k:g}|t|", breakpoints=(0.0,), declaration=_decl("abs", scale=k))


def nue_example(lam: float = 1.0, eta: float = 0.2) -> ScalarSystem:
    """``a(t) = -(lam + eta t sin t)``, nonuniform exponential dichotomy for ``0 < 3 eta < lam``."""
    lam, eta = float(lam), float(eta)

    def F(t):
        t = np.asarray(t, float)
        return -lam * t - eta * (np.sin(t) - t * np.cos(t))

    return ScalarSystem(lambda t: -(lam + eta * t * np.sin(t)), F, f"-({lam:g}+{eta:g} t sin t)",
                        declaration=_decl("nue-example", **{"lambda": lam, "eta": eta}))


def t_sin_t(scale: float = 0.2) -> ScalarSystem:
    k = float(scale)
    return ScalarSystem(lambda t: k * t * np.sin(t),
                        lambda t: k * (np.sin(t) - np.asarray(t, float) * np.cos(t)),
                        f"{k:g} t sin t", declaration=_decl("t-sin-t", scale=k))


def trig_sum(c: float = 0.0, terms: Sequence[dict] = ()) -> ScalarSystem:
    """``a(t) = c + sum_k amp_k cos(freq_k t + phase_k)``; periodic when all frequencies are commensurate with the first."""
    c = float(c)
    terms = tuple((float(d["amp"]), float(d["freq"]), float(d.get("phase", 0.0))) for d in terms)
    if any(w <= 0 for _, w, _ in terms):
        raise ParameterError("trigonometric frequencies must be positive")

    def a(t):
        t = np.asarray(t, float)
        return c + sum(A * np.cos(w * t + p) for A, w, p in terms) + 0.0 * t

    def F(t):
        t = np.asarray(t, float)
        return c * t + sum(A / w * (np.sin(w * t + p) - math.sin(p)) for A, w, p in terms)

    ws = [w for _, w, _ in terms]
    periodic = all(abs(w / ws[0] - round(w / ws[0])) < 1e-12 for w in ws) if ws else True
    return ScalarSystem(a, F, f"trig({c:g};{len(terms)})", periodic=periodic,
                        declaration=_decl("trig-sum", c=c, terms=[{"amp": A, "freq": w, "phase": p}
                                                                  for A, w, p in terms]))


def periodic(c: float = 0.0, amplitude: float = 1.0, frequency: float = 1.0) -> ScalarSystem:
    s = trig_sum(c, [{"amp": amplitude, "freq": frequency, "phase": -math.pi / 2}])
    return replace(s, label=f"{c:g}+{amplitude:g}sin({frequency:g}t)",
                   declaration=_decl("periodic", c=float(c), amplitude=float(amplitude),
                                     frequency=float(frequency)))


def diagonal(components: Sequence[ScalarSystem], label: Optional[str] = None) -> DiagonalSystem:
    comps = tuple(components)
    decl = None
    if all(c.declaration is not None for c in comps):
        decl = {"kind": "catalog", "name": "diagonal", "parameters": {"entries": [c.declaration for c in comps]}}
    return DiagonalSystem(comps, label or "diag(" + ", ".join(c.label for c in comps) + ")", decl)


def constant_matrix(M) -> MatrixSystem:
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ParameterError("constant matrix must be square")
    from scipy.linalg import expm

    return MatrixSystem(lambda t: np.broadcast_to(M, np.shape(t) + M.shape), M.shape[0],
                        "const-matrix", closed_form=lambda t, s: expm(M * (t - s)), periodic=True,
                        declaration=_decl("matrix-constant", matrix=M.tolist()))


def rotating_decay(rate: float = -1.0, omega: float = 1.0) -> MatrixSystem:
    """``A = [[r, w], [-w, r]]``: ``Phi(t, s) = e^{r(t-s)} R(w(t-s))``."""
    r, w = float(rate), float(omega)
    M = np.array([[r, w], [-w, r]])

    def cf(t, s):
        d = t - s
        c, sn = math.cos(w * d), math.sin(w * d)
        return math.exp(r * d) * np.array([[c, sn], [-sn, c]])

    return MatrixSystem(lambda t: np.broadcast_to(M, np.shape(t) + (2, 2)), 2, f"rot({r:g},{w:g})",
                        closed_form=cf, periodic=True,
                        declaration=_decl("rotating-decay", rate=r, omega=w))


def tabulated(times, values, label: str = "tabulated") -> LinearSystem:
    """Piecewise-linear coefficient through samples ``values[i]`` (``(n,)`` or ``(n, N, N)``).

    Outside the sampled range the end values are held constant. Scalar tables get the
    exact antiderivative of the interpolant.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
        raise ParameterError("tabulated times must be strictly increasing with >= 2 samples")
    if v.shape[0] != t.size:
        raise ParameterError("tabulated values do not match the time samples")
    if v.ndim == 1 or v.shape[1:] == (1, 1):
        v = v.reshape(-1)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(t))])

        def a(x):
            return np.interp(x, t, v)

        def F(x):
            x = np.asarray(x, float)
            xc = np.clip(x, t[0], t[-1])
            i = np.clip(np.searchsorted(t, xc, side="right") - 1, 0, t.size - 2)
            dx = xc - t[i]
            slope = (v[i + 1] - v[i]) / (t[i + 1] - t[i])
            inside = cum[i] + v[i] * dx + 0.5 * slope * dx ** 2
            return inside + v[0] * np.minimum(x - t[0], 0) + v[-1] * np.maximum(x - t[-1], 0)

        return ScalarSystem(a, F, label)
    n = v.shape[1]
    flat = v.reshape(t.size, -1)

    def A(x):
        x = np.asarray(x, float)
        cols = [np.interp(x, t, flat[:, j]) for j in range(flat.shape[1])]
        return np.stack(cols, -1).reshape(x.shape + (n, n))

    return MatrixSystem(A, n, label, breakpoints=())


def load_tabulated_csv(path) -> LinearSystem:
    """CSV with a header; columns ``t`` then the row-major entries of ``A(t)``."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 3:
        raise ParameterError(f"{path}: need a header and at least two samples")
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    ncols = data.shape[1] - 1
    n = int(round(math.sqrt(ncols)))
    if n * n != ncols:
        raise ParameterError(f"{path}: {ncols} matrix columns is not a square count")
    vals = data[:, 1:] if n > 1 else data[:, 1]
    sys = tabulated(data[:, 0], vals.reshape(-1, n, n) if n > 1 else vals, label=Path(path).name)
    return replace(sys, declaration=_decl("tabulated", path=str(path)))


CATALOG = {
    "constant": lambda p: constant(p.get("c", 0.0)),
    "zero": lambda p: zero(),
    "poly-example": lambda p: poly_example(),
    "quadratic-example": lambda p: quadratic_example(),
    "abs": lambda p: abs_example(p.get("scale", 1.0)),
    "nue-example": lambda p: nue_example(p.get("lambda", 1.0), p.get("eta", 0.2)),
    "t-sin-t": lambda p: t_sin_t(p.get("scale", 0.2)),
    "trig-sum": lambda p: trig_sum(p.get("c", 0.0), p.get("terms", ())),
    "periodic": lambda p: periodic(p.get("c", 0.0), p.get("amplitude", 1.0), p.get("frequency", 1.0)),
    "matrix-constant": lambda p: constant_matrix(p["matrix"]),
    "rotating-decay": lambda p: rotating_decay(p.get("rate", -1.0), p.get("omega", 1.0)),
    "tabulated": lambda p: load_tabulated_csv(p["path"]),
}


def system_from_dict(d: dict) -> LinearSystem:
    """Rebuild a system from its declaration (catalog name, translation or shift)."""
    kind = d.get("kind", "catalog")
    if kind == "translated":
        return system_from_dict(d["base"]).translate(d["tau"])
    if kind == "shifted":
        return system_from_dict(d["base"]).shift(GrowthRate.from_dict(d["rate"]), d["gamma"])
    name = d["name"]
    params = d.get("parameters", {}) or {}
    if name == "diagonal":
        return diagonal([system_from_dict(e) for e in params["entries"]])
    if name not in CATALOG:
        raise ParameterError(f"unknown catalog system {name!r}; known: {sorted(CATALOG) + ['diagonal']}")
    return CATALOG[name](params)


# ---------------------------------------------------------------------------
# evolution

def _simpson_increments(a, lo, hi, step):
    """``int_lo^hi a`` for arrays of intervals via composite Simpson (RK4 on ``y' = a(t)``)."""
    lengths = hi - lo
    n = np.maximum(1, np.ceil(np.abs(lengths) / step).astype(int))
    total = int(n.sum())
    owner = np.repeat(np.arange(lo.size), n)
    k = np.arange(total) - np.repeat(np.cumsum(n) - n, n)
    h = (lengths / n)[owner]
    left = lo[owner] + k * h
    vals = a(left) + 4.0 * a(left + 0.5 * h) + a(left + h)
    return np.bincount(owner, weights=vals * h / 6.0, minlength=lo.size)


_GL_NODES = np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_GL_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 9.0


def _gauss_increments(a, lo, hi, step):
    lengths = hi - lo
    n = np.maximum(1, np.ceil(np.abs(lengths) / step).astype(int))
    total = int(n.sum())
    owner = np.repeat(np.arange(lo.size), n)
    k = np.arange(total) - np.repeat(np.cumsum(n) - n, n)
    h = (lengths / n)[owner]
    mid = lo[owner] + (k + 0.5) * h
    vals = sum(w * a(mid + 0.5 * h * x) for x, w in zip(_GL_NODES, _GL_WEIGHTS))
    return np.bincount(owner, weights=vals * h / 2.0, minlength=lo.size)


def _scalar_primitive(sys: ScalarSystem, ts: np.ndarray, method: str, step: float) -> np.ndarray:
    """Values ``F(ts)`` of a primitive of ``a`` with ``F(0) = 0``."""
    if method == "closed":
        if sys.antiderivative is None:
            raise ParameterError(f"{sys.label}: no closed form; use method='rk4' or 'quadrature'")
        return np.asarray(sys.antiderivative(ts), float) - float(sys.antiderivative(np.array(0.0)))
    lo_t, hi_t = float(np.min(ts)), float(np.max(ts))
    nodes = np.unique(np.concatenate([ts, [0.0], [b for b in sys.breakpoints if lo_t < b < hi_t]]))
    inc = (_simpson_increments if method == "rk4" else _gauss_increments)(sys.a, nodes[:-1], nodes[1:], step)
    cum = np.concatenate([[0.0], np.cumsum(inc)])
    cum -= cum[np.searchsorted(nodes, 0.0)]
    return cum[np.searchsorted(nodes, ts)]


def _rk4_pieces(A, lo, hi, step, n_dim):
    """Propagators ``Phi(hi_k, lo_k)`` for arrays of short intervals, integrated in parallel."""
    n_sub = max(1, int(np.ceil(np.max(np.abs(hi - lo)) / step)))
    h = ((hi - lo) / n_sub)[:, None, None]
    X = np.broadcast_to(np.eye(n_dim), (lo.size, n_dim, n_dim)).copy()
    t = lo.astype(float).copy()
    hv = h[:, 0, 0]
    for _ in range(n_sub):
        k1 = A(t) @ X
        k2 = A(t + 0.5 * hv) @ (X + 0.5 * h * k1)
        k3 = A(t + 0.5 * hv) @ (X + 0.5 * h * k2)
        k4 = A(t + hv) @ (X + h * k3)
        X = X + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t + hv
    return X


class EvolutionOperator:
    """``Phi(t, s)`` for a system, by closed form, quadrature or Runge-Kutta.

    ``method`` is ``"closed"``, ``"quadrature"`` or ``"rk4"``. For scalar and diagonal
    systems every method works with the log ``F(t) - F(s)``; ``rk4`` on ``y' = a(t)``
    reduces to composite Simpson. Matrix systems integrate ``X' = A X`` and are
    restricted to ``|t - s| <= horizon``.
    """

    METHODS = ("closed", "quadrature", "rk4")

    def __init__(self, system: LinearSystem, method: str = "closed", step: float = DEFAULT_STEP,
                 horizon: Optional[float] = None, piece: float = 0.25):
        if method not in self.METHODS:
            raise ParameterError(f"unknown evolution method {method!r}")
        if step <= 0:
            raise ParameterError("integration step must be positive")
        self.system = system
        self.method = method
        self.step = float(step)
        self.piece = float(piece)
        if horizon is None:
            horizon = MATRIX_HORIZON if not system.log_space else SCALAR_HORIZON
        self.horizon = float(horizon)

    def __repr__(self):
        return f"EvolutionOperator({self.system.label}, {self.method}, step={self.step:g})"

    def _check_horizon(self, span):
        if self.method != "closed" and span > self.horizon:
            raise ParameterError(
                f"|t - s| = {span:g} exceeds the numeric horizon {self.horizon:g}; "
                "shorten the window or use a closed-form system")

    # -- log-space (scalar / diagonal) -------------------------------------
    def log_primitive(self, ts) -> np.ndarray:
        """``(n, N)`` array of ``log Phi_i(t, 0)`` for each diagonal entry."""
        sys = self.system
        if not sys.log_space:
            raise ParameterError("log_primitive is defined for scalar and diagonal systems")
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        _finite(ts)
        self._check_horizon(float(np.ptp(np.append(ts, 0.0))))
        comps = (sys,) if isinstance(sys, ScalarSystem) else sys.components
        return np.stack([_scalar_primitive(c, ts, self.method, self.step) for c in comps], -1)

    def log_diagonal(self, t, s) -> np.ndarray:
        """``log`` of the diagonal entries of ``Phi(t, s)``, broadcast over pairs."""
        t = np.atleast_1d(np.asarray(t, float))
        s = np.atleast_1d(np.asarray(s, float))
        pts, inv = np.unique(np.concatenate([t, s]), return_inverse=True)
        F = self.log_primitive(pts)
        return F[inv[: t.size]] - F[inv[t.size:]]

    # -- matrices ------------------------------------------------------------
    def _matrix_pairs(self, t: np.ndarray, s: np.ndarray) -> np.ndarray:
        sys = self.system
        n = sys.dimension
        if self.method == "closed":
            if not sys.has_closed_form:
                raise ParameterError(f"{sys.label}: no closed form; use method='rk4'")
            return np.array([sys.closed_form(float(a), float(b)) for a, b in zip(t, s)]).reshape(-1, n, n)
        self._check_horizon(float(np.max(np.abs(t - s))) if t.size else 0.0)
        nodes = np.unique(np.concatenate([t, s, [b for b in sys.breakpoints
                                                 if min(t.min(), s.min()) < b < max(t.max(), s.max())]]))
        # split consecutive nodes into short pieces integrated in parallel
        lo_list, hi_list, owner = [], [], []
        for i, (a, b) in enumerate(zip(nodes[:-1], nodes[1:])):
            m = max(1, int(np.ceil((b - a) / self.piece)))
            edges = np.linspace(a, b, m + 1)
            lo_list.append(edges[:-1])
            hi_list.append(edges[1:])
            owner.append(np.full(m, i))
        if lo_list:
            lo, hi, owner = map(np.concatenate, (lo_list, hi_list, owner))
            fwd_p = _rk4_pieces(sys.coefficient_matrix, lo, hi, self.step, n)
            bwd_p = _rk4_pieces(sys.coefficient_matrix, hi, lo, self.step, n)
            fwd = np.broadcast_to(np.eye(n), (nodes.size - 1, n, n)).copy()
            bwd = fwd.copy()
            for k in range(lo.size):
                i = owner[k]
                fwd[i] = fwd_p[k] @ fwd[i]
                bwd[i] = bwd[i] @ bwd_p[k]
        ti = np.searchsorted(nodes, t)
        si = np.searchsorted(nodes, s)
        out = np.empty((t.size, n, n))
        for j0 in np.unique(si):
            targets = np.nonzero(si == j0)[0]
            want = ti[targets]
            M = np.eye(n)
            cache = {j0: M.copy()}
            for j in range(j0, int(want.max())):
                M = fwd[j] @ M
                cache[j + 1] = M
                self._guard(M)
            M = np.eye(n)
            for j in range(j0 - 1, int(want.min()) - 1, -1):
                M = bwd[j] @ M
                cache[j] = M
                self._guard(M)
            for k, w in zip(targets, want):
                out[k] = cache[int(w)]
        return out

    @staticmethod
    def _guard(M):
        if not np.all(np.isfinite(M)) or np.max(np.abs(M)) > math.exp(_OVERFLOW_LOG):
            raise EvolutionOverflowError(
                "matrix evolution overflowed; use a scalar/diagonal (log-space) system or a shorter window")

    # -- public ----------------------------------------------------------------
    def evaluate(self, t: float, s: float) -> np.ndarray:
        """``Phi(t, s)`` as an ``N x N`` matrix."""
        _finite(t, s)
        if self.system.log_space:
            ld = self.log_diagonal(t, s)[0]
            if np.max(ld) > _OVERFLOW_LOG:
                raise EvolutionOverflowError(
                    f"Phi({t:g},{s:g}) exceeds floating point range; use log_norm")
            return np.diag(np.exp(ld))
        return self._matrix_pairs(np.array([float(t)]), np.array([float(s)]))[0]

    def evaluate_pairs(self, t, s) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, float))
        s = np.atleast_1d(np.asarray(s, float))
        _finite(t, s)
        if self.system.log_space:
            ld = self.log_diagonal(t, s)
            if np.max(ld) > _OVERFLOW_LOG:
                raise EvolutionOverflowError("evolution exceeds floating point range; use log_norm")
            n = ld.shape[1]
            out = np.zeros((t.size, n, n))
            out[:, np.arange(n), np.arange(n)] = np.exp(ld)
            return out
        return self._matrix_pairs(t, s)

    def log_norm(self, t, s):
        """``log ||Phi(t, s)||`` (spectral norm), vectorized over pairs."""
        scalar = np.ndim(t) == 0 and np.ndim(s) == 0
        out = self.log_norm_projected(t, s, None)
        return float(out[0]) if scalar else out

    def log_norm_projected(self, t, s, projector_at_s) -> np.ndarray:
        """``log ||Phi(t, s) Q||`` with ``Q`` an ``N x N`` matrix or ``(n, N, N)`` stack at the pairs' ``s``.

        ``None`` means ``Q = Id``. For log-space systems the diagonal is rescaled
        by its largest entry first, so the result never overflows.
        """
        t = np.atleast_1d(np.asarray(t, float))
        s = np.atleast_1d(np.asarray(s, float))
        if self.system.log_space:
            ld = self.log_diagonal(t, s)
            if projector_at_s is None:
                return ld.max(axis=1)
            Q = np.broadcast_to(np.asarray(projector_at_s, float), (t.size,) + (ld.shape[1],) * 2)
            if ld.shape[1] == 1:
                with np.errstate(divide="ignore"):
                    return ld[:, 0] + np.log(np.abs(Q[:, 0, 0]))
            active = np.abs(Q).sum(axis=2) > 0
            m = np.where(active, ld, -np.inf).max(axis=1)
            m_safe = np.where(np.isfinite(m), m, 0.0)
            scaled = np.exp(np.where(active, ld - m_safe[:, None], -np.inf))[:, :, None] * Q
            with np.errstate(divide="ignore"):
                return m + np.log(np.linalg.norm(scaled, ord=2, axis=(1, 2)))
        Phi = self._matrix_pairs(t, s)
        if projector_at_s is not None:
            Phi = Phi @ np.asarray(projector_at_s, float)
        with np.errstate(divide="ignore"):
            return np.log(np.linalg.norm(Phi, ord=2, axis=(1, 2)))

    def richardson_error(self, t: float, s: float) -> float:
        """Difference between step ``h`` and ``h/2`` results (absolute, log-space for scalar/diagonal)."""
        half = EvolutionOperator(self.system, self.method, self.step / 2, self.horizon, self.piece)
        if self.system.log_space:
            return float(np.max(np.abs(self.log_diagonal(t, s) - half.log_diagonal(t, s))))
        return float(np.max(np.abs(self.evaluate(t, s) - half.evaluate(t, s))))


def evolve(system: LinearSystem, t: float, s: float, method: str = "closed",
           step: float = DEFAULT_STEP) -> tuple[np.ndarray, float]:
    """``(Phi(t, s), log ||Phi(t, s)||)``."""
    op = EvolutionOperator(system, method, step)
    return op.evaluate(t, s), op.log_norm(t, s)
