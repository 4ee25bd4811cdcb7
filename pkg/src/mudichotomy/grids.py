"""Sampling grids and the expanding-window plateau/divergence heuristic.

Every "is this supremum finite?" question in the package is answered the same
way: evaluate the quantity on a sequence of doubling windows and look at how the
last doublings change it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

PLATEAU_TOL = 1e-3
DIVERGENCE_THRESHOLD = 50.0


@dataclass(frozen=True)
class WindowSchedule:
    """Windows ``[-T_k, T_k]`` with ``T_k = base * factor**k`` for ``k < stages``."""

    base: float = 4.0
    stages: int = 34
    factor: float = 2.0

    def __post_init__(self):
        if not (np.isfinite(self.base) and self.base > 0):
            raise ParameterError(f"window base must be positive, got {self.base}")
        if self.factor <= 1:
            raise ParameterError(f"window factor must exceed 1, got {self.factor}")
        if self.stages < 3:
            raise ParameterError(f"window schedule needs >= 3 doubling stages, got {self.stages}")

    @property
    def windows(self) -> np.ndarray:
        return self.base * self.factor ** np.arange(self.stages)

    @property
    def final(self) -> float:
        return float(self.windows[-1])

    def scaled(self, scale: float) -> "WindowSchedule":
        return WindowSchedule(self.base * scale, self.stages, self.factor)

    def to_dict(self):
        return {"base": self.base, "stages": self.stages, "factor": self.factor}


def symmetric_log_grid(T: float, step: float = 0.01) -> np.ndarray:
    """Sorted grid on ``[-T, T]`` uniform in ``sgn(t) log(1 + |t|)``.

    Points are ``±expm1(k * step)``; grids built with the same ``step`` for
    different ``T`` are nested, which keeps window-doubling sups monotone.
    """
    if T <= 0:
        raise ParameterError(f"degenerate window T={T}")
    k = np.arange(int(np.floor(np.log1p(T) / step)) + 1)
    pos = np.expm1(k * step)
    pos = np.unique(np.append(pos[pos <= T], T))
    return np.concatenate([-pos[:0:-1], pos])


def running_excess(f: np.ndarray) -> np.ndarray:
    """Prefix sups ``max_{s <= t <= t_i} f(t) - f(s)`` over a sorted grid, in O(n)."""
    gains = f - np.minimum.accumulate(f)
    return np.maximum.accumulate(gains)


def window_verdict(values, plateau_tol: float = PLATEAU_TOL,
                   threshold: float = DIVERGENCE_THRESHOLD) -> str:
    """Classify a stage sequence as ``"plateau"``, ``"diverging"`` or ``"undecided"``."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        raise ParameterError("need at least 3 window stages")
    inc = np.diff(v[-3:])
    if abs(inc[-1]) < plateau_tol:
        return "plateau"
    if v[-1] > threshold and np.all(inc > 0):
        return "diverging"
    return "undecided"


@dataclass
class PairGrid:
    """Pairs ``(t, s)`` at which evolution-operator inequalities are checked."""

    t: np.ndarray
    s: np.ndarray
    window: float = field(default=np.inf)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.s = np.asarray(self.s, dtype=float)
        if self.t.shape != self.s.shape:
            raise ParameterError("pair grid arrays differ in shape")

    def __len__(self):
        return self.t.size

    @classmethod
    def default(cls, T: float = 40.0, n_anchor: int = 60, n_sep: int = 60,
                min_sep: float = 1e-3, seed: int = 0) -> "PairGrid":
        """Anchors ``s`` log-spaced and symmetric (0 included), separations log-spaced.

        Both branches (``t >= s`` and ``t <= s``) are sampled and every pair lies
        in ``[-T, T]``. A non-zero ``seed`` jitters the anchors multiplicatively.
        """
        if T <= 0:
            raise ParameterError(f"degenerate window T={T}")
        a = np.geomspace(min_sep, T, n_anchor)
        if seed:
            rng = np.random.default_rng(seed)
            a = np.clip(a * (1 + 0.05 * rng.uniform(-1, 1, a.size)), 0, T)
        anchors = np.concatenate([-a[::-1], [0.0], a])
        seps = np.concatenate([[0.0], np.geomspace(min_sep, 2 * T, n_sep)])
        S, D = np.meshgrid(anchors, seps, indexing="ij")
        t = np.concatenate([(S + D).ravel(), (S - D).ravel()])
        s = np.concatenate([S.ravel(), S.ravel()])
        keep = np.abs(t) <= T
        return cls(t[keep], s[keep], window=T)

    def restrict(self, T: float) -> "PairGrid":
        keep = (np.abs(self.t) <= T) & (np.abs(self.s) <= T)
        return PairGrid(self.t[keep], self.s[keep], window=min(T, self.window))

    def forward(self) -> "PairGrid":
        keep = self.t >= self.s
        return PairGrid(self.t[keep], self.s[keep], self.window)

    def backward(self) -> "PairGrid":
        keep = self.t <= self.s
        return PairGrid(self.t[keep], self.s[keep], self.window)

    def points(self) -> np.ndarray:
        return np.unique(np.concatenate([self.t, self.s]))


def pair_ratio_extrema(num: np.ndarray, den: np.ndarray, floor: float,
                       chunk: int = 256) -> tuple[float, float]:
    """Min and max of ``(num[j] - num[i]) / (den[j] - den[i])`` over pairs with ``den[j] - den[i] >= floor``.

    ``den`` must be increasing along the grid. Returns ``(nan, nan)`` when no pair qualifies.
    """
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    lo, hi = np.inf, -np.inf
    n = den.size
    for start in range(0, n, chunk):
        i = np.arange(start, min(start + chunk, n))
        dd = den[None, :] - den[i, None]
        ok = dd >= floor
        if not ok.any():
            continue
        dn = num[None, :] - num[i, None]
        ratio = dn[ok] / dd[ok]
        lo = min(lo, float(ratio.min()))
        hi = max(hi, float(ratio.max()))
    if lo > hi:
        return float("nan"), float("nan")
    return lo, hi
