"""Independent reference computations used as test oracles.

Nothing here imports the package: rates and evolution operators are rebuilt from
their defining formulas with ``math``/``scipy.integrate.quad`` so a shared bug
cannot make both sides agree.
"""
import math

from scipy.integrate import quad


def sgn(x):
    return int(x > 0) - int(x < 0)


# log mu(t) straight from the definitions
def log_exp(t):
    return t


def log_poly(t):
    return sgn(t) * math.log(abs(t) + 1)


def log_super(r):
    return lambda t: sgn(t) * abs(t) ** r


def log_sub(r):
    return lambda t: sgn(t) * ((abs(t) + 1) ** r - 1)


def translated(log_mu, tau):
    return lambda t: log_mu(t + tau) - log_mu(tau)


# scalar coefficients of the catalog examples
def a_poly(t):
    return 1 / (1 + abs(t))


def a_quadratic(t):
    return 2 * abs(t)


def a_nue(lam=1.0, eta=0.2):
    return lambda t: -(lam + eta * t * math.sin(t))


def log_phi_quad(a, t, s, points=None):
    """``log Phi(t, s) = int_s^t a`` by adaptive quadrature, split at 0."""
    lo, hi = min(t, s), max(t, s)
    pts = [p for p in (points or [0.0]) if lo < p < hi]
    val, _ = quad(a, lo, hi, points=pts or None, limit=400, epsabs=1e-12, epsrel=1e-12)
    return val if t >= s else -val


def log_phi_poly(t, s):
    """Closed form ``(1+|t|)^{sgn t} / (1+|s|)^{sgn s}`` in log."""
    return log_poly(t) - log_poly(s)


def log_phi_quadratic(t, s):
    return t * abs(t) - s * abs(s)


def dichotomy_margin_scalar(log_phi, log_mu, log_K, stable, alpha=None, beta=None, theta=0.0, nu=0.0,
                            points=()):
    """Brute-force log margin of a scalar certificate on explicit ``(t, s)`` pairs.

    Stable branch (P = 1): ``log K + alpha dlog mu + theta sgn(s) log mu(s) - log Phi`` for t >= s.
    Unstable branch (P = 0): ``log K - beta (log mu(s) - log mu(t)) + nu sgn(s) log mu(s) - log Phi`` for t <= s.
    """
    worst = math.inf
    for t, s in points:
        if stable and t >= s:
            m = log_K + alpha * (log_mu(t) - log_mu(s)) + theta * abs(log_mu(s)) - log_phi(t, s)
        elif not stable and t <= s:
            m = log_K - beta * (log_mu(s) - log_mu(t)) + nu * abs(log_mu(s)) - log_phi(t, s)
        else:
            continue
        worst = min(worst, m)
    return worst


def window_integral_abs(tau, t0):
    """``int_tau^{tau+t0} |u| du`` for ``tau >= 0``."""
    return ((tau + t0) ** 2 - tau ** 2) / 2
