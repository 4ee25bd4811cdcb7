"""Fixed reproduction battery for the worked examples, with mutation hooks.

Each check returns a dict ``{name, passed, expected, observed}``. A mutation
corrupts exactly one input constant so that exactly one named check must fail.
"""
from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from . import growth_rate as gr
from . import linear_system as ls
from .dichotomy import (
    DichotomyCertificate,
    GrowthCertificate,
    Projector,
    propagate_dichotomy,
    verify_dichotomy,
    verify_growth,
)
from .errors import MudichotomyError
from .hull import (
    LimitVerdict,
    OrbitProbe,
    Prediction,
    bounded_solutions_probe,
    classify_limit_behavior,
    default_schedule,
    limit_system,
    pointwise_limit_probe,
    uniform_local_integrability,
)
from .spectrum import estimate_spectrum, resolvent_test

MUTATIONS = {
    "halved-K": "nue-dichotomy-verify",
    "flipped-alpha": "diag-exp-dichotomy-verify",
    "wrong-exponent": "nue-propagation",
}

NUE_LAMBDA, NUE_ETA = 1.0, 0.2
SPECTRUM_TOL = 1e-2


def _check(name, fn: Callable[[], tuple]) -> dict:
    try:
        passed, expected, observed = fn()
    except MudichotomyError as exc:
        return {"name": name, "passed": False, "expected": None, "observed": f"error: {exc}"}
    return {"name": name, "passed": bool(passed), "expected": expected, "observed": observed}


def _intervals_match(est, target, tol=SPECTRUM_TOL):
    if len(est.intervals) != len(target):
        return False
    for (a, b), (x, y) in zip(est.intervals, target):
        for u, v in ((a, x), (b, y)):
            if math.isinf(v):
                if u != v:
                    return False
            elif not (math.isfinite(u) and abs(u - v) <= tol):
                return False
    return True


def _fmt(intervals):
    def f(x):
        return "+inf" if x == math.inf else "-inf" if x == -math.inf else round(float(x), 6)
    return [[f(a), f(b)] for a, b in intervals]


def nue_certificate(mutation: Optional[str] = None) -> DichotomyCertificate:
    """``(Id; e^{2 eta}, -lambda + eta, *, 2 eta, *)`` for ``a(t) = -(lambda + eta t sin t)``."""
    log_K = 2 * NUE_ETA
    if mutation == "halved-K":
        log_K -= math.log(2.0)
    return DichotomyCertificate(Projector.identity(), log_K, gr.exponential(),
                                alpha=-NUE_LAMBDA + NUE_ETA, theta=2 * NUE_ETA)


def run_suite(mutation: Optional[str] = None) -> list:
    if mutation not in (None, "none", *MUTATIONS):
        raise ValueError(f"unknown mutation {mutation!r}")
    P, Q, E = gr.polynomial(), gr.quadratic(), gr.exponential()
    poly, quad, nue = ls.poly_example(), ls.quadratic_example(), ls.nue_example(NUE_LAMBDA, NUE_ETA)
    zero_beta1 = {"projector": Projector.zero(), "log_K": 0.0, "beta": 1.0}
    checks = []

    def verify(system, cert):
        rep = verify_dichotomy(system, cert)
        return rep.passed, "pass", {"pass": rep.passed, "worst_margin": rep.worst_margin}

    checks.append(_check("poly-dichotomy-verify", lambda: verify(
        poly, DichotomyCertificate(rate=P, **zero_beta1))))
    checks.append(_check("quadratic-dichotomy-verify", lambda: verify(
        quad, DichotomyCertificate(rate=Q, **zero_beta1))))
    checks.append(_check("nue-dichotomy-verify", lambda: verify(nue, nue_certificate(mutation))))

    def nue_k1_rejected():
        rep = verify_dichotomy(nue, DichotomyCertificate(Projector.identity(), 0.0, E, alpha=-0.8, theta=0.4))
        return (not rep.passed) and rep.worst_margin < 0, "fail with negative margin", rep.worst_margin

    checks.append(_check("nue-K1-rejected", nue_k1_rejected))

    def diag_exp():
        alpha = 1.0 if mutation == "flipped-alpha" else -1.0
        cert = DichotomyCertificate(Projector.constant(np.diag([1.0, 0.0])), 0.0, E, alpha=alpha, beta=2.0)
        return verify(ls.diagonal([ls.constant(-1.0), ls.constant(2.0)]), cert)

    checks.append(_check("diag-exp-dichotomy-verify", diag_exp))

    def growth(system, cert):
        rep = verify_growth(system, cert)
        return rep.passed, "pass", rep.worst_margin

    checks.append(_check("poly-growth-verify", lambda: growth(poly, GrowthCertificate(0.0, 1.0, 0.0, P))))
    checks.append(_check("quadratic-growth-verify", lambda: growth(quad, GrowthCertificate(0.0, 1.0, 0.0, Q))))

    def nue_propagation():
        base = nue_certificate()
        observed, ok = {}, True
        for tau in (-3.0, 0.0, 3.0):
            cert = propagate_dichotomy(base, tau)
            if mutation == "wrong-exponent":
                log_K = base.log_K + 2.0 * np.sign(tau) * base.theta * E.log_eval(tau)
                cert = DichotomyCertificate(cert.projector, float(log_K), cert.rate, cert.alpha, theta=cert.theta)
            expected = 6 * abs(tau) * NUE_ETA + 2 * NUE_ETA
            rep = verify_dichotomy(ls.translate_system(nue, tau), cert)
            ok = ok and abs(cert.log_K - expected) < 1e-12 and rep.passed
            observed[str(tau)] = {"log_K": cert.log_K, "expected_log_K": expected, "margin": rep.worst_margin}
        return ok, "log K_tau = 6|tau| eta + 2 eta and translated verification passes", observed

    checks.append(_check("nue-propagation", nue_propagation))

    def uniform_propagation(system, rate):
        base = DichotomyCertificate(rate=rate, **zero_beta1)
        ok, observed = True, {}
        for tau in (-3.0, 0.0, 3.0):
            cert = propagate_dichotomy(base, tau)
            rep = verify_dichotomy(ls.translate_system(system, tau), cert)
            ok = ok and cert.log_K == base.log_K and rep.passed
            observed[str(tau)] = {"log_K": cert.log_K, "margin": rep.worst_margin}
        return ok, "K_tau = K and translated verification passes", observed

    checks.append(_check("poly-propagation-uniform", lambda: uniform_propagation(poly, P)))
    checks.append(_check("quadratic-propagation-uniform", lambda: uniform_propagation(quad, Q)))

    def spectrum(system, rate, target):
        est = estimate_spectrum(system, rate)
        return _intervals_match(est, target), _fmt(target), _fmt(est.intervals)

    inf = math.inf
    checks.append(_check("spectrum-diag-exp", lambda: spectrum(
        ls.diagonal([ls.constant(-1.0), ls.constant(2.0)]), E, [(-1, -1), (2, 2)])))
    checks.append(_check("spectrum-poly", lambda: spectrum(poly, P, [(1, 1)])))
    checks.append(_check("spectrum-quadratic", lambda: spectrum(quad, Q, [(1, 1)])))
    checks.append(_check("spectrum-const1-quadratic", lambda: spectrum(ls.constant(1.0), Q, [(0, 0)])))
    checks.append(_check("spectrum-const1-poly", lambda: spectrum(ls.constant(1.0), P, [(inf, inf)])))
    checks.append(_check("spectrum-const-1-poly", lambda: spectrum(ls.constant(-1.0), P, [(-inf, -inf)])))

    def resolvent(system, rate, gamma, expected):
        res = resolvent_test(system, rate, gamma)
        return res.in_resolvent == expected, expected, res.in_resolvent

    checks.append(_check("resolvent-const-1-exp", lambda: resolvent(ls.constant(-1.0), E, 0.0, True)))
    checks.append(_check("resolvent-poly-gamma1", lambda: resolvent(poly, P, 1.0, False)))

    def hull_quadratic():
        cls = classify_limit_behavior(quad, dichotomy=DichotomyCertificate(rate=Q, **zero_beta1))
        verdicts = [pointwise_limit_probe(OrbitProbe(quad, default_schedule(d))).verdict for d in (1, -1)]
        ok = (Prediction.EMPTY_LIMIT_SETS in cls.predictions and not cls.falsifications
              and all(v is LimitVerdict.DIVERGES for v in verdicts))
        return ok, "EmptyLimitSets, DivergesPointwise both ways", {
            "predictions": [p.value for p in cls.predictions], "probes": [v.value for v in verdicts],
            "falsifications": len(cls.falsifications)}

    checks.append(_check("hull-quadratic-empty-limits", hull_quadratic))

    def hull_poly():
        cls = classify_limit_behavior(poly, growth=GrowthCertificate(0.0, 1.0, 0.0, P))
        reps = [pointwise_limit_probe(OrbitProbe(poly, default_schedule(d))) for d in (1, -1)]
        conv = all(r.verdict is LimitVerdict.CONVERGENT and np.max(np.abs(r.limit)) < 1e-6 for r in reps)
        bounded = all(bounded_solutions_probe(limit_system(r)).all_bounded for r in reps) if conv else False
        ok = (conv and bounded and not cls.falsifications
              and {Prediction.LIMITS_BOUNDED, Prediction.NO_DICHOTOMY_ON_HULL} <= set(cls.predictions))
        return ok, "ConvergentTo(0), bounded limit solutions, NoDichotomyOnHull", {
            "predictions": [p.value for p in cls.predictions], "probes": [r.verdict.value for r in reps],
            "limit_bounded": bounded, "falsifications": len(cls.falsifications)}

    checks.append(_check("hull-poly-bounded-limits", hull_poly))

    def hull_abs():
        rep = uniform_local_integrability(ls.abs_example(), 1.0)
        v = rep.window_values["4.0"]
        return rep.unbounded and abs(v - 4.5) <= 1e-6, {"window(4,1)": 4.5, "sup": "Unbounded"}, {
            "window(4,1)": v, "unbounded": rep.unbounded, "trend": rep.trend}

    checks.append(_check("hull-abs-integrability", hull_abs))

    def hull_periodic():
        observed, ok = {}, True
        for c in (1.0, 0.0, -1.0):
            cls = classify_limit_behavior(ls.constant(c), query_rate=P)
            ok = ok and Prediction.ZERO_OR_INFINITY in cls.predictions and not cls.falsifications
            observed[str(c)] = [x.get("intervals") for x in cls.cross_checks if "intervals" in x]
        return ok, "spectra in {0}, {+inf}, {-inf}", observed

    checks.append(_check("hull-periodic-slow-rate", hull_periodic))

    def rate_chain():
        chain = [P, gr.subexponential(0.3), gr.subexponential(0.7), E,
                 gr.superexponential(1.5), gr.superexponential(2.5)]
        rels = [gr.compare_strong(b, a).relation.value for a, b in zip(chain, chain[1:])]
        return all(r == "Faster" for r in rels), ["Faster"] * 5, rels

    checks.append(_check("rate-order-chain", rate_chain))

    def rate_classes():
        got = [gr.classify(r).kind.value for r in (P, gr.superexponential(2.0), E)]
        want = ["Slow", "Fast", "ExponentialLike"]
        return got == want, want, got

    checks.append(_check("rate-classify", rate_classes))

    def translated_limits():
        u, s2 = gr.subexponential(0.5), gr.superexponential(2.0)
        got = {"u0.5@-2": gr.translated_limit_probe(u, -2.0).kind.value,
               "u0.5@1": gr.translated_limit_probe(u, 1.0).kind.value,
               "s2@1": gr.translated_limit_probe(s2, 1.0).kind.value,
               "s2@-1": gr.translated_limit_probe(s2, -1.0).kind.value,
               "s2@0": list(gr.translated_limit_probe(s2, 0.0).bounds)}
        want = {"u0.5@-2": "FinitePositive", "u0.5@1": "FinitePositive", "s2@1": "DivergesToInfinity",
                "s2@-1": "DecaysToZero", "s2@0": [1.0, 1.0]}
        return got == want, want, got

    checks.append(_check("translated-rate-limits", translated_limits))
    return checks
