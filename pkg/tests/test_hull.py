import math

import numpy as np
import pytest

from mudichotomy import growth_rate as gr
from mudichotomy import linear_system as ls
from mudichotomy.dichotomy import DichotomyCertificate, GrowthCertificate, Projector
from mudichotomy.errors import ParameterError
from mudichotomy.hull import (
    LimitVerdict,
    OrbitProbe,
    Prediction,
    bounded_solutions_probe,
    classify_limit_behavior,
    default_schedule,
    limit_system,
    pointwise_limit_probe,
    uniform_local_integrability,
    window_integral,
)

import oracles

P, Q, E = gr.polynomial(), gr.quadratic(), gr.exponential()


def _probe(system, direction=1):
    return pointwise_limit_probe(OrbitProbe(system, default_schedule(direction)))


@pytest.mark.parametrize("direction", [1, -1])
def test_poly_converges_to_zero(direction):
    rep = _probe(ls.poly_example(), direction)
    assert rep.verdict is LimitVerdict.CONVERGENT
    assert np.max(np.abs(rep.limit)) < 1e-6


def test_abs_diverges():
    assert _probe(ls.abs_example()).verdict is LimitVerdict.DIVERGES


def test_constant_converges_to_itself():
    rep = _probe(ls.constant(2.5), -1)
    assert rep.verdict is LimitVerdict.CONVERGENT
    np.testing.assert_allclose(rep.limit, 2.5)
    lim = limit_system(rep)
    assert lim.coefficient(np.array([3.0]))[0] == 2.5


def test_periodic_is_not_cauchy():
    # sin(t + 2^n) has no pointwise limit along the dyadic schedule
    assert _probe(ls.periodic(0.0, 1.0, 1.0)).verdict is LimitVerdict.NON_CAUCHY


def test_callable_orbit():
    rep = pointwise_limit_probe(OrbitProbe(lambda t: np.exp(-np.abs(t)), default_schedule(1)))
    assert rep.verdict is LimitVerdict.CONVERGENT


def test_limit_system_requires_limit():
    with pytest.raises(ParameterError):
        limit_system(_probe(ls.abs_example()))


def test_limit_csv_rows():
    rows = _probe(ls.poly_example()).limit_csv_rows()
    assert len(rows) == 401 and rows[0][0] == -10.0


# local integrability

@pytest.mark.parametrize("tau, t0", [(0.0, 1.0), (4.0, 1.0), (10.0, 2.5), (1000.0, 1.0)])
def test_window_integral_abs(tau, t0):
    got = window_integral(lambda t: np.abs(t), tau, tau + t0, breakpoints=(0.0,))
    assert got == pytest.approx(oracles.window_integral_abs(tau, t0), rel=1e-12)


def test_window_integral_across_kink():
    assert window_integral(lambda t: np.abs(t), -1.0, 2.0, breakpoints=(0.0,)) == pytest.approx(2.5, rel=1e-12)


def test_abs_not_locally_integrable():
    rep = uniform_local_integrability(ls.abs_example(), 1.0)
    assert rep.unbounded
    assert rep.window_values["4.0"] == pytest.approx(4.5, abs=1e-6)
    assert rep.trend == "linear"


def test_bounded_function_sup_below_bound():
    rep = uniform_local_integrability(ls.periodic(0.0, 0.8, 1.0), 1.0)
    assert not rep.unbounded
    assert rep.sup_estimate <= 0.8 + 1e-9


def test_t_sin_t_unbounded_linear():
    rep = uniform_local_integrability(ls.t_sin_t(0.2), 2 * math.pi,
                                      tau_grid=10 * math.pi * np.arange(-2048, 2049, 64.0))
    assert rep.unbounded
    assert rep.trend == "linear"


# bounded solutions

def test_bounded_solutions():
    assert bounded_solutions_probe(ls.zero()).all_bounded
    assert not bounded_solutions_probe(ls.constant(-1.0)).all_bounded
    assert bounded_solutions_probe(limit_system(_probe(ls.poly_example()))).all_bounded
    assert bounded_solutions_probe(ls.rotating_decay(0.0, 1.0)).all_bounded


# classification

def test_quadratic_fast_rate_empty_limits():
    cls = classify_limit_behavior(ls.quadratic_example(),
                                  dichotomy=DichotomyCertificate(Projector.zero(), 0.0, Q, beta=1.0))
    assert Prediction.EMPTY_LIMIT_SETS in cls.predictions
    assert cls.falsifications == []
    verdicts = [c["verdict"] for c in cls.cross_checks if c["check"] == "pointwise_limit_probe" and "prediction" in c]
    assert verdicts == ["DivergesPointwise", "DivergesPointwise"]


def test_poly_slow_rate_bounded_limits():
    cls = classify_limit_behavior(ls.poly_example(), growth=GrowthCertificate(0.0, 1.0, 0.0, P))
    assert {Prediction.LIMITS_BOUNDED, Prediction.NO_DICHOTOMY_ON_HULL} <= set(cls.predictions)
    assert cls.falsifications == []
    assert cls.outcome == "classified"


@pytest.mark.parametrize("c, want", [(1.0, "+inf"), (0.0, 0.0), (-1.0, "-inf")])
def test_periodic_slow_rate_zero_or_infinity(c, want):
    cls = classify_limit_behavior(ls.constant(c), query_rate=P)
    assert Prediction.ZERO_OR_INFINITY in cls.predictions
    assert cls.falsifications == []
    ivs = next(x["intervals"] for x in cls.cross_checks if "intervals" in x)
    assert ivs == [{"lo": want, "hi": want}]


def test_exponential_growth_fast_query_collapses_spectrum():
    cls = classify_limit_behavior(ls.constant(1.0), growth=GrowthCertificate(0.0, 1.0, 0.0, E), query_rate=Q)
    assert Prediction.SPECTRUM_ZERO in cls.predictions
    assert cls.falsifications == []


def test_exponential_rate_is_unclassified():
    cls = classify_limit_behavior(ls.constant(-1.0), query_rate=E)
    assert cls.outcome == "unclassified-input"
    assert cls.predictions == {}


def test_failing_certificate_rejected():
    with pytest.raises(ParameterError):
        classify_limit_behavior(ls.nue_example(),
                                dichotomy=DichotomyCertificate(Projector.identity(), 0.0, E, alpha=-0.8, theta=0.4))


def test_contradiction_is_reported():
    # a bounded schedule makes the translates converge, contradicting EmptyLimitSets
    cls = classify_limit_behavior(ls.quadratic_example(),
                                  dichotomy=DichotomyCertificate(Projector.zero(), 0.0, Q, beta=1.0),
                                  schedules=[1.0 + 2.0 ** -np.arange(1, 40)])
    assert cls.falsifications
