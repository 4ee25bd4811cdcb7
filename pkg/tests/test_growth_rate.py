import math

import numpy as np
import pytest

from mudichotomy import growth_rate as gr
from mudichotomy.errors import DomainError, ParameterError
from mudichotomy.grids import WindowSchedule

import oracles

GRID = np.linspace(-30, 30, 121)


@pytest.mark.parametrize("rate, ref", [
    (gr.exponential(), oracles.log_exp),
    (gr.polynomial(), oracles.log_poly),
    (gr.superexponential(2.0), oracles.log_super(2.0)),
    (gr.superexponential(1.5), oracles.log_super(1.5)),
    (gr.subexponential(0.5), oracles.log_sub(0.5)),
])
def test_log_eval_matches_definition(rate, ref):
    got = rate.log_eval(GRID)
    want = np.array([ref(t) for t in GRID])
    np.testing.assert_allclose(got, want, rtol=1e-13, atol=1e-13)


def test_frozen_values():
    assert gr.exponential().log_eval(0.0) == 0.0
    assert gr.polynomial().log_eval(1.0) == pytest.approx(math.log(2), abs=1e-15)
    assert gr.superexponential(2).log_eval(-2.0) == pytest.approx(-4.0, abs=1e-15)


def test_log_eval_rejects_non_finite():
    for bad in (math.inf, -math.inf, math.nan):
        with pytest.raises(DomainError):
            gr.polynomial().log_eval(bad)


def test_invalid_exponents_rejected():
    with pytest.raises(ParameterError):
        gr.superexponential(1.0)
    with pytest.raises(ParameterError):
        gr.subexponential(1.0)


@pytest.mark.parametrize("rate", [gr.polynomial(), gr.superexponential(2), gr.subexponential(0.3)])
def test_log_derivative_matches_finite_difference(rate):
    t = np.array([-3.2, -0.7, 0.4, 2.5])
    h = 1e-6
    fd = (rate.log_eval(t + h) - rate.log_eval(t - h)) / (2 * h)
    np.testing.assert_allclose(rate.log_derivative(t), fd, rtol=1e-6)


def test_translate_values():
    p1 = gr.translate(gr.polynomial(), 1.0)
    assert p1.log_eval(1.0) == pytest.approx(math.log(1.5), abs=1e-15)
    ref = oracles.translated(oracles.log_poly, 1.0)
    np.testing.assert_allclose(p1.log_eval(GRID), [ref(t) for t in GRID], atol=1e-13)


def test_translate_composes():
    mu = gr.superexponential(2.0)
    a = gr.translate(gr.translate(mu, 1.0), 2.0).log_eval(GRID)
    b = gr.translate(mu, 3.0).log_eval(GRID)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_exponential_is_translation_invariant():
    np.testing.assert_allclose(gr.translate(gr.exponential(), 5.0).log_eval(GRID), GRID, atol=1e-14)


def test_power_rate():
    mu = gr.power(gr.polynomial(), 2.0)
    np.testing.assert_allclose(mu.log_eval(GRID), 2 * gr.polynomial().log_eval(GRID))


def test_round_trip_dict():
    for r in (gr.exponential(), gr.subexponential(0.4), gr.translate(gr.polynomial(), 2.0),
              gr.power(gr.superexponential(3), 0.5)):
        back = gr.GrowthRate.from_dict(r.to_dict())
        np.testing.assert_allclose(back.log_eval(GRID), r.log_eval(GRID))


# comparisons

def test_weak_exp_faster_than_poly():
    assert gr.compare_weak(gr.exponential(), gr.polynomial()).relation is gr.Relation.WEAKLY_FASTER


def test_weak_reflexive_constant_zero():
    v = gr.compare_weak(gr.polynomial(), gr.polynomial())
    assert v.relation is gr.Relation.WEAKLY_FASTER
    assert v.constant_estimate == 0.0


def test_weak_power():
    mu = gr.polynomial()
    assert gr.compare_weak(gr.power(mu, 2), mu).relation is gr.Relation.WEAKLY_FASTER
    assert gr.compare_weak(mu, gr.power(mu, 2)).relation in (gr.Relation.WEAKLY_SLOWER, gr.Relation.INCONCLUSIVE)


def test_weak_rejects_short_schedule():
    with pytest.raises(ParameterError):
        WindowSchedule(4.0, 2, 2.0)
    with pytest.raises(ParameterError):
        WindowSchedule(0.0, 10, 2.0)


@pytest.mark.parametrize("mu, sigma", [
    (gr.exponential(), gr.polynomial()),
    (gr.superexponential(3), gr.superexponential(2)),
])
def test_strong_faster(mu, sigma):
    assert gr.compare_strong(mu, sigma).relation is gr.Relation.FASTER
    assert gr.compare_strong(sigma, mu).relation is gr.Relation.SLOWER


def test_strong_power_is_not_faster():
    v = gr.compare_strong(gr.power(gr.exponential(), 2), gr.exponential())
    assert v.relation in (gr.Relation.INCOMPARABLE, gr.Relation.INCONCLUSIVE)


@pytest.mark.parametrize("rate, kind", [
    (gr.polynomial(), gr.RateClassKind.SLOW),
    (gr.superexponential(2), gr.RateClassKind.FAST),
    (gr.exponential(), gr.RateClassKind.EXPONENTIAL_LIKE),
])
def test_classify(rate, kind):
    assert gr.classify(rate).kind is kind


def test_classify_empty_grid():
    with pytest.raises(ParameterError):
        gr.classify(gr.polynomial(), r_grid=[])


@pytest.mark.parametrize("rate, t, kind", [
    (gr.subexponential(0.5), 1.0, gr.LimitKind.FINITE_POSITIVE),
    (gr.subexponential(0.5), -2.0, gr.LimitKind.FINITE_POSITIVE),
    (gr.superexponential(2), 1.0, gr.LimitKind.DIVERGES_TO_INFINITY),
    (gr.superexponential(2), -1.0, gr.LimitKind.DECAYS_TO_ZERO),
])
def test_translated_limits(rate, t, kind):
    assert gr.translated_limit_probe(rate, t).kind is kind


def test_translated_limit_at_zero_is_one():
    for rate in (gr.polynomial(), gr.superexponential(2), gr.exponential()):
        res = gr.translated_limit_probe(rate, 0.0)
        assert res.kind is gr.LimitKind.FINITE_POSITIVE
        assert tuple(res.bounds) == (1.0, 1.0)
