import json
import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from mudichotomy import growth_rate as gr
from mudichotomy import linear_system as ls
from mudichotomy.dichotomy import DichotomyCertificate, Projector, propagate_dichotomy
from mudichotomy.grids import WindowSchedule
from mudichotomy.runner import to_jsonable
from mudichotomy.spectrum import check_structure, estimate_spectrum, merge_intervals

times = st.floats(-50, 50, allow_nan=False)
rates = st.one_of(
    st.just(gr.exponential()),
    st.just(gr.polynomial()),
    st.floats(1.05, 3.0).map(gr.superexponential),
    st.floats(0.05, 0.95).map(gr.subexponential),
)


@given(rates, times)
def test_rate_log_is_odd(rate, t):
    assert rate.log_eval(-t) == -rate.log_eval(t)


@given(rates, times, st.floats(1e-3, 10))
def test_rate_strictly_increasing(rate, t, d):
    assert rate.log_eval(t + d) > rate.log_eval(t)


@given(rates, st.floats(-10, 10), st.floats(-10, 10))
@settings(max_examples=50)
def test_translation_composes(rate, a, b):
    grid = np.linspace(-5, 5, 11)
    lhs = gr.translate(gr.translate(rate, a), b).log_eval(grid)
    rhs = gr.translate(rate, a + b).log_eval(grid)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * max(1.0, float(np.max(np.abs(rhs)))))


@given(st.floats(0, 5), st.floats(0.01, 0.4), st.floats(0, 0.3), st.floats(-20, 20))
def test_propagation_formula_exact(log_K, theta, nu, tau):
    cert = DichotomyCertificate(Projector.constant(np.diag([1.0, 0.0])), log_K, gr.exponential(),
                                alpha=-1.0, beta=1.0, theta=theta, nu=nu)
    moved = propagate_dichotomy(cert, tau)
    assert moved.log_K == log_K + 3.0 * np.sign(tau) * max(theta, nu) * tau


@given(st.floats(-3, 3), st.floats(0.1, 2), st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
@settings(max_examples=50)
def test_scalar_cocycle(lam, eta, t, u, s):
    op = ls.EvolutionOperator(ls.nue_example(lam, eta), "closed")
    lhs = op.log_norm(t, s)
    assert abs(lhs - (op.log_norm(t, u) + op.log_norm(u, s))) <= 1e-9 * max(1.0, abs(lhs))


@given(rates, st.floats(-3, 3), times, times)
@settings(max_examples=50)
def test_shift_identity(rate, gamma, t, s):
    sys = ls.t_sin_t(0.3)
    op, sh = ls.EvolutionOperator(sys, "closed"), ls.EvolutionOperator(ls.shift_system(sys, rate, gamma), "closed")
    want = op.log_norm(t, s) - gamma * (rate.log_eval(t) - rate.log_eval(s))
    assert abs(sh.log_norm(t, s) - want) <= 1e-8 * max(1.0, abs(want))


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0, 2)), min_size=1, max_size=6))
def test_merge_is_well_formed(raw):
    ivs = [(a, a + w) for a, w in raw]
    merged, unc = merge_intervals(ivs)
    check_structure(merged, len(ivs))
    assert len(unc) == len(merged)
    for a, b in ivs:
        assert any(lo <= a and b <= hi for lo, hi in merged)


@given(st.lists(st.floats(-2, 2), min_size=1, max_size=3))
@settings(max_examples=15, deadline=None)
def test_constant_diagonal_spectrum_is_the_entries(cs):
    sys = ls.diagonal([ls.constant(c) for c in cs])
    est = estimate_spectrum(sys, gr.exponential(), WindowSchedule(4.0, 10, 2.0))
    for c in cs:
        assert any(abs(a - c) <= 1e-2 and abs(b - c) <= 1e-2 for a, b in est.intervals)
    check_structure(est.intervals, len(cs))


nested = st.recursive(
    st.one_of(st.floats(allow_nan=True), st.integers(), st.booleans(), st.text(max_size=3)),
    lambda ch: st.one_of(st.lists(ch, max_size=3), st.dictionaries(st.text(max_size=3), ch, max_size=3)),
    max_leaves=10,
)


@given(nested)
def test_jsonable_is_strict_json(x):
    json.dumps(to_jsonable(x), allow_nan=False)
