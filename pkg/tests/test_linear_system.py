import math

import numpy as np
import pytest

from mudichotomy import growth_rate as gr
from mudichotomy import linear_system as ls
from mudichotomy.errors import DomainError, ParameterError

import oracles

rng = np.random.default_rng(12345)

SCALARS = {
    "constant": ls.constant(0.7),
    "zero": ls.zero(),
    "poly": ls.poly_example(),
    "quadratic": ls.quadratic_example(),
    "abs": ls.abs_example(0.5),
    "nue": ls.nue_example(),
    "t-sin-t": ls.t_sin_t(),
    "trig-sum": ls.trig_sum(0.1, [{"amp": 0.5, "freq": 2.0, "phase": 0.3}, {"amp": 0.2, "freq": 3.0}]),
    "periodic": ls.periodic(-0.2, 1.0, 1.5),
}
MATRICES = {
    "rotating-decay": ls.rotating_decay(-0.3, 2.0),
    "matrix-constant": ls.constant_matrix([[0.0, 1.0], [-2.0, -0.5]]),
}
ALL = {**SCALARS, "diag": ls.diagonal([ls.poly_example(), ls.nue_example()]), **MATRICES}


def _phi(system, t, s, method="closed"):
    return ls.EvolutionOperator(system, method).evaluate(t, s)


def test_poly_phi_value():
    assert _phi(ls.poly_example(), 1.0, 0.0)[0, 0] == pytest.approx(2.0, rel=1e-15)


def test_quadratic_log_phi_value():
    op = ls.EvolutionOperator(ls.abs_example(2.0), "closed")
    assert op.log_norm(3.0, 1.0) == pytest.approx(8.0, abs=1e-12)
    assert oracles.log_phi_quad(oracles.a_quadratic, 3.0, 1.0) == pytest.approx(8.0, abs=1e-10)


def test_translated_poly_value():
    sys2 = ls.translate_system(ls.poly_example(), 2.0)
    assert _phi(sys2, 1.0, 0.0)[0, 0] == pytest.approx(4.0 / 3.0, rel=1e-14)


@pytest.mark.parametrize("name", sorted(ALL))
def test_phi_at_equal_times_is_identity(name):
    sys = ALL[name]
    for s in (-3.0, 0.0, 2.5):
        np.testing.assert_allclose(_phi(sys, s, s), np.eye(sys.dimension), atol=1e-14)


@pytest.mark.parametrize("name, a", [("poly", oracles.a_poly), ("quadratic", oracles.a_quadratic),
                                     ("nue", oracles.a_nue())])
def test_closed_form_against_quadrature(name, a):
    op = ls.EvolutionOperator(SCALARS[name], "closed")
    for _ in range(20):
        t, s = rng.uniform(-15, 15, 2)
        assert op.log_norm(t, s) == pytest.approx(oracles.log_phi_quad(a, t, s), abs=1e-8)


@pytest.mark.parametrize("name", sorted(ALL))
def test_cocycle(name):
    sys = ALL[name]
    lim = 8.0 if name in MATRICES else 20.0
    op = ls.EvolutionOperator(sys, "closed")
    for _ in range(50):
        t, u, s = rng.uniform(-lim, lim, 3)
        if sys.log_space:
            # products of e^{+-400} under- or overflow; compare in log-space
            lhs = op.log_diagonal(t, s)
            rhs = op.log_diagonal(t, u) + op.log_diagonal(u, s)
            assert np.max(np.abs(lhs - rhs)) <= 1e-6
            continue
        lhs = _phi(sys, t, s)
        rhs = _phi(sys, t, u) @ _phi(sys, u, s)
        assert np.linalg.norm(lhs - rhs) <= 1e-6 * np.linalg.norm(lhs)


@pytest.mark.parametrize("name", sorted(ALL))
def test_translation_identity(name):
    sys = ALL[name]
    lim = 8.0 if name in MATRICES else 20.0
    for _ in range(50):
        t, s, tau = rng.uniform(-lim, lim, 3)
        moved = ls.translate_system(sys, tau)
        if sys.log_space:
            lhs = ls.EvolutionOperator(moved, "closed").log_diagonal(t, s)
            rhs = ls.EvolutionOperator(sys, "closed").log_diagonal(t + tau, s + tau)
            assert np.max(np.abs(lhs - rhs)) <= 1e-8
            continue
        lhs, rhs = _phi(moved, t, s), _phi(sys, t + tau, s + tau)
        assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(rhs)


def test_translation_identity_numeric():
    sys = ls.rotating_decay(-0.3, 2.0)
    for _ in range(10):
        t, s, tau = rng.uniform(-5, 5, 3)
        lhs = _phi(ls.translate_system(sys, tau).numeric(), t, s, "rk4")
        rhs = _phi(sys, t + tau, s + tau)
        assert np.linalg.norm(lhs - rhs) <= 1e-5 * np.linalg.norm(rhs)


def test_translate_zero_is_identity():
    sys = ls.nue_example()
    ts = np.linspace(-10, 10, 41)
    np.testing.assert_array_equal(ls.translate_system(sys, 0.0).coefficient(ts), sys.coefficient(ts))


@pytest.mark.parametrize("name", sorted(ALL))
def test_rk4_matches_closed_form(name):
    sys = ALL[name]
    num = ls.EvolutionOperator(sys, "rk4")
    ref = ls.EvolutionOperator(sys, "closed")
    for _ in range(15):
        s = rng.uniform(-20, 20)
        t = s + rng.uniform(-20, 20)
        if sys.log_space:
            # relative error of Phi equals the absolute error of log Phi to first order
            assert np.max(np.abs(num.log_diagonal(t, s) - ref.log_diagonal(t, s))) <= 1e-6
        else:
            A, B = num.evaluate(t, s), ref.evaluate(t, s)
            assert np.linalg.norm(A - B) <= 1e-6 * np.linalg.norm(B)


def test_quadrature_matches_closed_form():
    sys = ls.nue_example()
    q, c = ls.EvolutionOperator(sys, "quadrature"), ls.EvolutionOperator(sys, "closed")
    for t, s in [(7.0, -3.0), (-12.0, 4.0), (19.0, 18.5)]:
        assert q.log_norm(t, s) == pytest.approx(c.log_norm(t, s), abs=1e-8)


def test_shift_zero_gamma_is_unchanged():
    sys = ls.poly_example()
    sh = ls.shift_system(sys, gr.polynomial(), 0.0)
    ts = np.linspace(-5, 5, 21)
    np.testing.assert_allclose(sh.coefficient(ts), sys.coefficient(ts))


def test_shifted_poly_coefficient_vanishes_for_positive_t():
    sh = ls.shift_system(ls.poly_example(), gr.polynomial(), 1.0)
    ts = np.linspace(0.01, 50, 200)
    np.testing.assert_allclose(sh.coefficient(ts), 0.0, atol=1e-15)


@pytest.mark.parametrize("name", sorted(ALL))
def test_shift_identity(name):
    sys = ALL[name]
    mu, gamma = gr.superexponential(1.5), 0.7
    sh = ls.shift_system(sys, mu, gamma)
    op, op_sh = ls.EvolutionOperator(sys, "closed"), ls.EvolutionOperator(sh, "closed")
    lim = 5.0 if name in MATRICES else 15.0
    for _ in range(20):
        t, s = rng.uniform(-lim, lim, 2)
        dl = float(mu.log_eval(t) - mu.log_eval(s))
        assert op_sh.log_norm(t, s) == pytest.approx(op.log_norm(t, s) - gamma * dl, abs=1e-8)


def test_shift_identity_numeric_route():
    # the shifted coefficient integrated numerically against the closed-form identity
    sys = ls.nue_example()
    mu, gamma = gr.polynomial(), -0.4
    sh = ls.shift_system(sys, mu, gamma).numeric()
    num = ls.EvolutionOperator(sh, "rk4")
    for t, s in [(3.0, -2.0), (-7.5, 1.0), (12.0, 11.0)]:
        want = oracles.log_phi_quad(oracles.a_nue(), t, s) - gamma * (oracles.log_poly(t) - oracles.log_poly(s))
        assert num.log_norm(t, s) == pytest.approx(want, abs=1e-7)


def test_matrix_horizon_enforced():
    op = ls.EvolutionOperator(MATRICES["rotating-decay"], "rk4")
    with pytest.raises(ParameterError):
        op.evaluate(40.0, 0.0)


def test_non_finite_time_rejected():
    with pytest.raises(DomainError):
        ls.EvolutionOperator(ls.poly_example(), "closed").evaluate(math.inf, 0.0)


def test_unknown_method_rejected():
    with pytest.raises(ParameterError):
        ls.EvolutionOperator(ls.poly_example(), "euler")


def test_tabulated_scalar_exact_antiderivative():
    ts = np.linspace(-2, 3, 11)
    sys = ls.tabulated(ts, 2 * np.abs(ts))
    op = ls.EvolutionOperator(sys, "closed")
    assert op.log_norm(3.0, 1.0) == pytest.approx(8.0, abs=1e-12)


def test_tabulated_csv(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("t,a11,a12,a21,a22\n0,-1,0,0,-2\n10,-1,0,0,-2\n")
    sys = ls.load_tabulated_csv(p)
    Phi = ls.EvolutionOperator(sys, "rk4").evaluate(2.0, 0.0)
    np.testing.assert_allclose(Phi, np.diag([math.exp(-2), math.exp(-4)]), rtol=1e-8)


def test_declaration_round_trip():
    for sys in (ls.nue_example(0.9, 0.1), ls.diagonal([ls.constant(-1), ls.constant(2)]),
                ls.translate_system(ls.poly_example(), 1.5),
                ls.shift_system(ls.quadratic_example(), gr.quadratic(), 0.5)):
        back = ls.system_from_dict(sys.to_dict())
        for t, s in [(1.0, -2.0), (4.0, 3.0)]:
            np.testing.assert_allclose(_phi(back, t, s), _phi(sys, t, s), rtol=1e-14)
