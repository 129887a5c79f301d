import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from steadytube.ode import (
    BLEW_UP, COMPLETED, LEFT_DOMAIN, integrate_ivp, integrate_linear_matrix, integrate_on_nodes,
)

from oracles import rk4_fixed

RHO_PLUS = (-1 + math.sqrt(33)) / 4


def test_exponential():
    tr = integrate_ivp(lambda x, y: y, (0.0, 1.0), 1.0, rtol=1e-10, atol=1e-12)
    assert tr.status == COMPLETED
    assert abs(tr.y_end[0] - math.e) < 1e-9


def test_backward_span_and_zero_span():
    tr = integrate_ivp(lambda x, y: y, (1.0, 0.0), math.e, rtol=1e-10, atol=1e-12)
    assert tr.nodes[-1] == 0.0 and tr.nodes[0] == 1.0
    assert tr.y_end[0] == pytest.approx(1.0, abs=1e-9)
    assert tr(0.5)[0] == pytest.approx(math.exp(0.5), abs=1e-8)
    z = integrate_ivp(lambda x, y: y, (0.3, 0.3), [2.0, 3.0])
    assert z.ok and np.array_equal(z.y_end, [2.0, 3.0])


def test_isentropic_profile_ode_approaches_rest_point():
    m, nu, b = 1.0, 0.01, 2.25

    def field(x, y):
        rho = y[0]
        return np.array([rho * rho * (b - (m * m / rho + rho * rho)) / (m * nu)])

    tr = integrate_ivp(field, (0.0, 1.0), 0.6, rtol=1e-10, atol=1e-12)
    assert tr.ok
    # nondecreasing up to the local error tolerance near the rest point
    assert np.all(np.diff(tr.values[:, 0]) > -1e-9)
    assert abs(tr.y_end[0] - RHO_PLUS) < 1e-8
    assert RHO_PLUS == pytest.approx(1.18614066, abs=1e-8)


def test_finite_time_blowup():
    tr = integrate_ivp(lambda x, y: y * y, (0.0, 1.0), 2.0)
    assert tr.status == BLEW_UP
    assert tr.x_stop == pytest.approx(0.5, abs=1e-6)


def test_domain_guard_stops():
    tr = integrate_ivp(lambda x, y: -np.ones(1), (0.0, 1.0), 0.5, domain_guard=lambda x, y: y[0] > 0)
    assert tr.status == LEFT_DOMAIN
    assert tr.x_stop <= 0.5
    assert np.all(tr.values[:, 0] > 0)


def test_dense_output_reproduces_nodes():
    tr = integrate_ivp(lambda x, y: np.array([y[1], -y[0]]), (0.0, 3.0), [0.0, 1.0], rtol=1e-9, atol=1e-12)
    vals = tr(tr.nodes)
    assert np.max(np.abs(vals - tr.values)) <= 1e-13


def test_dense_output_accuracy_between_nodes():
    tr = integrate_ivp(lambda x, y: np.array([y[1], -y[0]]), (0.0, 3.0), [0.0, 1.0], rtol=1e-10, atol=1e-12)
    xs = np.linspace(0.0, 3.0, 301)
    assert np.max(np.abs(tr(xs)[:, 0] - np.sin(xs))) < 1e-8


def test_local_error_matches_rk4_reference():
    f = lambda x, y: np.array([-2.0 * x * y[0]])
    tr = integrate_ivp(f, (0.0, 2.0), 1.0, rtol=1e-10, atol=1e-12)
    ref = rk4_fixed(f, (0.0, 2.0), [1.0], 4000)
    assert tr.y_end[0] == pytest.approx(ref[0], abs=1e-10)
    assert tr.y_end[0] == pytest.approx(math.exp(-4.0), abs=1e-10)


def test_fifth_order_on_fixed_steps():
    """Halving a frozen step sequence reduces the error by about 2^5."""
    f = lambda x, y: y
    errs = []
    for n in (10, 20, 40):
        y = integrate_on_nodes(f, np.linspace(0.0, 1.0, n + 1), np.array([1.0]))
        errs.append(abs(y[0] - math.e))
    assert errs[0] / errs[1] > 25 and errs[1] / errs[2] > 25


def test_max_step_refinement_reduces_error():
    f = lambda x, y: y
    e1 = abs(integrate_ivp(f, (0, 1), 1.0, rtol=1.0, atol=1.0, max_step=0.1).y_end[0] - math.e)
    e2 = abs(integrate_ivp(f, (0, 1), 1.0, rtol=1.0, atol=1.0, max_step=0.05).y_end[0] - math.e)
    assert e1 / e2 >= 8


def test_complex_field():
    tr = integrate_ivp(lambda x, y: 1j * y, (0.0, math.pi), np.array([1.0 + 0j]), rtol=1e-10, atol=1e-12)
    assert abs(tr.y_end[0] + 1.0) < 1e-9


@pytest.mark.parametrize("renorm", [False, True])
def test_linear_matrix_diagonal(renorm):
    M = np.diag([1.0, -1.0])
    res = integrate_linear_matrix(lambda x: M, (0.0, 1.0), np.eye(2), rtol=1e-11, atol=1e-13, renorm=renorm)
    det = np.linalg.det(res.Y_end) * np.exp(res.ledger)
    assert abs(det - 1.0) < 1e-9
    if not renorm:
        assert np.allclose(res.Y_end, np.diag([math.e, 1 / math.e]), atol=1e-9)


def test_linear_matrix_nilpotent():
    M = np.array([[0.0, 1.0], [0.0, 0.0]])
    res = integrate_linear_matrix(lambda x: M, (0.0, 1.0), np.eye(2), renorm=False)
    assert np.max(np.abs(res.Y_end - [[1.0, 1.0], [0.0, 1.0]])) < 1e-12


@pytest.mark.parametrize("length", [1.0, 3.0])
def test_ledger_exactness_with_forced_renormalization(length):
    M = np.array([[3.0, 1.0, 0.0], [0.0, -2.0, 1.0], [0.5, 0.0, 4.0]])
    Y0 = np.eye(3)[:, :2]
    exact = sla.expm(M * length) @ Y0
    renorm = integrate_linear_matrix(lambda x: M, (0.0, length), Y0, rtol=1e-11, atol=1e-13,
                                     renorm=True, norm_band=(0.5, 2.0))
    assert renorm.n_renorm >= 3
    minor = np.linalg.det(renorm.Y_end[:2]) * np.exp(renorm.ledger)
    ref = np.linalg.det(exact[:2])
    assert abs(minor - ref) <= 1e-8 * abs(ref)


def test_trace_integral():
    res = integrate_linear_matrix(lambda x: np.array([[x, 0.0], [0.0, 1.0]]), (0.0, 2.0), np.eye(2), trace=True)
    assert res.trace_integral.real == pytest.approx(2.0 + 2.0, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(0.1, 2.0))
def test_linear_scalar_growth(a, length):
    tr = integrate_ivp(lambda x, y: a * y, (0.0, length), 1.0, rtol=1e-10, atol=1e-12)
    assert tr.y_end[0] == pytest.approx(math.exp(a * length), rel=1e-8)
