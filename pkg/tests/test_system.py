import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from steadytube.errors import DomainError, ParameterError
from steadytube.system import (
    FAIL, NOT_APPLICABLE, PASS, builtin, check_assumptions, evaluate_blocks, fd_jacobian,
    full_gas, isentropic_ns, linear_system, rotation_example, symmetrized_tilde_a,
    system_from_config, tilde_a,
)

from oracles import isentropic_jacobians


def test_isentropic_blocks_match_hand_jacobian():
    sys = isentropic_ns(gamma=2.0, a=1.0, nu=0.01)
    bl = evaluate_blocks(sys, [1.0, 1.0])
    A0, A = isentropic_jacobians(1.0, 1.0)
    assert np.allclose(bl.a0, A0, atol=1e-8)
    assert np.allclose(bl.a, A, atol=1e-8)
    # a11 is the advection coefficient u of the mass equation
    assert bl.a11[0, 0] == pytest.approx(1.0)
    assert bl.b22[0, 0] == pytest.approx(0.01)


def test_linear_blocks_are_constant():
    A = np.array([[1.0, 2.0, 0.0], [0.5, 3.0, 1.0], [0.0, -1.0, 2.0]])
    sys = linear_system(A, np.eye(2), 1)
    for u in ([0, 0, 0], [5.0, -3.0, 1e3]):
        bl = evaluate_blocks(sys, u)
        assert np.array_equal(bl.a, A)
        assert np.array_equal(bl.a12, A[:1, 1:])


def test_domain_violation_rejected():
    sys = isentropic_ns()
    with pytest.raises(DomainError):
        evaluate_blocks(sys, [-0.1, 1.0])
    with pytest.raises(DomainError):
        evaluate_blocks(sys, [0.0, 1.0])


def test_rotation_speccond_fails_with_witness():
    rep = check_assumptions(rotation_example(), [np.zeros(2)])
    sc = rep["speccond"]
    assert sc.verdict == FAIL
    re, im = sc.witness["eigenvalue"]
    assert abs(complex(re, im) - 2j * math.pi) < 1e-8 or abs(complex(re, im) + 2j * math.pi) < 1e-8
    assert abs(sc.witness["k"]) == 1


def test_scalar_heat_all_pass():
    rep = check_assumptions(linear_system([[1.0]], [[1.0]], 0), [np.zeros(1)])
    assert rep["H1"].verdict == PASS
    assert rep["speccond"].verdict == PASS
    assert rep["H2"].verdict == NOT_APPLICABLE
    assert rep.ok


def test_isentropic_checks_and_real_reduced_matrix():
    sys = isentropic_ns()
    u = np.array([1.0, 0.5])
    rep = check_assumptions(sys, [u])
    for key in ("H1", "H2", "H3", "speccond"):
        assert rep[key].verdict == PASS, key
    at = tilde_a(evaluate_blocks(sys, u))
    assert np.all(np.abs(np.linalg.eigvals(at).imag) < 1e-12)
    # direct formula: (A22 - A21 A12 / A11) / nu with A at (1, 0.5)
    A0, A = isentropic_jacobians(1.0, 0.5)
    expect = (A[1, 1] - A[1, 0] * A[0, 1] / A[0, 0]) / 1.0
    assert at[0, 0] == pytest.approx(expect, rel=1e-12)


def test_h2_failure_carries_witness():
    sys = linear_system([[-1.0, 1.0], [-1.0, 1.0]], [[1.0]], 1)
    rep = check_assumptions(sys, [np.zeros(2)])
    assert rep["H2"].verdict == FAIL
    assert rep["H2"].witness is not None
    assert not rep.ok


def test_every_failure_has_a_witness():
    for sys, u in [(rotation_example(), np.zeros(2)),
                   (linear_system([[-1.0, 1.0], [-1.0, 1.0]], [[1.0]], 1), np.zeros(2)),
                   (linear_system([[1.0]], [[-1.0]], 0), np.zeros(1))]:
        for name, res in check_assumptions(sys, [u]).checks.items():
            if res.verdict == FAIL:
                assert res.witness, name


def test_builtin_dispatch_and_validation():
    lin = builtin("linear", A=np.eye(2), B22=[[1.0]], r=1)
    assert (lin.n, lin.r) == (2, 1)
    with pytest.raises(ParameterError):
        builtin("mhd")
    with pytest.raises(ParameterError):
        builtin("isentropic_ns", gamma=1.0)
    with pytest.raises(ParameterError):
        builtin("isentropic_ns", nu=-1.0)
    with pytest.raises(ParameterError):
        builtin("full_gas", alpha=0.0)
    with pytest.raises(ParameterError):
        system_from_config({"system": "isentropic_ns", "gamma": 2.0, "viscosity": 1.0})
    sys = system_from_config({"system": "isentropic_ns", "gamma": 2.0, "a": 1.0, "nu": 0.01})
    assert sys.params["nu"] == 0.01


def test_full_gas_reduced_equations():
    """Parabolic fluxes agree with momentum and energy fluxes written out by hand at m = 1."""
    G, alpha, nu = 0.4, 1.0, 1.0
    sys = full_gas(Gamma=G, alpha=alpha, nu=nu)
    U0 = np.array([1.0, 1.0, 1.0])
    U = np.array([1.0 / 1.3, 1.3, 0.8])
    rhs = sys.f_II(U) - sys.f_II(U0)
    # independent momentum and total energy fluxes with m = 1
    m = 1.0
    mom = lambda u, e: m * u + G * m * e / u
    ener = lambda u, e: m * (e + 0.5 * u * u) + G * m * e
    assert rhs[0] == pytest.approx(mom(1.3, 0.8) - mom(1.0, 1.0), abs=1e-12)
    assert rhs[1] == pytest.approx(ener(1.3, 0.8) - ener(1.0, 1.0), abs=1e-12)
    B = sys.B22(U)
    assert np.allclose(B, [[alpha, 0.0], [alpha * 1.3, nu]])


def _random_state(name, rng):
    if name == "isentropic_ns":
        return np.array([rng.uniform(0.2, 3.0), rng.uniform(-2.0, 2.0)])
    if name == "full_gas":
        return np.array([rng.uniform(0.2, 3.0), rng.uniform(-2.0, 2.0), rng.uniform(0.2, 3.0)])
    return rng.normal(size=3)


@pytest.mark.parametrize("name", ["isentropic_ns", "full_gas", "linear"])
def test_analytic_vs_fd_jacobians(name):
    rng = np.random.default_rng(7)
    if name == "linear":
        sys = linear_system(rng.normal(size=(3, 3)) + 3 * np.eye(3), np.eye(2), 1)
    else:
        sys = builtin(name)
    for _ in range(100):
        u = _random_state(name, rng)
        for analytic, func in ((sys.A0(u), sys.f0), (sys.A(u), sys.f)):
            fd = fd_jacobian(func, u)
            scale = max(1.0, float(np.max(np.abs(analytic))))
            assert np.max(np.abs(fd - analytic)) <= 1e-6 * scale


@pytest.mark.parametrize("name", ["isentropic_ns", "full_gas"])
def test_symmetrized_reduced_matrix_agrees(name):
    sys = builtin(name)
    rng = np.random.default_rng(3)
    for _ in range(20):
        u = _random_state(name, rng)
        u[1] = abs(u[1]) + 0.1  # A11 = u must be invertible
        direct = tilde_a(evaluate_blocks(sys, u))
        sym = symmetrized_tilde_a(sys, u)
        assert np.allclose(direct, sym, atol=1e-10, rtol=1e-10)


@pytest.mark.parametrize("name", ["isentropic_ns", "full_gas"])
def test_gas_systems_pass_h3(name):
    sys = builtin(name)
    u = np.array([1.0, 0.7]) if name == "isentropic_ns" else np.array([1.0, 0.7, 1.2])
    rep = check_assumptions(sys, [u])
    assert rep["H3"].verdict == PASS
    assert rep["H1"].verdict == PASS
    assert rep["structure"].verdict == PASS


def test_check_is_deterministic():
    sys = full_gas()
    samples = [np.array([1.0, 0.5, 1.0]), np.array([2.0, 1.5, 0.3])]
    assert check_assumptions(sys, samples).as_dict() == check_assumptions(sys, samples).as_dict()


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.05, 5.0))
def test_isentropic_reduced_matrix_is_real(rho, u):
    sys = isentropic_ns()
    at = tilde_a(evaluate_blocks(sys, [rho, u]))
    assert np.isrealobj(at)
    # (u^2 - p'(rho)) rho / (u nu): sign follows the Mach number
    expect = rho * (u * u - 2.0 * rho) / u
    assert at[0, 0] == pytest.approx(expect, rel=1e-10, abs=1e-12)


def test_linear_system_rejects_bad_shapes():
    with pytest.raises(ParameterError):
        linear_system(np.eye(2), np.eye(2), 1)
    with pytest.raises(ParameterError):
        linear_system(np.eye(2), [[1.0]], 2)
    with pytest.raises(ParameterError):
        linear_system(np.eye(2), [[1.0]], 1, A0=[[2.0, 0.0], [0.0, 1.0]])
