import math

import numpy as np
import pytest

from steadytube.errors import ParameterError
from steadytube.evans import (
    ScaledComplex, contour_zeros, evans_at_zero, evans_eval, linearized_field, stability_index,
    standing_shock_evans, winding_count,
)
from steadytube.steady import SteadyProfile, solve_steady
from steadytube.system import full_gas, isentropic_ns, linear_system, rotation_example

from oracles import collocation_eigenvalues, isentropic_jacobians

# time-reversed transport in the hyperbolic block (A11 = -1 violates H2)
UNSTABLE_A = np.array([[-1.0, 1.0], [-1.0, 1.0]])
UNSTABLE_REAL_EIGENVALUE = 3.31727


@pytest.fixture(scope="module")
def iso_constant():
    sys = isentropic_ns(nu=0.5)
    return sys, SteadyProfile.constant(sys, [1.0, 0.7])


@pytest.fixture(scope="module")
def iso_profile():
    sys = isentropic_ns(nu=0.5)
    return sys, solve_steady(sys, [1.0, 0.7], [0.8])


@pytest.fixture(scope="module")
def unstable():
    sys = linear_system(UNSTABLE_A, [[1.0]], 1)
    return sys, SteadyProfile.constant(sys, [0.0, 0.0])


def test_scaled_complex_roundtrip():
    z = ScaledComplex.from_complex(-2.5, log_scale=700.0)
    assert z.log_mag == pytest.approx(math.log(2.5) + 700.0)
    assert z.sign_real() == -1
    assert ScaledComplex.from_complex(0.0).value == 0j
    w = ScaledComplex.from_complex(3 + 4j)
    assert w.value == pytest.approx(3 + 4j)
    assert (w * w.conj()).value == pytest.approx(25.0)


def test_constant_profile_flux_is_conserved_at_zero(iso_constant):
    sys, prof = iso_constant
    M = linearized_field(sys, prof, 0.0)(0.3)
    assert np.all(M[sys.m:] == 0.0)


def test_constant_state_first_order_roots():
    rho, u, nu, lam = 1.0, 0.7, 0.5, 1.0
    sys = isentropic_ns(nu=nu)
    prof = SteadyProfile.constant(sys, [rho, u])
    M = linearized_field(sys, prof, lam, exact=True)(0.5)
    A0, A = isentropic_jacobians(rho, u)
    B = np.diag([0.0, nu])
    # det(mu^2 B - mu A - lam A0) as a cubic in mu, sampled and interpolated
    mus = np.linspace(-3, 3, 7)
    vals = [np.linalg.det(m * m * B - m * A - lam * A0) for m in mus]
    coeffs = np.polyfit(mus, vals, 3)
    expect = np.sort_complex(np.roots(coeffs))
    got = np.sort_complex(np.linalg.eigvals(M))
    assert np.allclose(got, expect, atol=1e-8)


def test_real_coefficients_give_real_field(iso_profile):
    sys, prof = iso_profile
    M = linearized_field(sys, prof, 2.0)(0.37)
    assert np.isrealobj(M)


@pytest.mark.parametrize("lam", [1j, 0.3 + 2j, 5 - 1j])
def test_conjugate_symmetry(iso_profile, lam):
    sys, prof = iso_profile
    a = evans_eval(sys, prof, lam).d.value
    b = evans_eval(sys, prof, np.conj(lam)).d.value
    assert abs(a - np.conj(b)) <= 1e-8 * abs(a)


@pytest.mark.parametrize("lam", [0.0, 0.5, 3.0, 40.0])
def test_real_axis_values_are_real(iso_profile, lam):
    sys, prof = iso_profile
    s = evans_eval(sys, prof, lam)
    assert abs(math.sin(s.d.phase)) <= 1e-8
    assert s.sign_real in (-1, 1)


def test_matching_point_invariance(iso_profile):
    sys, prof = iso_profile
    ref = evans_eval(sys, prof, 2.0 + 1.0j, rtol=1e-10, atol=1e-12).d
    rng = np.random.default_rng(0)
    for xm in rng.uniform(0.05, 0.95, 5):
        d = evans_eval(sys, prof, 2.0 + 1.0j, x_match=xm, rtol=1e-10, atol=1e-12).d
        assert abs(d.log_mag - ref.log_mag) <= 1e-6
        assert abs((d.phase - ref.phase + math.pi) % (2 * math.pi) - math.pi) <= 1e-6


def test_positive_real_lambda_on_symmetrizable_state(iso_constant):
    sys, prof = iso_constant
    s = evans_eval(sys, prof, 2.0)
    assert s.sign_real in (-1, 1) and s.d.abs > 0


def test_eval_rejects_bad_input(iso_constant):
    sys, prof = iso_constant
    with pytest.raises(ParameterError):
        evans_eval(sys, prof, complex("nan"))
    with pytest.raises(ParameterError):
        evans_eval(sys, prof, 1.0, x_match=1.5)


def test_zero_frequency_constant_state(iso_constant):
    sys, prof = iso_constant
    d0, rep = evans_at_zero(sys, prof)
    assert rep["sign_d0"] == 1 and rep["sign_dphi"] == 1 and rep["agree"]
    # flux normalization: D(0) equals det dPhi
    assert rep["ratio"] == pytest.approx(1.0, rel=1e-8)


def test_zero_frequency_rotation_is_degenerate():
    sys = rotation_example()
    prof = SteadyProfile.constant(sys, [0.0, 0.0])
    d0, rep = evans_at_zero(sys, prof)
    assert rep["degenerate"]


def test_zero_frequency_nonconstant(iso_profile):
    sys, prof = iso_profile
    d0, rep = evans_at_zero(sys, prof, rtol=1e-10, atol=1e-12)
    assert rep["agree"]
    assert rep["ratio"] == pytest.approx(1.0, rel=1e-4)


def test_index_constant_state(iso_constant):
    sys, prof = iso_constant
    v = stability_index(sys, prof)
    assert v.mu == 1 and v.real_axis_sign_changes == 0


def test_index_unstable_transport(unstable):
    sys, prof = unstable
    v = stability_index(sys, prof, lambda_max=50.0)
    assert v.mu == -1
    assert v.real_axis_sign_changes == 1
    assert v.real_roots[0] == pytest.approx(UNSTABLE_REAL_EIGENVALUE, abs=1e-4)
    ev = collocation_eigenvalues(UNSTABLE_A, [[1.0]], 1)
    real_pos = [z.real for z in ev if abs(z.imag) < 1e-8 and z.real > 0]
    assert min(real_pos) == pytest.approx(v.real_roots[0], abs=1e-3)


def test_winding_stable_constant_state(iso_constant):
    sys, prof = iso_constant
    assert winding_count(sys, prof, {"kind": "half_disk", "radius": 50.0}) == 0


def test_winding_around_unstable_eigenvalue(unstable):
    sys, prof = unstable
    assert winding_count(sys, prof, {"kind": "circle", "center": 3.3, "radius": 1.0}) == 1
    assert winding_count(sys, prof, {"kind": "circle", "center": 3.3, "radius": 1.0, "turns": 2}) == 2
    assert winding_count(sys, prof, {"kind": "half_disk", "radius": 5.0}) == 1


def test_contour_zeros_unstable(unstable):
    sys, prof = unstable
    zs = contour_zeros(sys, prof, 3.3, 1.0)
    assert len(zs) == 1
    assert zs[0] == pytest.approx(UNSTABLE_REAL_EIGENVALUE, abs=1e-4)


def test_full_gas_constant_state_index():
    sys = full_gas(alpha=1.0, nu=1.0)
    prof = SteadyProfile.constant(sys, [1.0, 1.0, 1.0])
    d0, rep = evans_at_zero(sys, prof)
    assert rep["sign_d0"] == 1
    assert stability_index(sys, prof, n_grid=32).mu == 1


def test_standing_shock_large_eps_sign():
    rows = standing_shock_evans(0.5, [1.0, 2.0])
    assert all(r.d0.sign_real() == 1 for r in rows)


def test_standing_shock_rejects_subsonic_left_state():
    with pytest.raises(ParameterError):
        standing_shock_evans(0.9, [0.1])
