"""Steady inflow/outflow profiles by shooting on the parabolic constant C2.

The steady problem f(U)' = (B(U) U')' with U(0) = U0, U_II(1) = U1_II
integrates once to

    f_I(U) = f_I(U0),
    B22(U) U_II' = f_II(U) - f_II(U0) + B22(U0) c2,

so a profile is a root c2 of Phi(c2) = U_II(1; c2) - U1_II.  With this
normalization c2 = U_II'(0).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
from scipy.stats import qmc

from .errors import (ConstraintUnsolvable, ConvergenceError, DomainError, ShootingFailure,
                     SpectralConditionError)
from .ode import GUARD_EXCEPTIONS, integrate_ivp, integrate_on_nodes
from .system import SystemDef, linear_system, tilde_a

DEDUP_RADIUS = 1e-6
DEGENERATE_DET = 1e-8
ARMIJO_C, ARMIJO_FACTOR = 1e-4, 0.5
# Uniform nodes merged into the frozen step sequence so that nearly constant
# base trajectories (few adaptive steps) still resolve the perturbations.
FROZEN_MIN_NODES = 101


@dataclass(frozen=True)
class ShootingConstants:
    """Flux level c1 = f_I(U0) and shooting constant c2 = U_II'(0)."""

    c1: np.ndarray
    c2: np.ndarray


@dataclass
class SteadyProfile:
    """A steady state on [0, 1] with its shooting data.

    ``x`` and ``states`` hold the computed nodes; calling the profile
    evaluates the continuous representation and ``derivative`` its slope.
    """

    sys: SystemDef
    U0: np.ndarray
    U1II: np.ndarray
    constants: ShootingConstants
    x: np.ndarray
    states: np.ndarray
    residual: float
    dphi: Optional[np.ndarray]
    _eval: Callable = field(repr=False)
    _deriv: Callable = field(repr=False)
    iterations: int = 0
    info: dict = field(default_factory=dict)
    _both: Optional[Callable] = field(default=None, repr=False)

    @property
    def det_dphi(self):
        return None if self.dphi is None else float(np.linalg.det(self.dphi))

    @property
    def nondegenerate(self):
        return self.dphi is not None and abs(self.det_dphi) > DEGENERATE_DET

    @property
    def c2(self):
        return self.constants.c2

    def __call__(self, x):
        if np.ndim(x) == 0:
            return self._eval(float(x))
        return np.array([self._eval(float(xi)) for xi in x])

    def derivative(self, x):
        if np.ndim(x) == 0:
            return self._deriv(float(x))
        return np.array([self._deriv(float(xi)) for xi in x])

    def with_derivative(self, x):
        """(U(x), U'(x)) for a scalar x."""
        if self._both is not None:
            return self._both(float(x))
        return self._eval(float(x)), self._deriv(float(x))

    @classmethod
    def constant(cls, sys, U0):
        """The constant profile U = U0 (root c2 = 0 of constant data)."""
        U0 = sys.check_domain(U0).copy()
        r = sys.r
        zero = np.zeros(sys.n)
        dphi = integral_expm(tilde_a_at(sys, U0)) if sys.r == 0 or not _a11_singular(sys, U0) else None
        return cls(sys, U0, U0[r:].copy(), ShootingConstants(sys.f_I(U0), np.zeros(sys.m)),
                   np.array([0.0, 1.0]), np.vstack([U0, U0]), 0.0, dphi,
                   lambda x: U0, lambda x: zero, info={"constant": True})

    @classmethod
    def from_functions(cls, sys, grid, U, dU, U1II=None, c2=None, dphi=None, residual=0.0, info=None):
        """Wrap externally computed profile functions ``U(x)`` and ``dU(x)``."""
        grid = np.asarray(grid, dtype=float)
        states = np.array([U(x) for x in grid])
        U0 = states[0]
        if U1II is None:
            U1II = states[-1][sys.r:]
        if c2 is None:
            c2 = dU(0.0)[sys.r:]
        return cls(sys, U0, np.asarray(U1II, dtype=float), ShootingConstants(sys.f_I(U0), np.asarray(c2)),
                   grid, states, residual, dphi, U, dU, info=info or {})

    def to_csv_rows(self):
        return np.column_stack([self.x, self.states])


def _a11_singular(sys, U):
    a11 = sys.A(U)[: sys.r, : sys.r]
    return np.linalg.cond(a11) > 1e12


def tilde_a_at(sys, U):
    from .system import evaluate_blocks
    return tilde_a(evaluate_blocks(sys, U))


def resolve_hyperbolic(sys: SystemDef, u_II, fI_target, guess, tol=1e-12, max_iter=50):
    """Solve f_I(u_I, u_II) = fI_target for u_I by Newton's method.

    Steps are halved while the iterate leaves the domain.  Raises
    ConstraintUnsolvable on divergence, a singular (df_I)_I or exhaustion of
    the iteration budget.
    """
    r = sys.r
    u_II = np.asarray(u_II, dtype=float)
    if r == 0:
        return np.zeros(0)
    fI_target = np.asarray(fI_target, dtype=float)
    if sys.solve_constraint is not None:
        u_I = sys.solve_constraint(u_II, fI_target)
        if not sys.domain(np.concatenate([u_I, u_II])):
            raise ConstraintUnsolvable(f"no admissible u_I for u_II={u_II}")
        return u_I
    u_I = np.array(guess, dtype=float)
    thresh = tol * max(1.0, float(np.max(np.abs(fI_target))))
    for _ in range(max_iter + 1):
        U = np.concatenate([u_I, u_II])
        if not sys.domain(U):
            raise ConstraintUnsolvable(f"iterate {U} left the domain")
        res = sys.f_I(U) - fI_target
        if np.max(np.abs(res)) <= thresh:
            return u_I
        a11 = sys.A(U)[:r, :r]
        try:
            step = np.linalg.solve(a11, res)
        except np.linalg.LinAlgError as exc:
            raise ConstraintUnsolvable("singular (df_I)_I") from exc
        if not np.all(np.isfinite(step)):
            raise ConstraintUnsolvable("singular (df_I)_I")
        t = 1.0
        while True:
            trial = u_I - t * step
            if sys.domain(np.concatenate([trial, u_II])):
                break
            t *= 0.5
            if t < 1e-12:
                raise ConstraintUnsolvable("Newton step cannot stay in the domain")
        u_I = trial
    raise ConstraintUnsolvable(f"no convergence in {max_iter} iterations (residual {np.max(np.abs(res)):.3e})")


class ShootingField:
    """Right-hand side of the reduced steady ODE for U_II."""

    def __init__(self, sys: SystemDef, U0, c2):
        self.sys = sys
        self.r = sys.r
        self.U0 = U0
        self.fI0 = sys.f_I(U0)
        self.fII0 = sys.f_II(U0)
        self.c2 = np.asarray(c2, dtype=float).reshape(sys.m)
        self.bc2 = sys.B22(U0) @ self.c2
        self.guess = U0[: sys.r].copy()

    def state(self, y, guess=None):
        u_I = resolve_hyperbolic(self.sys, y, self.fI0, self.guess if guess is None else guess)
        self.guess = u_I
        U = np.concatenate([u_I, y])
        if not self.sys.domain(U):
            raise DomainError(f"state {U} left the domain")
        return U

    def rhs_at(self, U):
        rhs = self.sys.f_II(U) - self.fII0 + self.bc2
        b = self.sys.B22(U)
        if b.shape == (1, 1):
            return rhs / b[0, 0]
        return np.linalg.solve(b, rhs)

    def __call__(self, x, y):
        return self.rhs_at(self.state(y))

    def full_derivative(self, U):
        """U' from the ODE for U_II and the constraint for U_I."""
        d2 = self.rhs_at(U)
        r = self.r
        if r == 0:
            return d2
        a = self.sys.A(U)
        d1 = -np.linalg.solve(a[:r, :r], a[:r, r:] @ d2)
        return np.concatenate([d1, d2])


@dataclass
class Shot:
    """Outcome of one shooting integration from x = 0."""

    sys: SystemDef
    U0: np.ndarray
    c2: np.ndarray
    trajectory: object
    field: ShootingField

    @property
    def status(self):
        return self.trajectory.status

    @property
    def ok(self):
        return self.trajectory.ok

    @property
    def x_stop(self):
        return self.trajectory.x_stop

    @property
    def u_II_end(self):
        return self.trajectory.y_end

    def node_states(self):
        """Full states U at the accepted nodes."""
        guess = self.U0[: self.sys.r]
        out = []
        for y in self.trajectory.values:
            u_I = resolve_hyperbolic(self.sys, y, self.field.fI0, guess)
            guess = u_I
            out.append(np.concatenate([u_I, y]))
        return np.array(out)

    def to_profile(self, U1II, residual, dphi, iterations=0, info=None):
        sys = self.sys
        traj = self.trajectory
        nodes = traj.nodes
        states = self.node_states()
        uI_nodes = states[:, : sys.r]
        fld = ShootingField(sys, self.U0, self.c2)

        def ev(x):
            y = traj(x)
            j = min(max(int(np.searchsorted(nodes, x)), 0), len(nodes) - 1)
            return fld.state(y, guess=uI_nodes[j])

        def dev(x):
            return fld.full_derivative(ev(x))

        def both(x):
            U = ev(x)
            return U, fld.full_derivative(U)

        return SteadyProfile(sys, self.U0, np.asarray(U1II, dtype=float),
                             ShootingConstants(fld.fI0, self.c2.copy()), nodes.copy(), states,
                             residual, dphi, ev, dev, iterations, info or {}, both)


def shoot(sys: SystemDef, U0, c2, rtol=1e-10, atol=1e-12, x_end=1.0) -> Shot:
    """Integrate the reduced steady ODE from U_II(0) = U0_II with constant c2."""
    U0 = sys.check_domain(U0)
    fld = ShootingField(sys, U0, c2)
    traj = integrate_ivp(fld, (0.0, x_end), U0[sys.r:].copy(), rtol=rtol, atol=atol)
    return Shot(sys, U0, fld.c2, traj, fld)


def phi(sys: SystemDef, U0, U1II, c2, rtol=1e-10, atol=1e-12):
    """Shooting map Phi(c2) = U_II(1) - U1_II."""
    s = shoot(sys, U0, c2, rtol, atol)
    if not s.ok:
        raise ShootingFailure(f"shooting stopped at x={s.x_stop:.6g} ({s.status})",
                              status=s.status, x_stop=s.x_stop)
    return s.u_II_end - np.asarray(U1II, dtype=float)


def _frozen_end(sys, U0, c2, nodes):
    fld = ShootingField(sys, U0, c2)
    try:
        return integrate_on_nodes(fld, nodes, U0[sys.r:].copy())
    except GUARD_EXCEPTIONS:
        return None


def jacobian_dphi(sys: SystemDef, U0, c2, rtol=1e-10, atol=1e-12, shot=None):
    """Jacobian of Phi in c2 by central differences on a frozen step sequence.

    The perturbed solutions reuse the accepted nodes of the base shot, so the
    differences are smooth in c2.  Probes that leave the domain fall back to
    one-sided differences.
    """
    U0 = sys.check_domain(U0)
    c2 = np.asarray(c2, dtype=float).reshape(sys.m)
    if shot is None:
        shot = shoot(sys, U0, c2, rtol, atol)
    if not shot.ok:
        raise ShootingFailure("Jacobian unavailable: base shot did not reach x=1",
                              status=shot.status, x_stop=shot.x_stop)
    nodes = np.union1d(shot.trajectory.nodes, np.linspace(0.0, 1.0, FROZEN_MIN_NODES))
    base = _frozen_end(sys, U0, c2, nodes)
    if base is None:
        raise ShootingFailure("Jacobian unavailable: base shot failed on frozen nodes")
    jac = np.empty((sys.m, sys.m))
    for j in range(sys.m):
        h = 1e-6 * (1.0 + abs(c2[j]))
        e = np.zeros(sys.m)
        e[j] = h
        plus = _frozen_end(sys, U0, c2 + e, nodes)
        minus = _frozen_end(sys, U0, c2 - e, nodes)
        if plus is not None and minus is not None:
            jac[:, j] = (plus - minus) / (2 * h)
        elif plus is not None:
            jac[:, j] = (plus - base) / h
        elif minus is not None:
            jac[:, j] = (base - minus) / h
        else:
            raise ShootingFailure(f"Jacobian unavailable: both probes in direction {j} failed")
    return jac


@dataclass
class _NewtonResult:
    c2: np.ndarray
    residual: float
    shot: Shot
    jac: Optional[np.ndarray]
    iterations: int
    converged: bool
    gradient_steps: int


def _newton(sys, U0, U1II, c, tol, max_iter, rtol, atol):
    U1II = np.asarray(U1II, dtype=float)
    thresh = tol * (1.0 + float(np.linalg.norm(U1II)))
    shot = shoot(sys, U0, c, rtol, atol)
    if not shot.ok:
        raise ShootingFailure(f"initial guess leaves the domain of Phi at x={shot.x_stop:.6g}",
                              status=shot.status, x_stop=shot.x_stop)
    F = shot.u_II_end - U1II
    nrm = float(np.linalg.norm(F))
    grad_steps = 0
    jac = None
    for it in range(max_iter + 1):
        if nrm <= thresh:
            return _NewtonResult(c, nrm, shot, jac, it, True, grad_steps)
        if it == max_iter:
            break
        jac = jacobian_dphi(sys, U0, c, rtol, atol, shot=shot)
        try:
            singular = np.linalg.cond(jac) > 1e12
            d = None if singular else -np.linalg.solve(jac, F)
        except np.linalg.LinAlgError:
            d = None
        if d is None:
            grad_steps += 1
            g = jac.T @ F
            d = -g * (nrm ** 2 / max(float(g @ g), 1e-300))
        slope = 2.0 * float(F @ (jac @ d))
        t = 1.0
        while True:
            trial = c + t * d
            s = shoot(sys, U0, trial, rtol, atol)
            if s.ok:
                Fn = s.u_II_end - U1II
                if float(Fn @ Fn) <= nrm ** 2 + ARMIJO_C * t * slope:
                    break
            t *= ARMIJO_FACTOR
            if t < 1e-12:
                return _NewtonResult(c, nrm, shot, jac, it, False, grad_steps)
        c, shot, F = trial, s, Fn
        nrm = float(np.linalg.norm(F))
    return _NewtonResult(c, nrm, shot, jac, max_iter, False, grad_steps)


def solve_steady(sys: SystemDef, U0, U1II, c2_guess=None, tol=1e-9, max_iter=100,
                 rtol=1e-10, atol=1e-12) -> SteadyProfile:
    """Find the steady profile with U(0) = U0 and U_II(1) = U1II.

    Damped Newton on Phi with Armijo backtracking on |Phi|^2.  Converged when
    |Phi| <= tol (1 + |U1II|).  A singular Jacobian switches to a gradient
    step, which is counted in ``info['gradient_steps']``.
    """
    U0 = sys.check_domain(U0)
    U1II = np.asarray(U1II, dtype=float).reshape(sys.m)
    c = np.zeros(sys.m) if c2_guess is None else np.asarray(c2_guess, dtype=float).reshape(sys.m)
    res = _newton(sys, U0, U1II, c, tol, max_iter, rtol, atol)
    if not res.converged:
        raise ConvergenceError(f"Newton did not converge (|Phi| = {res.residual:.3e})",
                               last=res.c2, info={"iterations": res.iterations,
                                                  "gradient_steps": res.gradient_steps})
    try:
        dphi = jacobian_dphi(sys, U0, res.c2, rtol, atol, shot=res.shot)
    except ShootingFailure:
        dphi = None
    return res.shot.to_profile(U1II, res.residual, dphi, res.iterations,
                               {"gradient_steps": res.gradient_steps})


# ------------------------------------------------------------ linear case

def _phi1_series(M):
    """sum_k M^k / (k+1)!, the integral of exp(sM) over [0, 1]."""
    n = M.shape[0]
    out = np.eye(n, dtype=M.dtype)
    term = np.eye(n, dtype=M.dtype)
    for k in range(1, 200):
        term = term @ M / (k + 1)
        out = out + term
        if np.max(np.abs(term)) <= 1e-17 * np.max(np.abs(out)):
            break
    return out


def _spectral_check(M, tol):
    eigs = np.linalg.eigvals(M)
    if eigs.size == 0:
        return
    kmax = int(math.ceil(np.max(np.abs(eigs)) / (2 * math.pi))) + 1
    for lam in eigs:
        for k in range(-kmax, kmax + 1):
            if k and abs(lam - 2j * math.pi * k) < tol * (1 + abs(lam)):
                raise SpectralConditionError(
                    f"reduced matrix has eigenvalue {lam:.6g} at 2*pi*i*{k}; the shooting map is singular",
                    eigenvalue=complex(2j * math.pi * k))


def integral_expm(M):
    """Integral of exp(sM) over s in [0, 1].

    Read off as the upper-right block of exp([[M, I], [0, 0]]).  This treats
    eigenvalues at or near zero (where M^{-1}(exp(M) - I) is unusable) and
    defective blocks uniformly, without splitting the spectrum.
    """
    M = np.atleast_2d(np.asarray(M))
    n = M.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    if np.linalg.norm(M, 1) <= 1.0:
        return _phi1_series(M)
    big = np.zeros((2 * n, 2 * n), dtype=np.result_type(M, float))
    big[:n, :n] = M
    big[:n, n:] = np.eye(n)
    return sla.expm(big)[:n, n:]


def linear_closed_form(A, B22, U0, U1II, A0=None):
    """Exact steady solution of a constant-coefficient system.

    Returns (profile, c2).  c2 solves int_0^1 exp(s At) ds c2 = U1II - U0II
    with At = B22^{-1}(A22 - A21 A11^{-1} A12); the profile is
    U_II(x) = U0II + x G(x At) c2 and U_I follows from the constraint.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B22 = np.atleast_2d(np.asarray(B22, dtype=float))
    n, m = A.shape[0], B22.shape[0]
    r = n - m
    sys = linear_system(A, B22, r, A0=A0)
    U0 = np.asarray(U0, dtype=float).reshape(n)
    U1II = np.asarray(U1II, dtype=float).reshape(m)
    at = tilde_a_at(sys, U0)
    _spectral_check(at, 1e-8)
    G = integral_expm(at)
    c2 = np.linalg.solve(G, U1II - U0[r:])
    a11, a12 = A[:r, :r], A[:r, r:]
    coupling = np.linalg.solve(a11, a12) if r else np.zeros((0, m))

    def ev(x):
        v = x * (integral_expm(x * at) @ c2) if x != 0 else np.zeros(m)
        return np.concatenate([U0[:r] - coupling @ v, U0[r:] + v])

    def dev(x):
        d2 = sla.expm(x * at) @ c2
        return np.concatenate([-coupling @ d2, d2])

    grid = np.linspace(0.0, 1.0, 101)
    prof = SteadyProfile(sys, U0, U1II, ShootingConstants(sys.f_I(U0), c2), grid,
                         np.array([ev(x) for x in grid]), 0.0, G, ev, dev,
                         info={"tilde_a": at, "c_tilde": c2 - at @ U0[r:]})
    return prof, c2


# ------------------------------------------------------------ entropy

def _entropy_g(sys, U):
    """Row vector d eta / d f0 = grad eta(U) A0(U)^{-1}."""
    eta, _ = sys.entropy
    if sys.entropy_grad is not None:
        grad = np.asarray(sys.entropy_grad(U), dtype=float)
    else:
        from .system import fd_jacobian
        grad = fd_jacobian(lambda u: np.array([eta(u)]), U)[0]
    return np.linalg.solve(sys.A0(U).T, grad)


def _viscous_flux(sys, U, dU):
    out = np.zeros(sys.n)
    out[sys.r:] = sys.B22(U) @ dU[sys.r:]
    return out


def entropy_dissipation(sys: SystemDef, profile: SteadyProfile, grid=None):
    """Boundary term and minimum dissipation integrand of the entropy identity.

    After subtracting the linear function l . f0 with l = g(U(0)) from the
    entropy, the boundary term is

        [q - l.f - (g - l).B U']_0^1 = -int_0^1 (dg/dx) . B U' dx,

    where g = d eta/d f0.  Returns ``(boundary_term, min_integrand)``.
    """
    if sys.entropy is None:
        raise NotImplementedError(f"system {sys.name} has no entropy pair")
    _, q = sys.entropy
    xs = profile.x if grid is None else np.asarray(grid, dtype=float)
    ell = _entropy_g(sys, profile(0.0))

    def bracket(x):
        U = profile(x)
        dU = profile.derivative(x)
        g = _entropy_g(sys, U)
        return q(U) - ell @ sys.f(U) - (g - ell) @ _viscous_flux(sys, U, dU)

    boundary = float(bracket(1.0) - bracket(0.0))
    vals = [entropy_integrand(sys, profile(x), profile.derivative(x)) for x in xs]
    return boundary, float(min(vals))


def entropy_integrand(sys, U, dU):
    """(dg/dx) . B U' at a point, with dg/dx by central differences along U'."""
    speed = float(np.max(np.abs(dU)))
    if speed == 0.0:
        return 0.0
    delta = 1e-5 * max(1.0, float(np.max(np.abs(U)))) / speed
    dg = (_entropy_g(sys, U + delta * dU) - _entropy_g(sys, U - delta * dU)) / (2 * delta)
    return float(dg @ _viscous_flux(sys, U, dU))


# ------------------------------------------------------------ degree probe

@dataclass
class DegreeResult:
    degree: int
    roots: list
    signs: list
    n_starts: int
    n_failed: int
    degenerate: list

    def as_dict(self):
        return {"degree": self.degree, "roots": [list(map(float, r)) for r in self.roots],
                "signs": self.signs, "n_starts": self.n_starts, "n_failed": self.n_failed,
                "degenerate": [list(map(float, r)) for r in self.degenerate]}


def _start_points(box, n_starts, seed):
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    sampler = qmc.Halton(d=len(box), scramble=True, seed=seed)
    return qmc.scale(sampler.random(n_starts), lo, hi), lo, hi


def brouwer_degree(sys: SystemDef, U0, U1II, c2_box, n_starts=64, seed=0, tol=1e-9,
                   max_iter=40, rtol=1e-9, atol=1e-11, jobs=1) -> DegreeResult:
    """Sampled degree of Phi over a box of c2 values.

    Runs damped Newton from ``n_starts`` scrambled Halton points, merges roots
    within 1e-6, and sums sgn det dPhi over the distinct roots inside the box.
    The count is exact only when every root in the box is found.
    """
    U0 = sys.check_domain(U0)
    U1II = np.asarray(U1II, dtype=float).reshape(sys.m)
    if len(c2_box) != sys.m:
        raise ValueError(f"box must have {sys.m} intervals")
    starts, lo, hi = _start_points(c2_box, n_starts, seed)

    def run(c0):
        try:
            res = _newton(sys, U0, U1II, c0, tol, max_iter, rtol, atol)
        except (ShootingFailure, ConstraintUnsolvable, DomainError, np.linalg.LinAlgError):
            return None
        return res.c2 if res.converged else None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            found = list(pool.map(run, starts))
    else:
        found = [run(c0) for c0 in starts]
    n_failed = sum(f is None for f in found)
    roots = []
    for c in sorted((f for f in found if f is not None), key=lambda v: tuple(v)):
        if not np.all((c >= lo - DEDUP_RADIUS) & (c <= hi + DEDUP_RADIUS)):
            continue
        if any(np.max(np.abs(c - q)) <= DEDUP_RADIUS for q in roots):
            continue
        roots.append(c)
    signs, degenerate = [], []
    degree = 0
    for c in roots:
        det = float(np.linalg.det(jacobian_dphi(sys, U0, c, rtol, atol)))
        if abs(det) < DEGENERATE_DET:
            degenerate.append(c)
            signs.append(0)
            continue
        s = 1 if det > 0 else -1
        signs.append(s)
        degree += s
    return DegreeResult(degree, roots, signs, n_starts, n_failed, degenerate)
