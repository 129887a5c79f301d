"""Hyperbolic-parabolic systems, their Jacobian blocks and structural checks.

A system is

    f0(U)_t + f(U)_x = (B(U) U_x)_x,   0 < x < 1,

with U = (U_I, U_II) in R^r x R^(n-r), B = diag(0, B22) and df0 lower block
triangular with an identity top-left block.  Boundary data are full Dirichlet
at x = 0 and Dirichlet on U_II at x = 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, ParameterError

FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)

PASS, FAIL, NOT_APPLICABLE, NOT_EVALUABLE = "pass", "fail", "not_applicable", "not_evaluable"


def fd_jacobian(func, u, h=FD_STEP):
    """Central-difference Jacobian of ``func`` at ``u``.

    The step for component j is ``h * max(1, |u_j|)``, which keeps the
    truncation and rounding errors balanced for an O(h^2) result.
    """
    u = np.asarray(u, dtype=float)
    f0 = np.asarray(func(u))
    jac = np.empty((f0.size, u.size), dtype=np.result_type(f0, float))
    for j in range(u.size):
        step = h * max(1.0, abs(u[j]))
        up = u.copy()
        um = u.copy()
        up[j] += step
        um[j] -= step
        jac[:, j] = (np.asarray(func(up)).ravel() - np.asarray(func(um)).ravel()) / (2 * step)
    return jac


@dataclass(frozen=True)
class SystemDef:
    """A hyperbolic-parabolic system of conservation laws.

    ``b22`` returns the (n-r)x(n-r) viscosity block.  ``db22(u, v)`` is the
    directional derivative of ``b22`` at ``u`` along ``v`` (a matrix); it and
    the Jacobians fall back to central finite differences when omitted.

    ``solve_constraint(u_II, target)``, when given, returns the u_I with
    f_I(u_I, u_II) = target in closed form; otherwise Newton's method is used.

    ``symmetrizer`` returns a block-diagonal S(U).  ``reduction`` optionally
    returns a block lower-triangular P(U) (with P_11 = I) that is applied to
    the equations before symmetrizing; it changes neither solutions nor the
    reduced matrix B22^{-1}(A22 - A21 A11^{-1} A12).
    """

    n: int
    r: int
    f0: Callable
    f: Callable
    b22: Callable
    jac_f0: Optional[Callable] = None
    jac_f: Optional[Callable] = None
    db22: Optional[Callable] = None
    symmetrizer: Optional[Callable] = None
    reduction: Optional[Callable] = None
    entropy: Optional[tuple] = None
    entropy_grad: Optional[Callable] = None
    domain: Callable = field(default=lambda u: bool(np.all(np.isfinite(u))))
    solve_constraint: Optional[Callable] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0 <= self.r < self.n):
            raise ParameterError(f"need 0 <= r < n, got n={self.n}, r={self.r}")

    @property
    def m(self):
        """Size n - r of the parabolic block."""
        return self.n - self.r

    def check_domain(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n,):
            raise DomainError(f"state must have shape ({self.n},), got {u.shape}")
        if not self.domain(u):
            raise DomainError(f"state {u} lies outside the domain of {self.name}")
        return u

    def A0(self, u):
        if self.jac_f0 is not None:
            return np.asarray(self.jac_f0(u), dtype=float)
        return fd_jacobian(self.f0, u)

    def A(self, u):
        if self.jac_f is not None:
            return np.asarray(self.jac_f(u), dtype=float)
        return fd_jacobian(self.f, u)

    def B22(self, u):
        return np.atleast_2d(np.asarray(self.b22(u), dtype=float))

    def dB22(self, u, v):
        if self.db22 is not None:
            return np.atleast_2d(np.asarray(self.db22(u, v), dtype=float))
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        scale = max(1.0, float(np.max(np.abs(u))))
        h = FD_STEP * scale / max(float(np.max(np.abs(v))), 1e-300)
        return (self.B22(u + h * v) - self.B22(u - h * v)) / (2 * h)

    def dB22_matrix(self, u, uprime_ii):
        """Matrix G with G @ V = (dB22(u)[V]) @ uprime_ii for every V in R^n."""
        uprime_ii = np.asarray(uprime_ii, dtype=float)
        if self.db22 is None and _is_constant_b22(self):
            return np.zeros((self.m, self.n))
        eye = np.eye(self.n)
        return np.column_stack([self.dB22(u, eye[j]) @ uprime_ii for j in range(self.n)])

    def split(self, u):
        u = np.asarray(u)
        return StatePartition(u[: self.r], u[self.r:])

    def f_I(self, u):
        return np.asarray(self.f(u))[: self.r]

    def f_II(self, u):
        return np.asarray(self.f(u))[self.r:]


def _is_constant_b22(sys):
    return sys.params.get("_constant_b22", False)


@dataclass(frozen=True)
class StatePartition:
    u_I: np.ndarray
    u_II: np.ndarray

    def join(self):
        return np.concatenate([np.atleast_1d(self.u_I), np.atleast_1d(self.u_II)])


@dataclass(frozen=True)
class JacobianBlocks:
    a0: np.ndarray
    a11: np.ndarray
    a12: np.ndarray
    a21: np.ndarray
    a22: np.ndarray
    b22: np.ndarray

    @property
    def a(self):
        return np.block([[self.a11, self.a12], [self.a21, self.a22]])

    def a11_singular(self, tol=1e-12):
        if self.a11.size == 0:
            return False
        return np.linalg.cond(self.a11) > 1.0 / tol


def evaluate_blocks(sys: SystemDef, u) -> JacobianBlocks:
    """Jacobians df0, df and B22 at ``u``, split into the (r, n-r) blocks."""
    u = sys.check_domain(u)
    a0 = sys.A0(u)
    a = sys.A(u)
    r = sys.r
    return JacobianBlocks(a0=a0, a11=a[:r, :r], a12=a[:r, r:], a21=a[r:, :r],
                          a22=a[r:, r:], b22=sys.B22(u))


def tilde_a(blocks: JacobianBlocks):
    """Reduced matrix B22^{-1} (A22 - A21 A11^{-1} A12)."""
    schur = blocks.a22
    if blocks.a11.size:
        schur = schur - blocks.a21 @ np.linalg.solve(blocks.a11, blocks.a12)
    return np.linalg.solve(blocks.b22, schur)


def symmetrized_tilde_a(sys: SystemDef, u):
    """Reduced matrix computed through the symmetrized factorization.

    (S22 B22)^{-1} (S22 A22 - (S11 A12)^t (S11 A11)^{-1} S11 A12), with the
    equations first multiplied by the optional reduction P.
    """
    if sys.symmetrizer is None:
        raise ValueError(f"system {sys.name} has no symmetrizer")
    u = sys.check_domain(u)
    r = sys.r
    s = np.asarray(sys.symmetrizer(u), dtype=float)
    p = np.eye(sys.n) if sys.reduction is None else np.asarray(sys.reduction(u), dtype=float)
    pa = p @ sys.A(u)
    b_full = np.zeros((sys.n, sys.n))
    b_full[r:, r:] = sys.B22(u)
    pb22 = (p @ b_full)[r:, r:]
    s11, s22 = s[:r, :r], s[r:, r:]
    a11, a12, a22 = pa[:r, :r], pa[:r, r:], pa[r:, r:]
    inner = s22 @ a22
    if r:
        inner = inner - (s11 @ a12).T @ np.linalg.solve(s11 @ a11, s11 @ a12)
    return np.linalg.solve(s22 @ pb22, inner)


@dataclass
class CheckResult:
    verdict: str
    margin: float = math.nan
    witness: Optional[dict] = None

    def as_dict(self):
        out = {"verdict": self.verdict, "margin": None if math.isnan(self.margin) else self.margin}
        if self.witness is not None:
            out["witness"] = self.witness
        return out


@dataclass
class AssumptionReport:
    """Verdicts for the structural checks over a set of sample states.

    Keys of ``checks``: ``structure`` (block form of df0), ``H1``, ``H2``,
    ``H3``, ``speccond`` and ``fsymm`` (symmetry of (df_I)_I).
    """

    checks: dict

    @property
    def ok(self):
        return all(c.verdict in (PASS, NOT_APPLICABLE) for c in self.checks.values())

    def __getitem__(self, key):
        return self.checks[key]

    def as_dict(self):
        return {k: v.as_dict() for k, v in sorted(self.checks.items())}


def _is_real(lam, tol):
    return abs(lam.imag) < tol * (1.0 + abs(lam))


def _merge(results):
    """Combine per-sample results: first failure wins, margins take the minimum."""
    fails = [c for c in results if c.verdict == FAIL]
    if fails:
        return fails[0]
    if all(c.verdict == NOT_APPLICABLE for c in results):
        return CheckResult(NOT_APPLICABLE)
    if any(c.verdict == NOT_EVALUABLE for c in results):
        return next(c for c in results if c.verdict == NOT_EVALUABLE)
    margins = [c.margin for c in results if not math.isnan(c.margin)]
    return CheckResult(PASS, min(margins) if margins else math.nan)


def speccond_witness(at, tol=1e-8):
    """Closest approach of sigma(at) to 2*pi*i*k, k != 0.

    Returns (distance, eigenvalue, k).  Only |k| <= ceil(rho(at)/2pi) + 1 is
    tested; larger k cannot be close.
    """
    eigs = np.linalg.eigvals(np.atleast_2d(at))
    kmax = int(math.ceil(np.max(np.abs(eigs)) / (2 * math.pi))) + 1
    best = (math.inf, None, None)
    for lam in eigs:
        for k in range(-kmax, kmax + 1):
            if k == 0:
                continue
            d = abs(lam - 2j * math.pi * k)
            if d < best[0]:
                best = (d, complex(lam), k)
    return best


def _check_sample(sys, u, tol):
    r, n = sys.r, sys.n
    bl = evaluate_blocks(sys, u)
    state = [float(x) for x in u]
    out = {}

    a0 = bl.a0
    struct_res = float(np.max(np.abs(a0[:r, :r] - np.eye(r)), initial=0.0))
    struct_res = max(struct_res, float(np.max(np.abs(a0[:r, r:]), initial=0.0)))
    if struct_res > tol * (1 + np.max(np.abs(a0))):
        out["structure"] = CheckResult(FAIL, -struct_res, {"residual": struct_res, "state": state})
    else:
        out["structure"] = CheckResult(PASS, -struct_res)

    h1 = np.linalg.eigvals(np.linalg.solve(a0[r:, r:], bl.b22))
    h1min = float(np.min(h1.real))
    if h1min > tol:
        out["H1"] = CheckResult(PASS, h1min)
    else:
        lam = complex(h1[np.argmin(h1.real)])
        out["H1"] = CheckResult(FAIL, h1min, {"eigenvalue": [lam.real, lam.imag], "state": state})

    if r == 0:
        out["H2"] = CheckResult(NOT_APPLICABLE)
        out["fsymm"] = CheckResult(NOT_APPLICABLE)
    else:
        h2 = np.linalg.eigvals(bl.a11)
        bad = [lam for lam in h2 if not _is_real(lam, tol) or lam.real <= tol]
        margin = float(np.min(h2.real))
        if bad:
            lam = complex(bad[0])
            out["H2"] = CheckResult(FAIL, margin, {"eigenvalue": [lam.real, lam.imag], "state": state})
        else:
            out["H2"] = CheckResult(PASS, margin)
        asym = float(np.max(np.abs(bl.a11 - bl.a11.T)))
        if asym <= tol * (1 + np.max(np.abs(bl.a11))):
            out["fsymm"] = CheckResult(PASS, -asym)
        else:
            out["fsymm"] = CheckResult(FAIL, -asym, {"asymmetry": asym, "state": state})

    if bl.a11_singular():
        out["speccond"] = CheckResult(NOT_EVALUABLE, witness={"reason": "A11 singular", "state": state})
    else:
        at = tilde_a(bl)
        dist, lam, k = speccond_witness(at, tol)
        dist = float(dist)
        if dist > tol:
            out["speccond"] = CheckResult(PASS, dist)
        else:
            out["speccond"] = CheckResult(FAIL, dist, {"eigenvalue": [lam.real, lam.imag], "k": k,
                                                        "state": state})

    if sys.symmetrizer is None:
        out["H3"] = CheckResult(NOT_APPLICABLE)
    else:
        out["H3"] = _check_h3(sys, u, bl, tol, state)
    return out


def _sym_margin(mat):
    sym = 0.5 * (mat + mat.T)
    return float(np.min(np.linalg.eigvalsh(sym)))


def _check_h3(sys, u, bl, tol, state):
    r = sys.r
    s = np.asarray(sys.symmetrizer(u), dtype=float)
    p = np.eye(sys.n) if sys.reduction is None else np.asarray(sys.reduction(u), dtype=float)
    offdiag = float(np.max(np.abs(s[:r, r:]), initial=0.0)) + float(np.max(np.abs(s[r:, :r]), initial=0.0))
    sa0 = s @ p @ bl.a0
    sa = s @ p @ bl.a
    b_full = np.zeros((sys.n, sys.n))
    b_full[r:, r:] = bl.b22
    sb = (s @ p @ b_full)[r:, r:]
    res0 = float(np.max(np.abs(sa0 - sa0.T)) / (1 + np.max(np.abs(sa0))))
    res1 = float(np.max(np.abs(sa - sa.T)) / (1 + np.max(np.abs(sa))))
    pos0 = _sym_margin(sa0)
    posb = float(np.min(np.linalg.eigvalsh(sb + sb.T)))
    witness = {"block_diagonal_residual": offdiag, "sym_residual_SA0": res0, "sym_residual_SA": res1,
               "min_eig_SA0": pos0, "min_eig_SB": posb, "state": state}
    ok = offdiag <= tol and res0 <= tol and res1 <= tol and pos0 > tol and posb > tol
    margin = min(pos0, posb)
    return CheckResult(PASS if ok else FAIL, margin, None if ok else witness)


def check_assumptions(sys: SystemDef, samples, tol: float = 1e-8) -> AssumptionReport:
    """Run the structural checks on every sample state and merge the verdicts."""
    samples = [sys.check_domain(u) for u in samples]
    if not samples:
        raise ValueError("need at least one sample state")
    per = [_check_sample(sys, u, tol) for u in samples]
    keys = per[0].keys()
    return AssumptionReport({k: _merge([p[k] for p in per]) for k in keys})


# ---------------------------------------------------------------- built-ins

def _positive(params, *names):
    for name in names:
        val = params[name]
        if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
            raise ParameterError(f"parameter {name} must be positive, got {val!r}")


def linear_system(A, B22, r, A0=None, symmetrizer=None, name="linear"):
    """Constant-coefficient system f0 = A0 U, f = A U."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise ParameterError(f"A must be square, got shape {A.shape}")
    if not (0 <= r < n):
        raise ParameterError(f"need 0 <= r < n, got r={r}, n={n}")
    B22 = np.atleast_2d(np.asarray(B22, dtype=float))
    if B22.shape != (n - r, n - r):
        raise ParameterError(f"B22 must have shape ({n - r}, {n - r}), got {B22.shape}")
    A0 = np.eye(n) if A0 is None else np.atleast_2d(np.asarray(A0, dtype=float))
    if A0.shape != (n, n):
        raise ParameterError(f"A0 must have shape ({n}, {n})")
    if not (np.allclose(A0[:r, :r], np.eye(r)) and np.allclose(A0[:r, r:], 0)):
        raise ParameterError("A0 must be lower block triangular with identity top-left block")
    sym = None
    if symmetrizer is not None:
        S = np.atleast_2d(np.asarray(symmetrizer, dtype=float))
        sym = lambda u: S
    return SystemDef(
        n=n, r=r,
        f0=lambda u: A0 @ u, f=lambda u: A @ u, b22=lambda u: B22,
        jac_f0=lambda u: A0, jac_f=lambda u: A, db22=lambda u, v: np.zeros_like(B22),
        symmetrizer=sym, name=name,
        params={"A": A.tolist(), "B22": B22.tolist(), "r": r, "A0": A0.tolist(), "_constant_b22": True},
    )


def rotation_example():
    """U_t + [[0, 2pi], [-2pi, 0]] U_x = U_xx, which violates the spectral condition."""
    A = np.array([[0.0, 2 * math.pi], [-2 * math.pi, 0.0]])
    return linear_system(A, np.eye(2), 0, name="rotation_example")


def _gas_domain(U):
    # comparisons with NaN are False, so non-finite states are rejected too
    return bool(0.0 < U[0] < math.inf and abs(U[1]) < math.inf)


def _full_gas_domain(U):
    return bool(0.0 < U[0] < math.inf and abs(U[1]) < math.inf and 0.0 < U[2] < math.inf)


def _mass_flux_inverse(u_II, target):
    """rho = m / u for the constraint rho u = m."""
    u = u_II[0]
    if u == 0.0:
        return np.array([math.inf])
    return np.array([target[0] / u])


def isentropic_ns(gamma=2.0, a=1.0, nu=1.0):
    """Isentropic Navier-Stokes in (rho, u) with p = a rho^gamma and viscosity nu on u."""
    params = {"gamma": gamma, "a": a, "nu": nu}
    _positive(params, "gamma", "a", "nu")
    if gamma <= 1:
        raise ParameterError(f"gamma must exceed 1, got {gamma}")

    def p(rho):
        return a * rho ** gamma

    def dp(rho):
        return a * gamma * rho ** (gamma - 1)

    def f0(U):
        rho, u = U
        return np.array([rho, rho * u])

    def f(U):
        rho, u = U
        return np.array([rho * u, rho * u * u + p(rho)])

    def jac_f0(U):
        rho, u = U
        return np.array([[1.0, 0.0], [u, rho]])

    def jac_f(U):
        rho, u = U
        return np.array([[u, rho], [u * u + dp(rho), 2 * rho * u]])

    B = np.array([[nu]])

    def eta(U):
        rho, u = U
        return 0.5 * rho * u * u + a * rho ** gamma / (gamma - 1)

    def q(U):
        rho, u = U
        return u * (eta(U) + p(rho))

    def eta_grad(U):
        rho, u = U
        return np.array([0.5 * u * u + a * gamma * rho ** (gamma - 1) / (gamma - 1), rho * u])

    return SystemDef(
        n=2, r=1, f0=f0, f=f, b22=lambda U: B, jac_f0=jac_f0, jac_f=jac_f,
        db22=lambda U, V: np.zeros((1, 1)),
        symmetrizer=lambda U: np.diag([dp(U[0]) / U[0], 1.0]),
        reduction=lambda U: np.array([[1.0, 0.0], [-U[1], 1.0]]),
        entropy=(eta, q), entropy_grad=eta_grad,
        domain=_gas_domain, solve_constraint=_mass_flux_inverse,
        name="isentropic_ns", params=dict(params, _constant_b22=True),
    )


def full_gas(Gamma=0.4, alpha=1.0, nu=1.0):
    """Full gas dynamics in (rho, u, e) with p = Gamma rho e.

    Viscous fluxes: alpha u_x in momentum, nu e_x + alpha u u_x in energy.
    """
    params = {"Gamma": Gamma, "alpha": alpha, "nu": nu}
    _positive(params, "Gamma", "alpha", "nu")
    G = Gamma

    def f0(U):
        rho, u, e = U
        return np.array([rho, rho * u, rho * (e + 0.5 * u * u)])

    def f(U):
        rho, u, e = U
        p = G * rho * e
        return np.array([rho * u, rho * u * u + p, rho * u * (e + 0.5 * u * u) + p * u])

    def jac_f0(U):
        rho, u, e = U
        return np.array([[1.0, 0.0, 0.0], [u, rho, 0.0], [e + 0.5 * u * u, rho * u, rho]])

    def jac_f(U):
        rho, u, e = U
        return np.array([
            [u, rho, 0.0],
            [u * u + G * e, 2 * rho * u, G * rho],
            [u * e * (1 + G) + 0.5 * u ** 3, rho * e * (1 + G) + 1.5 * rho * u * u, rho * u * (1 + G)],
        ])

    def b22(U):
        return np.array([[alpha, 0.0], [alpha * U[1], nu]])

    def db22(U, V):
        return np.array([[0.0, 0.0], [alpha * V[1], 0.0]])

    def s_tilde(U):
        rho, u, e = U
        return math.log(e) / G - math.log(rho)

    def eta(U):
        return -U[0] * s_tilde(U)

    def q(U):
        return -U[0] * U[1] * s_tilde(U)

    def eta_grad(U):
        rho, u, e = U
        return np.array([1.0 - s_tilde(U), 0.0, -rho / (G * e)])

    def reduction(U):
        rho, u, e = U
        return np.array([[1.0, 0.0, 0.0], [-u, 1.0, 0.0], [0.5 * u * u - e, -u, 1.0]])

    return SystemDef(
        n=3, r=1, f0=f0, f=f, b22=b22, jac_f0=jac_f0, jac_f=jac_f, db22=db22,
        symmetrizer=lambda U: np.diag([G * U[2] / U[0], 1.0, 1.0 / U[2]]),
        reduction=reduction, entropy=(eta, q), entropy_grad=eta_grad,
        domain=_full_gas_domain, solve_constraint=_mass_flux_inverse,
        name="full_gas", params=params,
    )


_BUILTINS = {
    "linear": ({"A", "B22", "r", "A0", "symmetrizer"}, lambda p: linear_system(**p)),
    "rotation_example": (set(), lambda p: rotation_example()),
    "isentropic_ns": ({"gamma", "a", "nu"}, lambda p: isentropic_ns(**p)),
    "full_gas": ({"Gamma", "alpha", "nu"}, lambda p: full_gas(**p)),
}


def builtin(name: str, **params) -> SystemDef:
    """Construct one of the shipped systems by name."""
    if name not in _BUILTINS:
        raise ParameterError(f"unknown system {name!r}; choose from {sorted(_BUILTINS)}")
    allowed, make = _BUILTINS[name]
    unknown = set(params) - allowed
    if unknown:
        raise ParameterError(f"unknown parameters for {name}: {sorted(unknown)}")
    if name == "linear" and not {"A", "B22", "r"} <= set(params):
        raise ParameterError("linear system needs A, B22 and r")
    return make(params)


def system_from_config(block: dict) -> SystemDef:
    """Build a system from a JSON-style block ``{"system": name, **params}``."""
    if not isinstance(block, dict) or "system" not in block:
        raise ParameterError("system block must be an object with a 'system' key")
    params = dict(block)
    name = params.pop("system")
    return builtin(name, **params)
