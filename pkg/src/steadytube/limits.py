"""Small- and large-viscosity structure of steady gas-dynamics profiles.

Isentropic part.  With mass flux m = rho u and p(rho) = a rho^gamma the
steady equations reduce to the scalar profile ODE

    m nu rho' = rho^2 (b - psi(rho)),     psi(rho) = m^2/rho + p(rho),

where psi is convex with its minimum at the sonic density rho*.  The
inviscid configuration (boundary layers, interior shock, double
characteristic layer) is read off from rho0, rho1 and rho*; the viscous
profile is computed from the quadrature x(rho) = m nu int d sigma /
(sigma^2 (b - psi)).

Full-gas part.  For large viscosities the steady full-gas solution tends
to an explicit limiting profile (``lexact``), with an H^1 error that decays
like 1/alpha at fixed nu/alpha.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .errors import ConvergenceError, DomainError, ParameterError, SteadyTubeError, ShootingFailure
from .ode import COMPLETED, integrate_ivp
from .steady import SteadyProfile, resolve_hyperbolic, solve_steady

SHOCK_RTOL = 1e-9
STRETCH_BELOW = 1e-3

KINDS = ("LeftBL_expansive", "RightBL_expansive", "LeftBL_compressive", "RightBL_compressive",
         "InteriorShock", "DoubleCharacteristicBL")
CONSTANT = "Constant"


# ------------------------------------------------------------ pressure law

@dataclass(frozen=True)
class PowerLaw:
    """p(rho) = a rho^gamma with a > 0 and gamma > 1."""

    a: float = 1.0
    gamma: float = 2.0

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ParameterError(f"pressure coefficient must be positive, got {self.a}")
        if not (self.gamma > 1 and math.isfinite(self.gamma)):
            raise ParameterError(f"gamma must exceed 1, got {self.gamma}")

    def p(self, rho):
        return self.a * rho ** self.gamma

    def dp(self, rho):
        return self.a * self.gamma * rho ** (self.gamma - 1)

    def d2p(self, rho):
        return self.a * self.gamma * (self.gamma - 1) * rho ** (self.gamma - 2)


def as_pressure(pressure) -> PowerLaw:
    """Accept a PowerLaw, an (a, gamma) pair or a {"a", "gamma"} mapping."""
    if isinstance(pressure, PowerLaw):
        return pressure
    if isinstance(pressure, dict):
        unknown = set(pressure) - {"a", "gamma"}
        if unknown:
            raise ParameterError(f"unknown pressure keys {sorted(unknown)}")
        return PowerLaw(float(pressure.get("a", 1.0)), float(pressure.get("gamma", 2.0)))
    a, gamma = pressure
    return PowerLaw(float(a), float(gamma))


def psi(rho, m, pressure):
    law = as_pressure(pressure)
    return m * m / rho + law.p(rho)


def dpsi(rho, m, pressure):
    law = as_pressure(pressure)
    return -m * m / rho ** 2 + law.dp(rho)


def d2psi(rho, m, pressure):
    """Second derivative 2 m^2/rho^3 + p''(rho), positive on rho > 0."""
    law = as_pressure(pressure)
    return 2 * m * m / rho ** 3 + law.d2p(rho)


def psi_diff(sigma, ref, m, pressure):
    """psi(sigma) - psi(ref) without cancellation for sigma close to ref."""
    law = as_pressure(pressure)
    rel = (sigma - ref) / ref
    return m * m * (ref - sigma) / (sigma * ref) + law.p(ref) * np.expm1(law.gamma * np.log1p(rel))


def sonic_state(m, pressure):
    """Sonic density rho*, the root of m^2/rho^2 = p'(rho).

    Found by bracketing and bisection of the monotone function
    log(m^2/rho^2) - log p'(rho).
    """
    law = as_pressure(pressure)
    if not m > 0:
        raise ParameterError(f"mass flux must be positive, got {m}")

    def g(r):
        return 2 * math.log(m) - 2 * math.log(r) - math.log(law.dp(r))

    lo, hi = 1.0, 1.0
    while g(lo) < 0:
        lo *= 0.5
    while g(hi) > 0:
        hi *= 2.0
    if lo == hi:
        return lo
    return optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def sonic_state_closed_form(m, pressure):
    law = as_pressure(pressure)
    return (m * m / (law.a * law.gamma)) ** (1.0 / (law.gamma + 1))


def conjugate_state(rho, m, pressure):
    """The other positive root of psi(.) = psi(rho), on the far side of rho*."""
    law = as_pressure(pressure)
    rs = sonic_state(m, law)
    if not rho > 0:
        raise DomainError(f"density must be positive, got {rho}")
    if abs(rho - rs) <= 1e-14 * rs:
        raise DomainError("the sonic density has no distinct conjugate")

    def g(s):
        return psi_diff(s, rho, m, law)

    if rho < rs:
        lo, hi = rs, 2 * rs
        while g(hi) < 0:
            lo, hi = hi, 2 * hi
    else:
        lo, hi = 0.5 * rs, rs
        while g(lo) < 0:
            lo, hi = 0.5 * lo, lo
    return optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def decay_rate(rho, m, pressure):
    """Linearized rate r = rho^2 |psi'(rho)| / m of the profile ODE at a rest state."""
    return rho * rho * abs(dpsi(rho, m, pressure)) / m


# ------------------------------------------------------------ classification

@dataclass(frozen=True)
class GasBoundaryData:
    """Viscous inflow/outflow data (rho(0), u(0), u(1)) for isentropic gas."""

    rho0: float
    u0: float
    u1: float
    pressure: PowerLaw = PowerLaw()
    nu: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "pressure", as_pressure(self.pressure))
        for name in ("rho0", "u0", "u1"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ParameterError(f"{name} must be a positive finite number, got {v}")
        if self.nu is not None and not self.nu > 0:
            raise ParameterError(f"viscosity must be positive, got {self.nu}")

    @property
    def m(self):
        return self.rho0 * self.u0

    @property
    def rho1(self):
        return self.m / self.u1

    @classmethod
    def from_densities(cls, rho0, rho1, m=1.0, pressure=PowerLaw(), nu=None):
        return cls(rho0, m / rho0, m / rho1, pressure, nu)


@dataclass
class InviscidConfig:
    kind: str
    interior_state: Optional[float]
    rho_star: float
    b: float
    rest_points: Optional[tuple]
    rates: tuple
    shock_location: Optional[float]
    induced_bc: dict
    rho0: float
    rho1: float
    m: float
    pressure: PowerLaw

    @property
    def psi_star(self):
        return psi(self.rho_star, self.m, self.pressure)

    def limit(self, x, x_shock=None):
        """The limiting density at x (scalar or array) on (0, 1)."""
        x = np.asarray(x, dtype=float)
        k = self.kind
        if k == CONSTANT or k.startswith("RightBL"):
            out = np.full(x.shape, self.rho0)
        elif k.startswith("LeftBL"):
            out = np.full(x.shape, self.rho1)
        elif k == "DoubleCharacteristicBL":
            out = np.full(x.shape, self.rho_star)
        else:
            xs = self.shock_location if x_shock is None else x_shock
            out = np.where(x < xs, self.rest_points[0], self.rest_points[1])
        return out[()] if out.ndim == 0 else out

    def as_dict(self):
        return {
            "kind": self.kind,
            "interior_state": self.interior_state,
            "rho_star": self.rho_star,
            "b": self.b,
            "rest_points": None if self.rest_points is None else list(self.rest_points),
            "rates": list(self.rates),
            "shock_location": self.shock_location,
            "induced_bc": self.induced_bc,
            "rho0": self.rho0,
            "rho1": self.rho1,
            "m": self.m,
        }


def induced_boundary_conditions(data: GasBoundaryData):
    """Inviscid boundary conditions induced by viscous data at x = 0 and x = 1."""
    law, m = data.pressure, data.m
    c0 = math.sqrt(law.dp(data.rho0))
    if data.u0 <= c0:
        left = {"type": "FullDirichlet", "rho": data.rho0, "u": data.u0}
    else:
        left = {"type": "Transcharacteristic", "mass_flux": m, "u_min": c0,
                "condition": "rho(0) u(0) = m and u(0) >= sqrt(p'(rho0))"}
    c1 = math.sqrt(law.dp(data.rho1))
    if data.u1 <= c1:
        right = {"type": "SingleOutflow", "u": data.u1}
    else:
        rho_d = conjugate_state(data.rho1, m, law)
        u_d = m / rho_d
        right = {"type": "RangeCondition", "mass_flux": m, "rho_dagger": rho_d, "u_dagger": u_d,
                 "condition": "rho(1) u(1) = m and u(1)^dagger <= u1",
                 "satisfied_at_data": bool(u_d <= data.u1),
                 "remark": "holds whenever u(1) <= u1; for u(1) > u1 it bounds rho(1) from above "
                           "more strictly than subcharacteristicity"}
    return {"left": left, "right": right}


def classify_inviscid(data: GasBoundaryData, shock_rtol: float = SHOCK_RTOL) -> InviscidConfig:
    """Limiting inviscid configuration for the data.

    Cases, with rho1 = m/u1:

    * rho0 > rho1 > rho*: decreasing subsonic layer at x = 0, interior rho1;
    * rho* > rho0 > rho1: decreasing supersonic layer at x = 1, interior rho0;
    * rho0 >= rho* >= rho1: double characteristic layer through rho*;
    * rho0 < rho1 < rho*: increasing layer at x = 1, interior rho0;
    * rho* < rho0 < rho1: increasing layer at x = 0, interior rho1;
    * rho0 < rho* < rho1: the larger of psi(rho0), psi(rho1) wins the
      interior; equality within ``shock_rtol`` gives an interior shock.

    Densities equal up to rounding give the trivial kind ``Constant``.
    """
    law, m = data.pressure, data.m
    r0, r1 = data.rho0, data.rho1
    rs = sonic_state(m, law)
    psi0, psi1 = psi(r0, m, law), psi(r1, m, law)
    interior = None
    # rho1 = rho0 u0 / u1 carries rounding, so equal densities are compared to a few ulps
    if math.isclose(r0, r1, rel_tol=8 * np.finfo(float).eps, abs_tol=0.0):
        kind, interior, b = CONSTANT, r0, psi0
    elif r0 > r1:
        if r1 > rs:
            kind, interior, b = "LeftBL_expansive", r1, psi1
        elif rs > r0:
            kind, interior, b = "RightBL_expansive", r0, psi0
        else:
            kind, b = "DoubleCharacteristicBL", psi(rs, m, law)
    else:
        if r1 < rs:
            kind, interior, b = "RightBL_compressive", r0, psi0
        elif r0 > rs:
            kind, interior, b = "LeftBL_compressive", r1, psi1
        else:
            diff = float(psi_diff(r1, r0, m, law))
            if abs(diff) <= shock_rtol * max(psi0, psi1):
                kind, b = "InteriorShock", psi0
            elif diff < 0:
                kind, interior, b = "RightBL_compressive", r0, psi0
            else:
                kind, interior, b = "LeftBL_compressive", r1, psi1

    rest, xs = None, None
    if kind == "InteriorShock":
        rest = (r0, conjugate_state(r0, m, law))
        ra, rb = decay_rate(rest[0], m, law), decay_rate(rest[1], m, law)
        rates = (ra, rb)
        xs = rb / (ra + rb)
    else:
        rates = (decay_rate(r0, m, law), decay_rate(r1, m, law))
        if interior is not None and interior != rs:
            rest = tuple(sorted((interior, conjugate_state(interior, m, law))))
    return InviscidConfig(kind, interior, rs, float(b), rest, rates, xs,
                          induced_boundary_conditions(data), r0, r1, m, law)


# ------------------------------------------------------------ viscous profiles

class _LayerModel:
    """Profile ODE rho' = rho^2 s (beta + D(rho)) / (m nu) on [lo, hi].

    D >= 0 vanishes at the reference densities; s = +1 for increasing and
    -1 for decreasing profiles.  The travel integral int m / (sigma^2 (beta +
    D)) is split into closed-form singular models plus a bounded remainder,
    so that beta = exp(-L) may underflow without loss of accuracy.
    """

    def __init__(self, m, law, lo, hi, s, psi_e, refs, quad_point=None):
        self.m, self.law, self.lo, self.hi, self.s = m, law, lo, hi, s
        self.psi_e = psi_e
        self.refs = np.asarray(refs, dtype=float)
        self.linear = []
        for e in (lo, hi):
            if quad_point is not None and e == quad_point:
                continue
            c = abs(float(dpsi(e, m, law)))
            De = max(self.D(e), 0.0)
            if c > 0 and De <= 0.1 * c * (hi - lo):
                self.linear.append((e, c, De))
        self.quad = None
        if quad_point is not None:
            kappa = 0.5 * float(d2psi(quad_point, m, law))
            g = law.gamma
            d3 = -6 * m * m / quad_point ** 4 + law.a * g * (g - 1) * (g - 2) * quad_point ** (g - 3)
            self.quad = (quad_point, kappa, d3 / 6.0)

    def D(self, sigma):
        ref = self.refs[np.argmin(np.abs(self.refs - sigma))]
        return -self.s * float(psi_diff(sigma, ref, self.m, self.law))

    def rhs(self, rho, beta):
        return rho * rho * self.s * (beta + self.D(rho)) / self.m

    def _log_b(self, L, De):
        if De <= 0:
            return -L
        return float(np.logaddexp(-L, math.log(De)))

    def travel(self, u, v, L):
        """int_u^v m d sigma / (sigma^2 (beta + D(sigma))) for lo <= u <= v <= hi."""
        if v <= u:
            return 0.0
        beta = math.exp(-L) if L < 745 else 0.0
        m = self.m
        total = 0.0
        models = []
        for e, c, De in self.linear:
            logB = self._log_b(L, De)
            du, dv = abs(u - e), abs(v - e)

            def lg(d):
                return logB if d == 0 else float(np.logaddexp(logB, math.log(c * d)))

            total += m / (e * e * c) * abs(lg(dv) - lg(du))
            models.append(("lin", e, c, math.exp(logB) if logB > -745 else 0.0))
        points = []
        if self.quad is not None:
            # even part 1/(beta + kappa d^2) and the odd cubic correction
            p, kappa, tau = self.quad
            if L / 2 > 700:
                return math.inf
            w = math.exp(-L / 2) / math.sqrt(kappa)
            amp = m / (p * p) * math.exp(L / 2) / math.sqrt(kappa)
            total += amp * (math.atan((v - p) / w) - math.atan((u - p) / w))
            A = 2.0 / p + tau / kappa

            def logden(d):
                return -L if d == 0 else float(np.logaddexp(-L, math.log(kappa * d * d)))

            def inv_den(d):
                return 1.0 / (beta + kappa * d * d)

            du, dv = u - p, v - p
            odd = A / (2 * kappa) * (logden(dv) - logden(du))
            odd += tau * beta / kappa / (2 * kappa) * (inv_den(dv) - inv_den(du))
            total -= m / (p * p) * odd
            models.append(("quad", p, kappa, beta))
            models.append(("odd", p, (kappa, tau, A), beta))
            points += [p + k * w for k in (-10, -1, 1, 10)] + [p]
        for kind, e, c, B in models:
            if kind == "lin" and B > 0:
                points += [e + sgn * k * B / c for k in (1, 10, 100) for sgn in (-1, 1)]

        def remainder(sig):
            den = beta + self.D(sig)
            if den <= 0:
                return 0.0
            val = m / (sig * sig * den)
            for kind, e, c, B in models:
                if kind == "lin":
                    val -= m / (e * e) / (B + c * abs(sig - e))
                elif kind == "quad":
                    val -= m / (e * e) / (B + c * (sig - e) ** 2)
                else:
                    kappa, tau, A = c
                    d = sig - e
                    den = B + kappa * d * d
                    val += m / (e * e) * (A * d / den - tau * B / kappa * d / (den * den))
            return val

        pts = sorted({q for q in points if u < q < v})
        with warnings.catch_warnings():
            # the remainder is bounded but loses digits to cancellation next to
            # the singular points; the achieved accuracy is checked downstream
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            rest, _ = integrate.quad(remainder, u, v, points=pts or None, limit=400,
                                     epsabs=1e-14, epsrel=1e-12)
        return total + rest


@dataclass
class ViscousProfile:
    """Isentropic viscous profile rho(x) on [0, 1] with its constant b.

    ``L`` is -log(beta) where b = psi_e + s beta; it stays finite even when
    beta underflows.  ``x_steep`` is the point of maximal |rho'|.
    """

    m: float
    pressure: PowerLaw
    nu: float
    s: int
    b: float
    L: float
    x_steep: float
    rho_steep: float
    scale: float
    _model: Optional[_LayerModel] = field(repr=False, default=None)
    _back: object = field(repr=False, default=None)
    _fwd: object = field(repr=False, default=None)
    config: Optional[InviscidConfig] = None
    snapped: bool = False

    @property
    def beta(self):
        return math.exp(-self.L) if self.L < 745 else 0.0

    @property
    def x(self):
        if self._model is None:
            return np.array([0.0, 1.0])
        t = np.concatenate([self._back.nodes, self._fwd.nodes])
        return np.unique(np.clip(t * self.scale, 0.0, 1.0))

    def _one(self, x):
        if self._model is None:
            return self.rho_steep
        traj = self._back if x < self.x_steep else self._fwd
        return float(traj(x / self.scale)[0])

    def __call__(self, x):
        if np.ndim(x) == 0:
            return self._one(float(x))
        return np.array([self._one(float(v)) for v in np.asarray(x, dtype=float)])

    def derivative(self, x):
        if self._model is None:
            return np.zeros(np.shape(x)) if np.ndim(x) else 0.0
        rho = self(x)
        rhs = np.vectorize(lambda r: self._model.rhs(r, self.beta) / self.nu)
        out = rhs(rho)
        return float(out) if np.ndim(x) == 0 else out

    def profile(self, sys=None) -> SteadyProfile:
        """The (rho, u) profile as a SteadyProfile of the isentropic system."""
        if sys is None:
            from .system import isentropic_ns
            sys = isentropic_ns(gamma=self.pressure.gamma, a=self.pressure.a, nu=self.nu)
        m = self.m

        def U(x):
            r = self(x)
            return np.array([r, m / r])

        def dU(x):
            r, dr = self(x), self.derivative(x)
            return np.array([dr, -m * dr / (r * r)])

        return SteadyProfile.from_functions(sys, self.x, U, dU,
                                            info={"viscous_b": self.b, "x_steep": self.x_steep})


def _solve_L(model, nu, L0=-5.0, L1=5.0):
    """Root of nu I(L) = 1 with I(L) = model.travel(lo, hi, L) increasing in L."""
    def f(L):
        val = nu * model.travel(model.lo, model.hi, L)
        return math.log(val) if val > 0 else -math.inf

    lo, hi = L0, L1
    flo, fhi = f(lo), f(hi)
    step = hi - lo
    for _ in range(200):
        if flo <= 0:
            break
        hi, fhi = lo, flo
        lo -= step
        step *= 2
        flo = f(lo)
    else:
        raise ConvergenceError("could not bracket the profile constant from below")
    step = hi - lo
    for _ in range(200):
        if fhi >= 0:
            break
        lo, flo = hi, fhi
        hi += step
        step *= 2
        fhi = f(hi)
    else:
        raise ConvergenceError("could not bracket the profile constant from above")
    if flo == 0:
        return lo
    if fhi == 0 or not math.isfinite(fhi):
        # shrink until f(hi) is finite
        while not math.isfinite(fhi):
            hi = 0.5 * (lo + hi)
            fhi = f(hi)
            if fhi < 0:
                lo, flo = hi, fhi
                hi = hi + step
                fhi = f(hi)
                step *= 0.5
    return optimize.brentq(f, lo, hi, xtol=1e-13, rtol=1e-15, maxiter=300)


def _steepest(model, L):
    if model.quad is not None:
        return model.quad[0]
    beta = math.exp(-L) if L < 745 else 0.0

    def negh(sig):
        return -sig * sig * (beta + model.D(sig))

    res = optimize.minimize_scalar(negh, bounds=(model.lo, model.hi), method="bounded",
                                   options={"xatol": 1e-12 * model.hi})
    cands = [(negh(model.lo), model.lo), (negh(model.hi), model.hi), (res.fun, res.x)]
    return min(cands)[1]


def _integrate_from(model, nu, L, sigma_s, x_s, rtol, atol, ends=None):
    """Integrate the profile ODE on both sides of x_s.

    By default both pieces start from sigma_s at x_s and run outward, which
    is the contracting direction when the profile settles exponentially
    onto plateaus.  With ``ends = (rho(0), rho(1))`` the pieces start at the
    boundaries and run inward instead; algebraically decaying characteristic
    tails contract in that direction only.
    """
    beta = math.exp(-L) if L < 745 else 0.0
    scale = nu if nu < STRETCH_BELOW else 1.0

    def fld(t, y):
        return np.array([scale * model.rhs(y[0], beta) / nu])

    t_s = x_s / scale
    if t_s < 1e-12 * max(1.0, 1.0 / scale):
        t_s = 0.0
    elif 1.0 / scale - t_s < 1e-12 * max(1.0, 1.0 / scale):
        t_s = 1.0 / scale
    if ends is None:
        back = integrate_ivp(fld, (t_s, 0.0), np.array([sigma_s]), rtol=rtol, atol=atol)
        fwd = integrate_ivp(fld, (t_s, 1.0 / scale), np.array([sigma_s]), rtol=rtol, atol=atol)
    else:
        back = integrate_ivp(fld, (0.0, t_s), np.array([ends[0]]), rtol=rtol, atol=atol)
        fwd = integrate_ivp(fld, (1.0 / scale, t_s), np.array([ends[1]]), rtol=rtol, atol=atol)
    for tr in (back, fwd):
        if tr.status != COMPLETED:
            raise ShootingFailure(f"profile integration stopped ({tr.status})", tr.status,
                                  tr.x_stop * scale)
    return back, fwd, scale


def _model_for(m, law, r0, r1, rs):
    """Layer model for a monotone profile from r0 to r1."""
    lo, hi = min(r0, r1), max(r0, r1)
    if r1 > r0:
        p0, p1 = psi(r0, m, law), psi(r1, m, law)
        psi_e = max(p0, p1)
        refs = [e for e, pe in ((r0, p0), (r1, p1)) if pe == psi_e]
        return _LayerModel(m, law, lo, hi, +1, psi_e, refs)
    if lo <= rs <= hi:
        return _LayerModel(m, law, lo, hi, -1, psi(rs, m, law), [rs], quad_point=rs)
    p0, p1 = psi(r0, m, law), psi(r1, m, law)
    psi_e = min(p0, p1)
    refs = [e for e, pe in ((r0, p0), (r1, p1)) if pe == psi_e]
    return _LayerModel(m, law, lo, hi, -1, psi_e, refs)


def solve_isentropic_viscous(data: GasBoundaryData, nu=None, rtol=1e-11, atol=1e-13,
                             shock_rtol=SHOCK_RTOL) -> ViscousProfile:
    """Viscous profile with rho(0) = rho0 and rho(1) = m/u1.

    The profile constant b is the root of nu I(b) = 1, where I(b) is the
    travel integral from rho0 to rho1; I is monotone in b so the root is
    unique.  The profile is then integrated outward from its steepest point
    in the stretched variable x/nu when nu < 1e-3.  Data classified as an
    interior shock are snapped to the exact conjugate density (``snapped``).
    """
    nu = data.nu if nu is None else nu
    if nu is None or not nu > 0:
        raise ParameterError(f"viscosity must be positive, got {nu}")
    cfg = classify_inviscid(data, shock_rtol)
    law, m = data.pressure, data.m
    r0, r1 = data.rho0, data.rho1
    if cfg.kind == CONSTANT:
        return ViscousProfile(m, law, nu, 0, cfg.b, math.inf, 0.0, r0, 1.0, config=cfg)
    snapped = False
    if cfg.kind == "InteriorShock" and r1 != cfg.rest_points[1]:
        r1, snapped = cfg.rest_points[1], True
    model = _model_for(m, law, r0, r1, cfg.rho_star)
    if snapped:
        model.refs = np.array([r0, r1])
        model.linear = [(e, abs(float(dpsi(e, m, law))), 0.0) for e in (model.lo, model.hi)]
    L = _solve_L(model, nu)
    sigma_s = _steepest(model, L)
    if model.s > 0:
        x_s = nu * model.travel(model.lo, sigma_s, L)
    else:
        x_s = nu * model.travel(sigma_s, model.hi, L)
    if sigma_s == (model.lo if model.s > 0 else model.hi):
        x_s = 0.0
    elif sigma_s == (model.hi if model.s > 0 else model.lo):
        x_s = 1.0
    x_s = min(max(x_s, 0.0), 1.0)
    ends = (r0, r1) if model.quad is not None else None
    back, fwd, scale = _integrate_from(model, nu, L, sigma_s, x_s, rtol, atol, ends)
    beta = math.exp(-L) if L < 745 else 0.0
    return ViscousProfile(m, law, nu, model.s, model.psi_e + model.s * beta, L, x_s, sigma_s,
                          scale, model, back, fwd, cfg, snapped)


def whole_line_shock(rho_minus, m=1.0, gamma=2.0, a=1.0, nu=1.0, center=0.5, rtol=1e-11, atol=1e-13):
    """Standing viscous shock from rho_minus to its conjugate, restricted to [0, 1].

    The shock is the heteroclinic orbit with b = psi(rho_minus), positioned
    so that its steepest point sits at ``center``.  Requires a supersonic
    left state rho_minus < rho*.
    """
    law = PowerLaw(a, gamma)
    rs = sonic_state(m, law)
    if not 0 < rho_minus < rs:
        raise ParameterError(f"left state {rho_minus} must lie below the sonic density {rs:.6g}")
    rho_plus = conjugate_state(rho_minus, m, law)
    model = _LayerModel(m, law, rho_minus, rho_plus, +1, psi(rho_minus, m, law), [rho_minus, rho_plus])
    model.linear = [(e, abs(float(dpsi(e, m, law))), 0.0) for e in (rho_minus, rho_plus)]
    L = math.inf
    sigma_s = _steepest(model, 1e6)
    back, fwd, scale = _integrate_from(model, nu, 1e6, sigma_s, center, rtol, atol)
    return ViscousProfile(m, law, nu, +1, model.psi_e, L, center, sigma_s, scale, model, back, fwd)


# ------------------------------------------------------------ shapes

@dataclass(frozen=True)
class ShapeClass:
    monotone: str
    layer: str
    plateau: str

    def as_dict(self):
        return {"monotone": self.monotone, "layer": self.layer, "plateau": self.plateau}


def classify_shape(x, rho, rho0, rho1, rho_star, tol=1e-10):
    """Shape of a sampled profile: monotonicity, layer side and plateau state.

    The layer side comes from the share of total variation in [0, 0.1],
    [0.1, 0.9] and [0.9, 1]; the plateau is the data state nearest rho(0.5).
    """
    x, rho = np.asarray(x, dtype=float), np.asarray(rho, dtype=float)
    d = np.diff(rho)
    span = tol * max(1.0, float(np.max(np.abs(rho))))
    if np.all(np.abs(d) <= span):
        return ShapeClass("constant", "none", "rho0")
    if np.all(d >= -span):
        mono = "increasing"
    elif np.all(d <= span):
        mono = "decreasing"
    else:
        mono = "non-monotone"
    tv = np.concatenate([[0.0], np.cumsum(np.abs(d))])
    total = tv[-1]

    def share(a, b):
        return (np.interp(b, x, tv) - np.interp(a, x, tv)) / total

    fl, fm, fr = share(0.0, 0.1), share(0.1, 0.9), share(0.9, 1.0)
    if fm >= 0.9:
        layer = "interior"
    elif fl >= 0.9:
        layer = "left"
    elif fr >= 0.9:
        layer = "right"
    elif fl >= 0.2 and fr >= 0.2:
        layer = "double"
    else:
        layer = "mixed"
    mid = float(np.interp(0.5, x, rho))
    cands = {"rho0": rho0, "rho1": rho1, "rho_star": rho_star}
    plateau = min(cands, key=lambda k: abs(cands[k] - mid))
    return ShapeClass(mono, layer, plateau)


def expected_shape(config: InviscidConfig) -> ShapeClass:
    """Shape a small-viscosity profile must have for the given configuration."""
    k = config.kind
    if k == CONSTANT:
        return ShapeClass("constant", "none", "rho0")
    mono = "increasing" if config.rho1 > config.rho0 else "decreasing"
    if k.startswith("LeftBL"):
        return ShapeClass(mono, "left", "rho1")
    if k.startswith("RightBL"):
        return ShapeClass(mono, "right", "rho0")
    if k == "InteriorShock":
        return ShapeClass(mono, "interior", "rho0" if config.shock_location > 0.5 else "rho1")
    return ShapeClass(mono, "double", "rho_star")


def profile_shape(vp: ViscousProfile, n=4001) -> ShapeClass:
    x = np.linspace(0.0, 1.0, n)
    cfg = vp.config
    return classify_shape(x, vp(x), cfg.rho0, cfg.rho1, cfg.rho_star)


def steepest_on_grid(vp: ViscousProfile, n=20001):
    """Maximizer of |rho'| over a uniform grid, refined on the dense output."""
    x = np.linspace(0.0, 1.0, n)
    j = int(np.argmax(np.abs(vp.derivative(x))))
    a, b = x[max(j - 1, 0)], x[min(j + 1, n - 1)]
    res = optimize.minimize_scalar(lambda t: -abs(vp.derivative(t)), bounds=(a, b), method="bounded",
                                   options={"xatol": 1e-13})
    return float(res.x)


# ------------------------------------------------------------ convergence study

_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)


def lp_distance(vp: ViscousProfile, limit: Callable, p, breaks=()):
    """||rho_nu - limit||_{L^p(0,1)} by composite Gauss-Legendre quadrature."""
    nodes = np.unique(np.concatenate([vp.x, [0.0, 1.0], np.asarray(breaks, dtype=float)]))
    nodes = nodes[(nodes >= 0) & (nodes <= 1)]
    a, b = nodes[:-1], nodes[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    xq = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    wq = (half[:, None] * _GL_W[None, :]).ravel()
    err = np.abs(vp(xq) - limit(xq))
    if math.isinf(p):
        return float(np.max(err))
    return float(np.sum(wq * err ** p) ** (1.0 / p))


def fit_slope(xs, ys):
    """Least-squares slope of log(ys) against log(xs)."""
    lx, ly = np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def _monotone_in_nu(nus, errs):
    order = np.argsort(nus)
    e = np.asarray(errs)[order]
    return bool(np.all(np.diff(e) > 0))


@dataclass
class ConvergenceTable:
    kind: str
    columns: list
    rows: list
    slopes: dict
    rejected: dict

    def as_dict(self):
        return {"kind": self.kind, "columns": self.columns, "rows": self.rows,
                "slopes": self.slopes, "rejected": self.rejected}


def convergence_study(data: GasBoundaryData, nu_list, p_list=(1, 2), jobs=1, rtol=1e-11, atol=1e-13,
                      shock_rtol=SHOCK_RTOL) -> ConvergenceTable:
    """L^p distances between viscous profiles and the inviscid limit across nu.

    Shocks are compared against the two-state limit jumping at the
    viscous location x_s(nu); the distance |x_s(nu) - r1/(r0 + r1)| is
    tabulated and fitted too.  Double characteristic layers also report
    error_L1 / (nu log(1/nu)).  Fits over non-monotone columns are rejected
    (slope None) but the rows are kept.
    """
    cfg = classify_inviscid(data, shock_rtol)
    if cfg.kind == CONSTANT:
        raise ParameterError("constant data have no layer to resolve")
    nus = [float(v) for v in nu_list]
    if len(nus) < 2 or math.log10(max(nus) / min(nus)) < 1.5 - 1e-12:
        raise ParameterError("the viscosity list must span at least 1.5 decades")

    def row(nu):
        vp = solve_isentropic_viscous(data, nu, rtol=rtol, atol=atol, shock_rtol=shock_rtol)
        out = {"nu": nu}
        breaks = ()
        limit = cfg.limit
        if cfg.kind == "InteriorShock":
            xs = vp.x_steep
            breaks = (xs,)

            def limit(x, xs=xs):
                return cfg.limit(x, x_shock=xs)

            out["x_s"] = xs
            out["x_s_error"] = abs(xs - cfg.shock_location)
        for p in p_list:
            out[f"error_L{p}"] = lp_distance(vp, limit, p, breaks)
        if cfg.kind == "DoubleCharacteristicBL" and 1 in p_list:
            out["L1_over_nulog"] = out["error_L1"] / (nu * math.log(1 / nu))
        return out

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            rows = list(pool.map(row, nus))
    else:
        rows = [row(v) for v in nus]
    columns = list(rows[0].keys())
    slopes, rejected = {}, {}
    fit_cols = [f"error_L{p}" for p in p_list] + (["x_s_error"] if cfg.kind == "InteriorShock" else [])
    for col in fit_cols:
        vals = [r[col] for r in rows]
        if not all(v > 0 for v in vals) or not _monotone_in_nu(nus, vals):
            slopes[col] = None
            rejected[col] = "non-monotone in nu"
        else:
            slopes[col] = fit_slope(nus, vals)
    if "L1_over_nulog" in columns:
        ratios = [r["L1_over_nulog"] for r in rows]
        slopes["L1_over_nulog_spread"] = max(ratios) / min(ratios)
    return ConvergenceTable(cfg.kind, columns, rows, slopes, rejected)


# ------------------------------------------------------------ large viscosity

@dataclass(frozen=True)
class FullGasParams:
    """Boundary data (rho0, u0, e0; u1, e1) and constants for the full-gas sweep.

    ``ratio`` is nu/alpha, held fixed across a sweep; ``eps`` sets the box
    eps < u, e < 1/eps that the limiting profile must respect.
    """

    u0: float
    e0: float
    u1: float
    e1: float
    Gamma: float = 0.4
    ratio: float = 1.0
    rho0: float = 1.0
    eps: float = 1e-3

    def __post_init__(self):
        for name in ("u0", "e0", "u1", "e1", "Gamma", "ratio", "rho0"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ParameterError(f"{name} must be a positive finite number, got {v}")
        if not 0 < self.eps < 1:
            raise ParameterError(f"eps must lie in (0, 1), got {self.eps}")


def lexact(x, u0, e0, u1, e1, alpha_over_nu):
    """Large-viscosity limit (u, e)(x) of the full-gas profile.

    u is linear; e solves e' = K - (alpha/nu)(u1 - u0) u with e(0) = e0 and
    e(1) = e1.
    """
    x = np.asarray(x, dtype=float)
    k = alpha_over_nu
    du = u1 - u0
    u = u0 + x * du
    e = e0 + x * (e1 - e0 + 0.5 * k * (u1 * u1 - u0 * u0)) - k * du * (u0 * x + 0.5 * du * x * x)
    return u, e


def lexact_derivative(x, u0, e0, u1, e1, alpha_over_nu):
    x = np.asarray(x, dtype=float)
    k = alpha_over_nu
    du = u1 - u0
    du_dx = np.full(x.shape, du)
    de_dx = e1 - e0 + 0.5 * k * (u1 * u1 - u0 * u0) - k * du * (u0 + du * x)
    return du_dx, de_dx


def large_visc_constants(params: FullGasParams, alpha, nu):
    """C2 of the formal limit B22(U) U_II' = C2 that reproduces ``lexact``."""
    k = alpha / nu
    K = params.e1 - params.e0 + 0.5 * k * (params.u1 ** 2 - params.u0 ** 2)
    return np.array([alpha * (params.u1 - params.u0), nu * K])


def _check_box(params):
    x = np.linspace(0.0, 1.0, 201)
    u, e = lexact(x, params.u0, params.e0, params.u1, params.e1, 1.0 / params.ratio)
    lo, hi = params.eps, 1.0 / params.eps
    if np.min(u) <= lo or np.min(e) <= lo or np.max(u) >= hi or np.max(e) >= hi:
        raise ParameterError("the limiting profile leaves the box eps < u, e < 1/eps")


def _h1_error(prof, params, k, n_panels=64, h=1e-5):
    gx, gw = np.polynomial.legendre.leggauss(8)
    edges = np.linspace(0.0, 1.0, n_panels + 1)
    a, b = edges[:-1], edges[1:]
    xq = (0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * gx[None, :]).ravel()
    wq = (0.5 * (b - a)[:, None] * gw[None, :]).ravel()
    U = prof(xq)[:, 1:]
    dU = (prof(xq + h)[:, 1:] - prof(xq - h)[:, 1:]) / (2 * h)
    u, e = lexact(xq, params.u0, params.e0, params.u1, params.e1, k)
    du, de = lexact_derivative(xq, params.u0, params.e0, params.u1, params.e1, k)
    sq = (U[:, 0] - u) ** 2 + (U[:, 1] - e) ** 2 + (dU[:, 0] - du) ** 2 + (dU[:, 1] - de) ** 2
    return float(math.sqrt(np.sum(wq * sq)))


@dataclass
class LargeViscTable:
    rows: list
    slope: Optional[float]

    def as_dict(self):
        return {"rows": self.rows, "slope": self.slope}


def full_gas_large_visc(params: FullGasParams, alpha_list, jobs=1, tol=1e-10, rtol=1e-10,
                        atol=1e-12) -> LargeViscTable:
    """H^1 distance between steady full-gas profiles and ``lexact`` across alpha.

    Each alpha uses nu = ratio * alpha.  Rows whose steady solve fails are
    kept with ``ok`` False and excluded from the slope fit.
    """
    from .system import full_gas

    _check_box(params)
    k = 1.0 / params.ratio

    def row(alpha):
        nu = params.ratio * alpha
        sys = full_gas(Gamma=params.Gamma, alpha=alpha, nu=nu)
        du, de = lexact_derivative(0.0, params.u0, params.e0, params.u1, params.e1, k)
        U0 = np.array([params.rho0, params.u0, params.e0])
        try:
            prof = solve_steady(sys, U0, [params.u1, params.e1], c2_guess=[float(du), float(de)],
                                tol=tol, rtol=rtol, atol=atol)
        except SteadyTubeError as exc:
            return {"alpha": alpha, "nu": nu, "h1_error": math.nan, "ok": False, "flag": str(exc)}
        end = prof(1.0)
        bc = float(max(abs(end[1] - params.u1), abs(end[2] - params.e1)))
        return {"alpha": alpha, "nu": nu, "h1_error": _h1_error(prof, params, k), "ok": True,
                "flag": "", "boundary_residual": bc}

    alphas = [float(a) for a in alpha_list]
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            rows = list(pool.map(row, alphas))
    else:
        rows = [row(a) for a in alphas]
    good = [r for r in rows if r["ok"] and r["h1_error"] > 0]
    slope = fit_slope([r["alpha"] for r in good], [r["h1_error"] for r in good]) if len(good) >= 2 else None
    return LargeViscTable(rows, slope)


@dataclass
class FormalPath:
    """Solution of the formal limit U_II' = B22(U)^{-1} C2 on [0, 1]."""

    sys: object
    c1: np.ndarray
    trajectory: object

    @property
    def x(self):
        return self.trajectory.nodes

    def __call__(self, x):
        def full(v):
            y = self.trajectory(v)
            uI = resolve_hyperbolic(self.sys, y, self.c1, np.zeros(self.sys.r))
            return np.concatenate([uI, y])

        if np.ndim(x) == 0:
            return full(float(x))
        return np.array([full(float(v)) for v in x])


def formal_large_visc_solve(sys, U0, c_tilde, rtol=1e-10, atol=1e-12) -> FormalPath:
    """Integrate the formal large-viscosity equations from U0.

    U_I follows from f_I(U) = f_I(U0).  Raises ShootingFailure if the path
    leaves the domain before x = 1.
    """
    U0 = sys.check_domain(U0)
    r = sys.r
    c1 = sys.f_I(U0)
    C = np.asarray(c_tilde, dtype=float).reshape(sys.m)
    guess = {"uI": U0[:r].copy()}

    def fld(x, y):
        uI = resolve_hyperbolic(sys, y, c1, guess["uI"])
        guess["uI"] = uI
        U = sys.check_domain(np.concatenate([uI, y]))
        return np.linalg.solve(sys.B22(U), C)

    traj = integrate_ivp(fld, (0.0, 1.0), U0[r:], rtol=rtol, atol=atol)
    if traj.status != COMPLETED:
        raise ShootingFailure(f"formal limit stopped at x = {traj.x_stop:.6g} ({traj.status})",
                              traj.status, traj.x_stop)
    return FormalPath(sys, c1, traj)


# ------------------------------------------------------------ cone

def _domain_test(domain, dim):
    if callable(domain):
        return domain
    kind = domain.get("kind")
    if kind == "ball":
        c = np.asarray(domain["center"], dtype=float).reshape(dim)
        R = float(domain["radius"])
        return lambda P: np.linalg.norm(P - c, axis=-1) <= R * (1 + 1e-12)
    if kind == "box":
        lo = np.asarray(domain["lo"], dtype=float).reshape(dim)
        hi = np.asarray(domain["hi"], dtype=float).reshape(dim)
        return lambda P: np.all((P >= lo - 1e-12) & (P <= hi + 1e-12), axis=-1)
    raise ParameterError(f"unknown domain kind {kind!r}")


def _sphere_samples(k, n, seed=0):
    if k == 1:
        return np.array([[1.0], [-1.0]])
    if k == 2:
        t = np.linspace(0, 2 * np.pi, n, endpoint=False)
        return np.column_stack([np.cos(t), np.sin(t)])
    g = np.random.default_rng(seed).standard_normal((n, k))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def cone_feasibility(beta0, beta1, U0II, U1II, domain, n_dirs=64, n_radial=33):
    """Half-angle theta = arccos(beta0/beta1) and whether the cone fits the domain.

    The cone has apex U0II, axis along U1II - U0II, half-angle theta and is
    cut off by the sphere of radius (beta1/beta0)|U1II - U0II| about the
    apex.  ``domain`` is a ball {"kind": "ball", "center", "radius"}, a box
    {"kind": "box", "lo", "hi"} or a predicate on points.  Containment is
    tested on the apex, the extreme generators and the cap.
    """
    if not 0 < beta0 <= beta1:
        raise ParameterError("need 0 < beta0 <= beta1")
    theta = math.acos(min(1.0, beta0 / beta1))
    U0 = np.atleast_1d(np.asarray(U0II, dtype=float))
    v = np.atleast_1d(np.asarray(U1II, dtype=float)) - U0
    dim = U0.size
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return theta, True
    inside = _domain_test(domain, dim)
    axis = v / norm
    length = beta1 / beta0 * norm
    if dim == 1 or theta == 0.0:
        dirs = axis[None, :]
        cap = axis[None, :]
    else:
        Q = np.linalg.qr(np.column_stack([axis, np.eye(dim)]))[0][:, 1:dim]
        q = _sphere_samples(dim - 1, n_dirs) @ Q.T
        dirs = math.cos(theta) * axis + math.sin(theta) * q
        phis = np.linspace(0.0, theta, n_radial)
        cap = (np.cos(phis)[:, None, None] * axis + np.sin(phis)[:, None, None] * q[None]).reshape(-1, dim)
    t = np.linspace(0.0, 1.0, n_radial)
    pts = np.concatenate([
        U0[None],
        (U0 + length * t[:, None, None] * dirs[None]).reshape(-1, dim),
        U0 + length * cap,
    ])
    if callable(domain):
        ok = all(bool(inside(P)) for P in pts)
    else:
        ok = bool(np.all(inside(pts)))
    return theta, ok
