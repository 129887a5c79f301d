"""Evans function of the linearization about a steady profile.

The eigenvalue problem lam A0 V + (A V)' = (B V' + dB[V] U')' is written in
the flux variables Z = (V_II, F) with

    F = B V' + dB[V] U' - A V,     F' = lam A0 V,
    V_I = -A11^{-1} (F_I + A12 V_II),
    V_II' = B22^{-1} (F_II + A21 V_I + A22 V_II - dB22[V] U_II'),

a first-order system of size 2n - r.  Solutions with V(0) = 0 form an
(n - r)-dimensional space and solutions with V_II(1) = 0 an n-dimensional
one; D(lam) is the Wronskian of the two bases at x = 1.  With the bases
used here D(0) equals det dPhi at the profile.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import CubicSpline

from .errors import ParameterError, SteadyTubeError
from .ode import COMPLETED, LinearPropagation, integrate_linear_matrix
from .steady import SteadyProfile

SIGN_FLOOR = 1e-12


@dataclass(frozen=True)
class ScaledComplex:
    """A complex number exp(log_mag + i phase), safe across huge scales."""

    log_mag: float
    phase: float

    @classmethod
    def from_complex(cls, z, log_scale=0j):
        z = complex(z)
        if z == 0:
            return cls(-math.inf, 0.0)
        return cls(math.log(abs(z)) + log_scale.real, math.atan2(z.imag, z.real) + log_scale.imag)

    @property
    def value(self):
        if self.log_mag == -math.inf:
            return 0j
        return complex(math.exp(self.log_mag) * math.cos(self.phase),
                       math.exp(self.log_mag) * math.sin(self.phase))

    @property
    def abs(self):
        return 0.0 if self.log_mag == -math.inf else math.exp(self.log_mag)

    def sign_real(self, tol=1e-6):
        """+1 or -1 when the value is real within ``tol`` radians, else 0."""
        if self.log_mag == -math.inf:
            return 0
        c = math.cos(self.phase)
        if abs(math.sin(self.phase)) > tol:
            return 0
        return 1 if c > 0 else -1

    def __mul__(self, other):
        return ScaledComplex(self.log_mag + other.log_mag, self.phase + other.phase)

    def __truediv__(self, other):
        return ScaledComplex(self.log_mag - other.log_mag, self.phase - other.phase)

    def conj(self):
        return ScaledComplex(self.log_mag, -self.phase)

    def as_dict(self):
        return {"log_mag": self.log_mag, "phase": self.phase}


@dataclass(frozen=True)
class FluxState:
    """A point (V_II, F) of the flux system."""

    u_II: np.ndarray
    f: np.ndarray

    @property
    def vector(self):
        return np.concatenate([self.u_II, self.f])


@dataclass
class EvansSample:
    lam: complex
    d: ScaledComplex
    sign_real: int
    info: dict = field(default_factory=dict)


@dataclass
class StabilityVerdict:
    mu: int
    d_zero: ScaledComplex
    lambda_max_used: float
    real_axis_sign_changes: int
    real_roots: list
    samples: list

    def as_dict(self):
        return {"mu": self.mu, "d_zero": self.d_zero.as_dict(), "lambda_max_used": self.lambda_max_used,
                "real_axis_sign_changes": self.real_axis_sign_changes,
                "real_roots": [float(r) for r in self.real_roots]}


class FluxCoefficients:
    """x -> (M0(x), M1(x)) with M(x) = M0 + lam M1 along a profile."""

    def __init__(self, sys, profile):
        self.sys = sys
        self.profile = profile
        self.n, self.r, self.m = sys.n, sys.r, sys.m
        self._spline = None

    def spline(self, refine=4):
        """Cubic spline of (M0, M1) on the profile nodes, each interval split ``refine`` times.

        Profile nodes come from an error-controlled integration, so the
        spline error is far below the profile tolerance while evaluation is
        much cheaper than recomputing the Jacobians.
        """
        if self._spline is None:
            base = np.union1d(np.asarray(self.profile.x, dtype=float), np.linspace(0.0, 1.0, 33))
            base = base[(base >= 0.0) & (base <= 1.0)]
            pieces = [np.linspace(a, b, refine + 1)[:-1] for a, b in zip(base[:-1], base[1:])]
            grid = np.concatenate(pieces + [base[-1:]])
            vals = np.array([np.stack(self.blocks(x)) for x in grid])
            self._spline = CubicSpline(grid, vals, axis=0)
        return self._spline

    def blocks(self, x):
        sys, n, r, m = self.sys, self.n, self.r, self.m
        U, dU = self.profile.with_derivative(x)
        a0 = sys.A0(U)
        a = sys.A(U)
        b22 = sys.B22(U)
        gmat = sys.dB22_matrix(U, dU[r:])
        # V = T Z with Z = (V_II, F_I, F_II)
        T = np.zeros((n, m + n))
        if r:
            a11inv = np.linalg.inv(a[:r, :r])
            T[:r, :m] = -a11inv @ a[:r, r:]
            T[:r, m:m + r] = -a11inv
        T[r:, :m] = np.eye(m)
        top = (a[r:, :] - gmat) @ T
        top[:, m + r:] += np.eye(m)
        M0 = np.zeros((m + n, m + n))
        M0[:m] = np.linalg.solve(b22, top)
        M1 = np.zeros((m + n, m + n))
        M1[m:] = a0 @ T
        return M0, M1

    def reconstruct_v(self, x, z):
        """Full perturbation V = (V_I, V_II) from a flux state z at x."""
        sys, r, m = self.sys, self.r, self.m
        U = self.profile(x)
        a = sys.A(U)
        v2 = z[:m]
        if not r:
            return v2
        v1 = -np.linalg.solve(a[:r, :r], z[m:m + r] + a[:r, r:] @ v2)
        return np.concatenate([v1, v2])


def flux_coefficients(sys, profile):
    """The (cached) coefficient provider attached to a profile."""
    cache = profile.__dict__.setdefault("_flux_cache", {})
    key = id(sys)
    if key not in cache:
        cache[key] = (sys, FluxCoefficients(sys, profile))
    return cache[key][1]


def linearized_field(sys, profile, lam, exact=False):
    """Coefficient map x -> M(x) of the flux system at spectral parameter lam.

    By default the coefficients come from a cubic spline through exact
    evaluations on a refinement of the profile nodes; ``exact=True``
    evaluates the Jacobians at every call.
    """
    coeffs = flux_coefficients(sys, profile)
    lam = complex(lam)
    real = lam.imag == 0.0
    lam_used = lam.real if real else lam
    if exact:
        def M(x):
            M0, M1 = coeffs.blocks(x)
            return M0 + lam_used * M1
    else:
        spl = coeffs.spline()

        def M(x):
            m01 = spl(x)
            return m01[0] + lam_used * m01[1]

    return M


def boundary_bases(sys, profile):
    """Left (x = 0) and right (x = 1) initial bases in the flux variables."""
    n, r, m = sys.n, sys.r, sys.m
    left = np.zeros((m + n, m))
    left[m + r:, :] = sys.B22(profile(0.0))
    right = np.zeros((m + n, n))
    right[m:, :] = np.eye(n)
    return left, right


def propagate_constant(M, span, Y0, max_growth=2.0):
    """Exact propagation for constant M by matrix exponentials.

    The span is cut into pieces with |M| h <= max_growth and the block is
    re-orthonormalized after every piece, so the result has the same form
    as integrate_linear_matrix (Q block, log det R ledger, trace integral).
    """
    x0, x1 = span
    length = x1 - x0
    nrm = float(np.linalg.norm(M, 1))
    pieces = max(1, int(math.ceil(abs(length) * nrm / max_growth)))
    h = length / pieces
    step = sla.expm(M * h)
    Y = np.array(Y0, dtype=np.result_type(Y0, M))
    ledger = 0j
    for _ in range(pieces):
        Y = step @ Y
        Q, R = np.linalg.qr(Y)
        ledger += complex(np.sum(np.log(np.diag(R).astype(complex))))
        Y = Q
    return LinearPropagation(Y, ledger, complex(np.trace(M)) * length, COMPLETED, x1, pieces, pieces, [])


def _real_lambda(lam):
    lam = complex(lam)
    return lam.imag == 0.0


def evans_eval(sys, profile, lam, x_match=0.5, rtol=1e-8, atol=1e-10, exact=False) -> EvansSample:
    """Evans function D(lam), normalized as the Wronskian at x = 1.

    Both bases are propagated to ``x_match`` with QR renormalization; the
    result is independent of ``x_match`` up to integration error.
    """
    if not np.isfinite(complex(lam)):
        raise ParameterError("lambda must be finite")
    if not 0.0 <= x_match <= 1.0:
        raise ParameterError("matching point must lie in [0, 1]")
    M = linearized_field(sys, profile, lam, exact=exact)
    left, right = boundary_bases(sys, profile)
    if not _real_lambda(lam):
        left = left.astype(complex)
        right = right.astype(complex)
    if profile.info.get("constant", False):
        Mc = M(0.0)
        pl = propagate_constant(Mc, (0.0, x_match), left)
        pr = propagate_constant(Mc, (1.0, x_match), right)
    else:
        pl = integrate_linear_matrix(M, (0.0, x_match), left, rtol=rtol, atol=atol)
        pr = integrate_linear_matrix(M, (1.0, x_match), right, rtol=rtol, atol=atol, trace=True)
    if pl.status != COMPLETED or pr.status != COMPLETED:
        raise SteadyTubeError(f"basis propagation failed ({pl.status}/{pr.status})")
    mat = np.hstack([pl.Y_end, pr.Y_end])
    det = np.linalg.det(mat)
    smin = np.linalg.svd(mat, compute_uv=False)
    info = {"renorm_left": pl.n_renorm, "renorm_right": pr.n_renorm,
            "condition": float(smin[0] / smin[-1]) if smin[-1] > 0 else math.inf}
    # large condition numbers are expected next to eigenvalues, where D vanishes
    info["ill_conditioned"] = info["condition"] > 1e12
    log_scale = pl.ledger + pr.ledger - pr.trace_integral
    d = ScaledComplex.from_complex(det, log_scale)
    s = d.sign_real() if _real_lambda(lam) else 0
    return EvansSample(complex(lam), d, s, info)


def evans_at_zero(sys, profile, **kw):
    """D(0) and its comparison with det dPhi.

    Returns ``(d0, report)``; the report holds both signs, whether they
    agree and the ratio D(0)/det dPhi.  When both |D(0)| and |det dPhi| are
    below 1e-10 the comparison is skipped and ``degenerate`` is set.
    """
    sample = evans_eval(sys, profile, 0.0, **kw)
    d0 = sample.d
    det = profile.det_dphi
    report = {"sign_d0": sample.sign_real, "det_dphi": det, "degenerate": False}
    if det is None:
        report.update(sign_dphi=None, agree=None, ratio=None)
        return d0, report
    if d0.abs < 1e-10 and abs(det) < 1e-10:
        report.update(sign_dphi=0, agree=None, ratio=None, degenerate=True)
        return d0, report
    sdet = int(np.sign(det))
    ratio = d0.value.real / det if det != 0 else math.inf
    report.update(sign_dphi=sdet, agree=sdet == sample.sign_real, ratio=ratio)
    return d0, report


def default_lambda_max(sys, profile, n_points=65):
    """10 (1 + max_x |A|^2 / min eig B22) along the profile."""
    xs = np.linspace(0.0, 1.0, n_points)
    worst = 0.0
    bmin = math.inf
    for x in xs:
        U = profile(x)
        worst = max(worst, float(np.linalg.norm(sys.A(U), 2)) ** 2)
        bmin = min(bmin, float(np.min(np.linalg.eigvals(sys.B22(U)).real)))
    return 10.0 * (1.0 + worst / bmin)


def _map(fn, items, jobs):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(v) for v in items]


def stability_index(sys, profile, lambda_max=None, n_grid=64, jobs=1, bisect_tol=1e-6,
                    **kw) -> StabilityVerdict:
    """Stability index mu = sgn D(0) sgn D(lambda_max) with a real-axis scan.

    The scan uses ``n_grid`` points clustered toward 0 and bisects every sign
    change.  Points where |D| < 1e-12 are nudged; a persistent zero gives an
    indeterminate verdict mu = 0.
    """
    lmax = default_lambda_max(sys, profile) if lambda_max is None else float(lambda_max)
    grid = lmax * (np.arange(n_grid) / (n_grid - 1)) ** 2

    def sign_at(lam):
        for shift in (0.0, 1e-7, -1e-7, 1e-5, -1e-5):
            lam_s = max(0.0, lam + shift * max(1.0, lmax))
            smp = evans_eval(sys, profile, lam_s, **kw)
            if smp.d.abs > SIGN_FLOOR and smp.sign_real != 0:
                return smp
        return smp

    samples = _map(sign_at, list(grid), jobs)
    signs = [s.sign_real if s.d.abs > SIGN_FLOOR else 0 for s in samples]
    roots = []
    for i in range(n_grid - 1):
        if signs[i] and signs[i + 1] and signs[i] != signs[i + 1]:
            lo, hi, slo = grid[i], grid[i + 1], signs[i]
            while hi - lo > bisect_tol * max(1.0, hi):
                mid = 0.5 * (lo + hi)
                sm = sign_at(mid).sign_real
                if sm == 0:
                    break
                if sm == slo:
                    lo = mid
                else:
                    hi = mid
            roots.append(0.5 * (lo + hi))
    mu = signs[0] * signs[-1]
    return StabilityVerdict(int(mu), samples[0].d, lmax, len(roots), roots, samples)


# ------------------------------------------------------------ contours

class ContourTooCoarse(SteadyTubeError, RuntimeError):
    """Consecutive phase samples differ by pi/2 or more at the finest level."""


def _phase_step(a, b):
    return (b.phase - a.phase + math.pi) % (2 * math.pi) - math.pi


def _lift(path_fn, t0, t1, evaluate, n_init, max_depth):
    """Adaptive samples of D along path_fn(t), t in [t0, t1]; total phase change."""
    ts = list(np.linspace(t0, t1, n_init + 1))
    vals = [evaluate(path_fn(t)) for t in ts]
    total = 0.0
    i = 0
    depth = {0: 0}
    while i < len(ts) - 1:
        step = _phase_step(vals[i], vals[i + 1])
        if abs(step) >= 0.5 * math.pi:
            level = depth.get(i, 0)
            if level >= max_depth:
                raise ContourTooCoarse(f"phase step {step:.3f} near lambda={path_fn(ts[i])}")
            tm = 0.5 * (ts[i] + ts[i + 1])
            ts.insert(i + 1, tm)
            vals.insert(i + 1, evaluate(path_fn(tm)))
            depth = {k if k <= i else k + 1: v for k, v in depth.items()}
            depth[i] = level + 1
            depth[i + 1] = level + 1
            continue
        total += step
        i += 1
    return total, ts, vals


def _check_nonzero(vals, floor=1e-8):
    for v in vals:
        if v.abs <= floor:
            raise SteadyTubeError("contour passes through (or near) a zero of D")


def winding_count(sys, profile, contour=None, n_init=32, max_depth=12, jobs=1, **kw):
    """Number of zeros of D enclosed by a closed contour (argument principle).

    ``contour`` is a dict: ``{"kind": "half_disk", "radius": R}`` (the
    boundary of the right half disk, using D(conj lam) = conj D(lam)) or
    ``{"kind": "circle", "center": c, "radius": rho, "turns": k}``.
    """
    contour = contour or {"kind": "half_disk", "radius": 20.0}
    kind = contour.get("kind", "half_disk")

    def evaluate(lam):
        return evans_eval(sys, profile, lam, **kw).d

    if kind == "half_disk":
        R = float(contour["radius"])
        # upper half: arc from R to iR, then the imaginary axis down to 0
        d_arc, _, v1 = _lift(lambda t: R * complex(math.cos(t), math.sin(t)), 0.0, 0.5 * math.pi,
                             evaluate, n_init, max_depth)
        d_axis, _, v2 = _lift(lambda t: complex(0.0, t), R, 0.0, evaluate, n_init, max_depth)
        _check_nonzero(v1 + v2)
        total = 2.0 * (d_arc + d_axis)
        turns = 1
    elif kind == "circle":
        c = complex(contour["center"])
        rho = float(contour["radius"])
        turns = int(contour.get("turns", 1))
        total, _, vals = _lift(lambda t: c + rho * complex(math.cos(t), math.sin(t)), 0.0, 2 * math.pi,
                               evaluate, n_init, max_depth)
        _check_nonzero(vals)
        total *= turns
    else:
        raise ParameterError(f"unknown contour kind {kind!r}")
    w = total / (2 * math.pi)
    count = int(round(w))
    if abs(w - count) > 1e-6 * max(1, turns):
        raise SteadyTubeError(f"non-integer winding {w}")
    return count


def contour_zeros(sys, profile, center, radius, n_nodes=64, refine=True, **kw):
    """Zeros of D inside a circle, from contour moments and secant refinement.

    The lifted logarithm L(theta) of D along the circle is made periodic by
    removing N theta (N the winding number); the power sums of the enclosed
    zeros then follow from periodic trapezoidal quadrature after integration
    by parts.
    """
    center = complex(center)
    rho = float(radius)

    def sample(n):
        th = 2 * math.pi * np.arange(n) / n
        lams = center + rho * np.exp(1j * th)
        vals = [evans_eval(sys, profile, lam, **kw).d for lam in lams]
        steps = [_phase_step(vals[i], vals[(i + 1) % n]) for i in range(n)]
        return th, lams, vals, steps

    n = n_nodes
    while True:
        th, lams, vals, steps = sample(n)
        if max(abs(s) for s in steps) < 0.25 * math.pi:
            break
        n *= 2
        if n > 4096:
            raise ContourTooCoarse("phase varies too fast along the circle")
    _check_nonzero(vals)
    N = int(round(sum(steps) / (2 * math.pi)))
    if N == 0:
        return []
    phase = np.concatenate([[0.0], np.cumsum(steps[:-1])]) + vals[0].phase
    logd = np.array([v.log_mag for v in vals]) + 1j * phase
    periodic = logd - 1j * N * th
    # recentre at the contour centre: w = lam - center
    w = lams - center
    dw = 1j * w
    sums = []
    for k in range(1, N + 1):
        integral = np.mean(-k * w ** (k - 1) * dw * periodic) * 2 * math.pi
        sums.append(integral / (2j * math.pi))
    # Newton identities: power sums -> elementary symmetric polynomials
    e = [1.0 + 0j]
    for k in range(1, N + 1):
        acc = sum((-1) ** (i - 1) * e[k - i] * sums[i - 1] for i in range(1, k + 1))
        e.append(acc / k)
    coeffs = [(-1) ** k * e[k] for k in range(N + 1)]
    roots = np.roots(coeffs) + center
    if refine:
        roots = np.array([_secant(sys, profile, z, rho, **kw) for z in roots])
    return sorted(roots, key=lambda z: (z.real, z.imag))


def _secant(sys, profile, z0, scale, iters=30, **kw):
    """Refine a zero of D by the secant method on the normalized value."""
    h = 1e-4 * max(scale, abs(z0), 1e-3)
    z1 = z0 + h
    ref = evans_eval(sys, profile, z0, **kw).d.log_mag

    def f(z):
        d = evans_eval(sys, profile, z, **kw).d
        return complex(ScaledComplex(d.log_mag - ref, d.phase).value)

    f0, f1 = f(z0), f(z1)
    for _ in range(iters):
        if f1 == f0:
            break
        z2 = z1 - f1 * (z1 - z0) / (f1 - f0)
        if abs(z2 - z0) > 2 * scale:
            return z0
        z0, f0 = z1, f1
        z1, f1 = z2, f(z2)
        if abs(z1 - z0) < 1e-12 * max(1.0, abs(z1)):
            break
    return z1


# ------------------------------------------------------------ standing shock

@dataclass
class StandingShockRow:
    eps: float
    d0: ScaledComplex
    d0_normalized: float
    det_dphi: float
    warning: str = ""


def standing_shock_evans(rho_minus, epsilons, gamma=2.0, a=1.0, m=1.0, nu=1.0, rtol=1e-10, atol=1e-12,
                         half_width=None, **kw):
    """D^eps(0) along the rescaled whole-line shock U(x) = Ubar((x - 1/2)/eps).

    The rescaled profile is the steady state of the isentropic system with
    viscosity nu*eps whose boundary data are its own traces.  Each row holds
    the raw D^eps(0) and the value scaled by eps^{-(n-r)} (the Jacobian of the
    map x -> x/eps on the parabolic block), together with det dPhi.
    """
    from .limits import GasBoundaryData, conjugate_state, whole_line_shock
    from .steady import jacobian_dphi
    from .system import isentropic_ns

    rows = []
    for eps in epsilons:
        if eps <= 0:
            raise ParameterError("epsilon must be positive")
        sys = isentropic_ns(gamma=gamma, a=a, nu=nu * eps)
        shock = whole_line_shock(rho_minus, m=m, gamma=gamma, a=a, nu=nu * eps, center=0.5,
                                 rtol=rtol, atol=atol)
        prof = shock.profile(sys)
        d0 = evans_eval(sys, prof, 0.0, **kw).d
        rho_p = conjugate_state(rho_minus, m, (a, gamma))
        warn = ""
        if abs(prof(0.0)[0] - rho_minus) < 1e-12 * rho_minus or abs(prof(1.0)[0] - rho_p) < 1e-12 * rho_p:
            warn = "trace data numerically at the rest points"
            warnings.warn(f"eps={eps}: {warn}", RuntimeWarning)
        try:
            det = float(np.linalg.det(jacobian_dphi(sys, prof(0.0), prof.c2, rtol, atol)))
        except SteadyTubeError:
            det = math.nan
        d0_real = d0.value.real
        if math.isfinite(det) and abs(det - d0_real) > 1e-3 * abs(d0_real):
            # forward shooting amplifies perturbations like exp(r x / (nu eps));
            # the finite-difference step then leaves the linear regime
            warn = (warn + "; " if warn else "") + "finite-difference det dPhi unreliable"
        scale = eps ** -(sys.n - sys.r)
        rows.append(StandingShockRow(float(eps), d0, d0.value.real * scale, det, warn))
    return rows
