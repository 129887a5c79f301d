"""Adaptive Dormand-Prince 5(4) integration with dense output.

The same stepper handles real and complex systems; the dtype follows the
initial value and the field.  ``integrate_linear_matrix`` adds QR
re-orthonormalization of a tracked column block with an exact log-scale
ledger, plus an optional running integral of the coefficient trace.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConstraintUnsolvable, DomainError, SteadyTubeError

COMPLETED, BLEW_UP, LEFT_DOMAIN = "completed", "blew_up", "left_domain"
BLOWUP_BOUND = 1e8
GUARD_EXCEPTIONS = (DomainError, ConstraintUnsolvable, np.linalg.LinAlgError, FloatingPointError)

# Dormand-Prince 5(4) tableau.
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# Difference between the 5th and 4th order weights (7 stages, FSAL).
E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# Continuous extension of order 4 (Shampine), y(t0 + s h) = y0 + h K^T P [s, s^2, s^3, s^4].
P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY, FAC_MIN, FAC_MAX = 0.9, 0.2, 10.0
PI_ALPHA, PI_BETA = 0.2 - 0.75 * 0.04, 0.04


def _rk_step(fun, x, y, f, h):
    """One DP5 step.  Returns (y_new, f_new, K) with K the 7 stage slopes."""
    K = np.empty((7,) + y.shape, dtype=np.result_type(y, f))
    K[0] = f
    for s in range(1, 6):
        K[s] = fun(x + C[s] * h, y + h * (A[s] @ K[:s]))
    y_new = y + h * (B @ K[:6])
    f_new = fun(x + h, y_new)
    K[6] = f_new
    return y_new, f_new, K


@dataclass
class Trajectory:
    """Accepted nodes, values and a piecewise quartic dense interpolant.

    ``nodes`` are stored in the order of integration (decreasing for a
    backward span).  ``status`` is one of completed, blew_up, left_domain;
    ``x_stop`` is where integration halted.
    """

    nodes: np.ndarray
    values: np.ndarray
    status: str
    x_stop: float
    _q: list = dc_field(default_factory=list, repr=False)
    n_steps: int = 0
    n_rejected: int = 0
    n_evals: int = 0

    @property
    def ok(self):
        return self.status == COMPLETED

    @property
    def y_end(self):
        return self.values[-1]

    def __call__(self, x):
        """Evaluate the dense interpolant at a scalar or array of points."""
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty((xs.size,) + self.values.shape[1:], dtype=self.values.dtype)
        nodes = self.nodes
        forward = len(nodes) < 2 or nodes[-1] >= nodes[0]
        for i, xv in enumerate(xs):
            out[i] = self._eval_one(xv, nodes, forward)
        return out[0] if np.ndim(x) == 0 else out

    def _eval_one(self, xv, nodes, forward):
        if len(nodes) == 1:
            return self.values[0]
        if forward:
            j = int(np.searchsorted(nodes, xv, side="right")) - 1
        else:
            j = int(np.searchsorted(-nodes, -xv, side="right")) - 1
        j = min(max(j, 0), len(nodes) - 2)
        x0 = nodes[j]
        h = nodes[j + 1] - x0
        s = (xv - x0) / h
        if s == 0.0:
            return self.values[j]
        if s == 1.0:
            return self.values[j + 1]
        q = self._q[j]
        return self.values[j] + h * (q @ np.array([s, s * s, s ** 3, s ** 4]))


def _error_norm(err, y, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.max(np.abs(err) / scale))


def _initial_step(fun, x0, y0, f0, direction, rtol, atol, span):
    scale = atol + rtol * np.abs(y0)
    d0 = float(np.max(np.abs(y0) / scale))
    d1 = float(np.max(np.abs(f0) / scale))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + direction * h0 * f0
    f1 = fun(x0 + direction * h0, y1)
    d2 = float(np.max(np.abs(f1 - f0) / scale)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


class _Stepper:
    """Adaptive DP5(4) driver with proportional-integral step control."""

    def __init__(self, fun, x0, x1, y0, rtol, atol, max_step, guard):
        if rtol <= 0 or atol <= 0:
            raise ValueError("rtol and atol must be positive")
        self.fun = fun
        self.x = float(x0)
        self.x1 = float(x1)
        self.direction = 1.0 if x1 >= x0 else -1.0
        self.rtol, self.atol = rtol, atol
        self.max_step = math.inf if max_step is None else float(max_step)
        self.guard = guard
        self.y = y0
        self.n_evals = 0
        self.f = self._call(self.x, y0)
        span = abs(self.x1 - self.x)
        self.h = min(_initial_step(self._call, self.x, y0, self.f, self.direction, rtol, atol, span),
                     self.max_step) if span > 0 else 0.0
        self.err_old = 1e-4
        self.n_rejected = 0

    def _call(self, x, y):
        self.n_evals += 1
        return np.asarray(self.fun(x, y))

    def reset(self, y):
        """Replace the current state (after an external renormalization)."""
        self.y = y
        self.f = self._call(self.x, y)

    def step(self):
        """Take one accepted step.  Returns (status, K, h) with status None while running."""
        rejected = False
        domain_hit = False
        while True:
            remaining = abs(self.x1 - self.x)
            h = min(self.h, remaining, self.max_step)
            if h < 16 * np.finfo(float).eps * max(1.0, abs(self.x)):
                return (LEFT_DOMAIN if domain_hit else BLEW_UP), None, 0.0
            if remaining - h < 1e-12 * max(1.0, abs(self.x1)):
                h = remaining
            hs = self.direction * h
            try:
                y_new, f_new, K = _rk_step(self._call, self.x, self.y, self.f, hs)
            except GUARD_EXCEPTIONS:
                self.h = 0.5 * h
                domain_hit = True
                rejected = True
                self.n_rejected += 1
                continue
            if not np.all(np.isfinite(y_new)):
                self.h = 0.5 * h
                rejected = True
                self.n_rejected += 1
                continue
            err = _error_norm(hs * (E @ K), self.y, y_new, self.rtol, self.atol)
            if err <= 1.0:
                if err == 0.0:
                    fac = FAC_MAX
                else:
                    fac = SAFETY * err ** -PI_ALPHA * self.err_old ** PI_BETA
                    fac = min(FAC_MAX, max(FAC_MIN, fac))
                if rejected:
                    fac = min(1.0, fac)
                self.err_old = max(err, 1e-4)
                x_new = self.x1 if h == remaining else self.x + hs
                if self.guard is not None and not self.guard(x_new, y_new):
                    return LEFT_DOMAIN, None, hs
                self.x, self.y, self.f = x_new, y_new, f_new
                self.h = h * fac
                if np.max(np.abs(y_new)) > BLOWUP_BOUND:
                    return BLEW_UP, K, hs
                return None, K, hs
            fac = max(FAC_MIN, SAFETY * err ** -0.2)
            self.h = h * fac
            rejected = True
            self.n_rejected += 1

    @property
    def done(self):
        return self.x == self.x1


def integrate_ivp(field, span, y0, rtol=1e-8, atol=1e-10, domain_guard=None, max_step=None):
    """Integrate y' = field(x, y) from span[0] to span[1].

    ``domain_guard(x, y)`` returning False stops integration with status
    left_domain; so does the field raising a domain or constraint error.
    The integration stops with status blew_up once max|y| exceeds 1e8 or the
    step size underflows.  A backward span (span[1] < span[0]) integrates in
    decreasing x.
    """
    x0, x1 = float(span[0]), float(span[1])
    y0 = np.atleast_1d(np.asarray(y0))
    if y0.ndim != 1:
        raise ValueError("y0 must be a scalar or a 1-d array")
    if not np.issubdtype(y0.dtype, np.complexfloating):
        y0 = y0.astype(float)
    if x0 == x1:
        return Trajectory(np.array([x0]), y0[None].copy(), COMPLETED, x0)
    try:
        st = _Stepper(field, x0, x1, y0, rtol, atol, max_step, domain_guard)
    except GUARD_EXCEPTIONS:
        return Trajectory(np.array([x0]), y0[None].copy(), LEFT_DOMAIN, x0)
    y0 = y0.astype(np.result_type(y0, st.f))
    st.y = y0
    nodes, values, qs = [x0], [y0], []
    status = COMPLETED
    while not st.done:
        stat, K, _ = st.step()
        if K is not None:
            nodes.append(st.x)
            values.append(st.y)
            qs.append(K.T @ P)
        if stat is not None:
            status = stat
            break
    traj = Trajectory(np.array(nodes), np.array(values), status, st.x, qs,
                      n_steps=len(nodes) - 1, n_rejected=st.n_rejected, n_evals=st.n_evals)
    return traj


def integrate_on_nodes(field, nodes, y0):
    """Apply one DP5 step per interval of a prescribed node sequence.

    No error control is performed.  Used to difference solutions computed on a
    frozen step sequence, which makes the result a smooth function of y0.
    """
    y = np.asarray(y0)
    y = y.astype(np.result_type(y, float))
    f = np.asarray(field(nodes[0], y))
    for x, xn in zip(nodes[:-1], nodes[1:]):
        y, f, _ = _rk_step(field, x, y, f, xn - x)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError("non-finite value on a frozen step sequence")
    return y


class RankDeficientBlock(SteadyTubeError, ArithmeticError):
    """A tracked column block lost rank during propagation."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


@dataclass
class LinearPropagation:
    """Result of integrate_linear_matrix.

    The true (unnormalized) solution at the end point equals
    ``Y_end`` with its determinant (or any maximal minor) scaled by
    ``exp(ledger)``; i.e. Y_true = Y_end @ R with log det R = ledger.
    ``trace_integral`` is the integral of tr M along the span when requested.
    """

    Y_end: np.ndarray
    ledger: complex
    trace_integral: complex
    status: str
    x_stop: float
    n_steps: int
    n_renorm: int
    checkpoints: list


def integrate_linear_matrix(coeff, span, Y0, rtol=1e-8, atol=1e-10, renorm=True,
                            trace=False, norm_band=(1e-4, 1e4), rank_tol=1e-12, max_step=None):
    """Integrate Y' = M(x) Y with optional QR renormalization.

    When a column norm leaves ``norm_band`` after an accepted step, Y is
    replaced by Q from Y = Q R and log det R is added to the ledger.  With
    ``trace=True`` the integral of tr M(x) is accumulated with the same
    quadrature weights as the solution, so it is consistent with the step
    sequence.
    """
    x0, x1 = float(span[0]), float(span[1])
    Y0 = np.atleast_2d(np.asarray(Y0))
    Y0 = Y0.astype(np.result_type(Y0, float))
    d, k = Y0.shape
    tr_holder = {}

    def fun(x, z):
        M = np.asarray(coeff(x))
        Y = z[: d * k].reshape(d, k)
        out = (M @ Y).ravel()
        if trace:
            return np.concatenate([out, [np.trace(M)]])
        return out

    z0 = Y0.ravel()
    if trace:
        z0 = np.concatenate([z0, [0.0]])
    if x0 == x1:
        return LinearPropagation(Y0.copy(), 0j, 0j, COMPLETED, x0, 0, 0, [])
    st = _Stepper(fun, x0, x1, z0, rtol, atol, max_step, None)
    z = z0.astype(np.result_type(z0, st.f))
    st.y = z
    ledger = 0j
    n_renorm = 0
    checkpoints = []
    status = COMPLETED
    steps = 0
    lo, hi = norm_band
    while not st.done:
        stat, K, _ = st.step()
        steps += 1
        if stat is not None:
            status = stat
            # with renormalization the block itself never exceeds the bound
            if stat == BLEW_UP and K is not None and renorm:
                status = None
            else:
                break
        Y = st.y[: d * k].reshape(d, k)
        norms = np.linalg.norm(Y, axis=0)
        if renorm and (np.any(norms < lo) or np.any(norms > hi) or status is None):
            Q, R = np.linalg.qr(Y)
            diag = np.diag(R)
            if np.min(np.abs(diag)) <= rank_tol * np.max(np.abs(diag)):
                raise RankDeficientBlock(f"propagated block lost rank near x={st.x:.6g}", x=st.x)
            ledger += complex(np.sum(np.log(diag.astype(complex))))
            n_renorm += 1
            checkpoints.append(st.x)
            znew = Q.ravel()
            if trace:
                znew = np.concatenate([znew, st.y[-1:]])
            st.reset(znew.astype(st.y.dtype))
            status = COMPLETED
    Y = st.y[: d * k].reshape(d, k)
    tr = complex(st.y[-1]) if trace else 0j
    return LinearPropagation(Y, ledger, tr, status, st.x, steps, n_renorm, checkpoints)
