"""Independent reference computations used by the test-suite."""
import numpy as np
import scipy.linalg as sla
from scipy import integrate


def cheb(N):
    """Chebyshev points on [0, 1] (x_0 = 1, x_N = 0) and the first-derivative matrix."""
    t = np.cos(np.pi * np.arange(N + 1) / N)
    c = np.hstack([2.0, np.ones(N - 1), 2.0]) * (-1.0) ** np.arange(N + 1)
    T = np.tile(t, (N + 1, 1)).T
    dT = T - T.T
    D = np.outer(c, 1.0 / c) / (dT + np.eye(N + 1))
    D -= np.diag(D.sum(axis=1))
    return (t + 1) / 2, 2 * D


def collocation_eigenvalues(A, B22, r, A0=None, N=200):
    """Eigenvalues of lambda A0 U + A U' = B U'' on [0, 1].

    Boundary conditions U(0) = 0 and U_II(1) = 0; B = diag(0, B22).
    Returns the finite generalized eigenvalues.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    A0 = np.eye(n) if A0 is None else np.asarray(A0, dtype=float)
    B = np.zeros((n, n))
    B[r:, r:] = B22
    x, D1 = cheb(N)
    D2 = D1 @ D1
    K = N + 1
    L = np.kron(B, D2) - np.kron(A, D1)
    M = np.kron(A0, np.eye(K))
    i0, i1 = N, 0  # node indices of x = 0 and x = 1
    for c in range(n):
        rows = [c * K + i0] + ([c * K + i1] if c >= r else [])
        for row in rows:
            L[row] = 0.0
            M[row] = 0.0
            L[row, row] = 1.0
    w = sla.eig(L, M, right=False)
    return w[np.isfinite(w)]


def integral_expm_quad(M):
    """int_0^1 exp(sM) ds by adaptive vector quadrature."""
    val, _ = integrate.quad_vec(lambda s: sla.expm(s * M), 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)
    return val


def isentropic_jacobians(rho, u, gamma=2.0, a=1.0):
    """Hand-written Jacobians of (rho, rho u) and (rho u, rho u^2 + a rho^gamma)."""
    A0 = np.array([[1.0, 0.0], [u, rho]])
    A = np.array([[u, rho], [u * u + a * gamma * rho ** (gamma - 1), 2 * rho * u]])
    return A0, A


def rk4_fixed(f, span, y0, n):
    """Classical RK4 with n equal steps."""
    x, h = span[0], (span[1] - span[0]) / n
    y = np.asarray(y0, dtype=float)
    for _ in range(n):
        k1 = f(x, y)
        k2 = f(x + h / 2, y + h / 2 * k1)
        k3 = f(x + h / 2, y + h / 2 * k2)
        k4 = f(x + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        x += h
    return y
