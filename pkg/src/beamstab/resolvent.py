"""Constructive resolvent of the closed-loop generator.

For ``lam > 0`` and data ``z = (f, g, h)`` the equation ``(lam I - A) y = z``
reduces to the decoupled boundary value problems

    u'''' + gamma_j u = f*_j / Lambda_jj,   gamma_j = lam^2 / Lambda_jj,

with ``f* = lam f + g``, the clamp ``u(0) = u'(0) = 0``, the free-end
moment ``u''(1) = 0`` and the coupled tip row ``-u'''(1) + G u(1) = h*``.
The solution is a combination of four homogeneous functions per component
plus a convolution with the kernel ``kappa`` (the impulse response of the
scalar beam ODE), and the coefficients solve the ``4n x 4n`` system ``Xi``.

Eliminating ``eta`` through ``eta = -F u'''(1) + B M v(1)`` gives

    G  = lam F^-1 (lam I + B)^-1 B (lam M + K)
    h* = F^-1 (lam I + B)^-1 (h + B (lam M + K) f(1)).
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
import scipy.linalg as sla

from .exceptions import NumericalError, ValidationError
from .model import ControllerGains, SystemMatrices, check_compatible

FLAG_THRESHOLD = 1e-10
SERIES_SWITCH = 1.0  # a*x below which kernels use the power series
RESCALE_RHO = 50.0


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not lam > 0 or not np.isfinite(lam):
        raise ValidationError(f"lambda must be positive and finite, got {lam}")
    return lam


def gamma_rho(lam: float, sys: SystemMatrices):
    lam = _check_lambda(lam)
    gamma = lam**2 / sys.lambda_diag
    return gamma, gamma**0.25


def _shifted_b_inverse(lam: float, g: ControllerGains) -> np.ndarray:
    A = lam * np.eye(g.n) + g.B
    sv = np.linalg.svd(A, compute_uv=False)
    if not sv[-1] > 1e-12:
        raise NumericalError(f"lam I + B is singular at lambda={lam:g}")
    return np.linalg.inv(A)


def compute_g_matrix(lam: float, sys: SystemMatrices, g: ControllerGains) -> np.ndarray:
    """Tip coupling ``G`` of the boundary row ``-u'''(1) + G u(1) = h*``."""
    lam = _check_lambda(lam)
    check_compatible(sys, g)
    R = _shifted_b_inverse(lam, g)
    return lam * np.linalg.solve(sys.F, R @ g.B @ (lam * sys.M + g.K))


def h_star(lam: float, sys: SystemMatrices, g: ControllerGains, h, f1) -> np.ndarray:
    """Right-hand side of the tip row for the datum ``eta``-part ``h`` and ``f(1)``."""
    lam = _check_lambda(lam)
    R = _shifted_b_inverse(lam, g)
    rhs = np.asarray(h, dtype=float) + g.B @ (lam * sys.M + g.K) @ np.asarray(f1, dtype=float)
    return np.linalg.solve(sys.F, R @ rhs)


# -- kernel ------------------------------------------------------------------------------


def _kappa_series(gamma: float, x: np.ndarray, d: int) -> np.ndarray:
    # kappa^(d)(x) = sum_k (-gamma)^k x^(4k+3-d) / (4k+3-d)!,  d <= 3
    out = np.zeros_like(x)
    term_pow = 3 - d
    for k in range(40):
        p = 4 * k + term_pow
        c = (-gamma) ** k / factorial(p)
        t = c * x**p
        out += t
        if k > 2 and np.all(np.abs(t) <= 1e-18 * np.maximum(np.abs(out), 1e-300)):
            break
    return out


def _kappa_closed(a: float, x: np.ndarray, d: int) -> np.ndarray:
    ax = a * x
    ch, sh, c, s = np.cosh(ax), np.sinh(ax), np.cos(ax), np.sin(ax)
    if d == 0:
        return (ch * s - sh * c) / (4 * a**3)
    if d == 1:
        return sh * s / (2 * a**2)
    if d == 2:
        return (ch * s + sh * c) / (2 * a)
    return ch * c


def kappa(gamma: float, x, derivative: int = 0) -> np.ndarray:
    """Derivative ``derivative`` of the scalar kernel for ``u'''' + gamma u = 0``.

    ``kappa`` has ``kappa(0) = kappa'(0) = kappa''(0) = 0`` and ``kappa'''(0) = 1``.
    """
    if gamma < 0:
        raise ValidationError("gamma must be non-negative")
    d = int(derivative)
    if d < 0:
        raise ValidationError("derivative must be >= 0")
    x = np.asarray(x, dtype=float)
    if d >= 4:
        return -gamma * kappa(gamma, x, d - 4)
    a = gamma**0.25 / np.sqrt(2.0)
    small = a * np.abs(x) <= SERIES_SWITCH
    out = np.empty_like(x)
    if np.any(small):
        out[small] = _kappa_series(gamma, x[small], d)
    if np.any(~small):
        out[~small] = _kappa_closed(a, x[~small], d)
    return out


def gamma_matrix(gamma: float) -> np.ndarray:
    """Companion matrix of ``u'''' = -gamma u`` acting on ``(u, u', u'', u''')``."""
    G = np.zeros((4, 4))
    G[:3, 1:] = np.eye(3)
    G[3, 0] = -gamma
    return G


def convolution_kernel(lam: float, sys: SystemMatrices, j: int, x, derivative: int = 0, method: str = "closed"):
    """``kappa_{lam,j}`` at ``x`` either in closed form or from ``expm(Gamma x)``."""
    gamma, _ = gamma_rho(lam, sys)
    gj = float(gamma[j])
    if method == "closed":
        return kappa(gj, x, derivative)
    if method != "expm":
        raise ValidationError(f"unknown method {method!r}")
    if not 0 <= derivative <= 3:
        raise ValidationError("expm method supports derivatives 0..3")
    Gm = gamma_matrix(gj)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    vals = np.array([sla.expm(Gm * xi)[derivative, 3] for xi in xs])
    return vals if np.ndim(x) else vals[0]


# -- homogeneous bases -------------------------------------------------------------------


def homogeneous_basis(lam: float, sys: SystemMatrices, x, rescale: bool | None = None) -> np.ndarray:
    """Exponential-trigonometric basis and its first three derivatives.

    Returns ``B[..., j, d, k]``: derivative ``d`` of function ``k`` of component
    ``j``, with functions ``e^{ax}cos(ax), e^{ax}sin(ax), e^{-ax}cos(ax),
    e^{-ax}sin(ax)`` and ``a = rho / sqrt(2)``.  For ``rho > 50`` (or when
    ``rescale`` is true) the growing pair is multiplied by ``e^{-a}``.
    """
    _, rho = gamma_rho(lam, sys)
    a = rho / np.sqrt(2.0)
    x = np.asarray(x, dtype=float)
    xs = x[..., None]  # broadcast over components
    scale = np.zeros_like(a)
    if rescale is None:
        scale = np.where(rho > RESCALE_RHO, -a, 0.0)
    elif rescale:
        scale = -a
    out = np.empty(x.shape + (sys.n, 4, 4))
    for sgn, col in ((1.0, 0), (-1.0, 2)):
        r = a * (sgn + 1j)
        shift = scale if sgn > 0 else 0.0
        e = np.exp(r * xs + shift)
        for d in range(4):
            z = r**d * e
            out[..., d, col] = z.real
            out[..., d, col + 1] = z.imag
    return out


def cauchy_basis(lam: float, sys: SystemMatrices, x) -> np.ndarray:
    """Basis ``(kappa''', kappa'', kappa', kappa)`` with derivatives 0..3, same layout.

    At ``x = 0`` the value/derivative block is the identity, so the clamp rows
    of ``Xi`` are trivially well conditioned for every ``lam``.
    """
    gamma, _ = gamma_rho(lam, sys)
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (sys.n, 4, 4))
    for j, gj in enumerate(gamma):
        cache = {}
        for k in range(4):
            for d in range(4):
                order = 3 - k + d
                if order not in cache:
                    cache[order] = kappa(float(gj), x, order)
                out[..., j, d, k] = cache[order]
    return out


BASES = {"cauchy": cauchy_basis, "exponential": homogeneous_basis}


@dataclass(frozen=True)
class XiSystem:
    lam: float
    Xi: np.ndarray
    gamma: np.ndarray
    rho: np.ndarray
    G: np.ndarray
    detXi: float
    logabsdet: float
    normalized_det: float  # |det| over the product of row norms, in [0, 1]
    cond: float
    basis: str

    @property
    def flagged(self) -> bool:
        return not self.normalized_det > FLAG_THRESHOLD


def build_xi(lam: float, sys: SystemMatrices, g: ControllerGains, basis: str = "cauchy") -> XiSystem:
    """Assemble ``Xi(lam)``; column ``4j + k`` is coefficient ``k`` of component ``j``.

    Rows are grouped by condition: ``u_j(0)``, ``u_j'(0)``, ``u_j''(1)`` and the
    coupled tip row ``-u_j'''(1) + sum_l G_jl u_l(1)``.
    """
    if basis not in BASES:
        raise ValidationError(f"unknown basis {basis!r}")
    lam = _check_lambda(lam)
    n = sys.n
    G = compute_g_matrix(lam, sys, g)
    gamma, rho = gamma_rho(lam, sys)
    at0 = BASES[basis](lam, sys, 0.0)
    at1 = BASES[basis](lam, sys, 1.0)
    Xi = np.zeros((4 * n, 4 * n))
    for j in range(n):
        cols = slice(4 * j, 4 * j + 4)
        Xi[j, cols] = at0[j, 0]
        Xi[n + j, cols] = at0[j, 1]
        Xi[2 * n + j, cols] = at1[j, 2]
        Xi[3 * n + j, cols] = -at1[j, 3]
        for l in range(n):
            Xi[3 * n + j, 4 * l: 4 * l + 4] += G[j, l] * at1[l, 0]
    sign, logdet = np.linalg.slogdet(Xi)
    rownorm = np.linalg.norm(Xi, axis=1)
    if np.any(rownorm == 0) or sign == 0:
        normalized = 0.0
    else:
        normalized = float(np.exp(logdet - np.sum(np.log(rownorm))))
    det = float(sign * np.exp(logdet)) if sign != 0 else 0.0
    cond = float(np.linalg.cond(Xi))
    return XiSystem(lam, Xi, gamma, rho, G, det, float(logdet), normalized, cond, basis)


@dataclass(frozen=True)
class XiScanRow:
    lam: float
    det: float
    normalized_det: float
    cond: float
    flagged: bool


def xi_scan(sys: SystemMatrices, g: ControllerGains, lambdas, basis: str = "cauchy") -> list[XiScanRow]:
    rows = []
    for lam in np.asarray(lambdas, dtype=float).ravel():
        xs = build_xi(lam, sys, g, basis)
        rows.append(XiScanRow(float(lam), xs.detXi, xs.normalized_det, xs.cond, xs.flagged))
    return rows


# -- solve ----------------------------------------------------------------------------------


@dataclass(frozen=True)
class ResolventData:
    """Datum ``z = (f, g, h)`` sampled on the uniform grid ``x_i = i / nx``."""

    lam: float
    f: np.ndarray  # (nx+1, n)
    g: np.ndarray  # (nx+1, n)
    h: np.ndarray  # (n,)

    def __post_init__(self):
        _check_lambda(self.lam)
        f = np.atleast_2d(np.asarray(self.f, dtype=float))
        gg = np.atleast_2d(np.asarray(self.g, dtype=float))
        if f.shape != gg.shape:
            raise ValidationError("f and g must share a grid")
        if f.shape[0] < 9:
            raise ValidationError("need at least 8 grid intervals")
        if f.shape[1] != np.size(self.h):
            raise ValidationError("h length must match the number of components")
        if np.max(np.abs(f[0])) > 1e-12 * max(1.0, np.max(np.abs(f))):
            raise ValidationError("f must vanish at the clamped end")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", gg)
        object.__setattr__(self, "h", np.asarray(self.h, dtype=float).ravel())

    @property
    def nx(self) -> int:
        return self.f.shape[0] - 1

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.nx + 1) / self.nx


@dataclass(frozen=True)
class ResolventSolution:
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    eta: np.ndarray
    coeffs: np.ndarray  # (n, 4)
    uxxx1: np.ndarray
    xi: XiSystem


def quadrature_weights(nx: int) -> np.ndarray:
    """Lower-triangular ``W`` with ``int_0^{x_i} q ~ sum_k W[i,k] q(x_k)``.

    Composite Simpson, with a closing 3/8 panel for odd ``i`` (trapezoid at ``i=1``).
    """
    h = 1.0 / nx
    W = np.zeros((nx + 1, nx + 1))
    for i in range(1, nx + 1):
        if i == 1:
            W[1, :2] = h / 2
            continue
        m = i if i % 2 == 0 else i - 3
        if m > 0:
            w = np.ones(m + 1)
            w[1:m:2] = 4.0
            w[2:m:2] = 2.0
            W[i, : m + 1] += w * h / 3
        if i % 2:
            W[i, m: m + 4] += np.array([1.0, 3.0, 3.0, 1.0]) * 3 * h / 8
    return W


def convolution_integral(gamma: float, rhs: np.ndarray, derivative: int = 0) -> np.ndarray:
    """Direct quadrature of ``int_0^x kappa^(d)(x - s) rhs(s) ds`` at every node.

    Accurate to O(h^4) pointwise, but the panel rule alternates with the
    parity of the node, so the error is not smooth in x.
    """
    nx = rhs.shape[0] - 1
    idx = np.arange(nx + 1)
    lag = np.clip(idx[:, None] - idx[None, :], 0, None) / nx
    return (quadrature_weights(nx) * kappa(gamma, lag, derivative)) @ rhs


def _midpoints(q: np.ndarray) -> np.ndarray:
    # cubic interpolation to cell midpoints, centred away from the ends
    N = q.shape[0] - 1
    mid = np.empty(N)
    mid[1:N - 1] = (-q[:N - 2] + 9 * q[1:N - 1] + 9 * q[2:N] - q[3:N + 1]) / 16
    left = np.array([5.0, 15.0, -5.0, 1.0]) / 16
    mid[0] = left @ q[:4]
    mid[N - 1] = left[::-1] @ q[N - 3:]
    return mid


def particular_solution(gamma: float, rhs: np.ndarray) -> np.ndarray:
    """Derivatives 0..3 of ``int_0^x kappa(x - s) rhs(s) ds`` at every node, shape ``(nx+1, 4)``.

    The vector of derivatives is propagated cell by cell with ``expm(Gamma h)``
    and the forcing integral over each cell uses Simpson's rule with a
    cubic-interpolated midpoint, so the O(h^4) error is uniform in x and
    survives repeated differencing.
    """
    rhs = np.asarray(rhs, dtype=float)
    N = rhs.shape[0] - 1
    h = 1.0 / N
    Gm = gamma_matrix(gamma)
    E = sla.expm(Gm * h)
    Eh = sla.expm(Gm * h / 2)
    mid = _midpoints(rhs)
    a, b = E[:, 3] * h / 6, 4 * Eh[:, 3] * h / 6
    Y = np.zeros((N + 1, 4))
    for i in range(N):
        Y[i + 1] = E @ Y[i] + a * rhs[i] + b * mid[i]
        Y[i + 1, 3] += rhs[i + 1] * h / 6
    return Y


def resolvent_solve(data: ResolventData, sys: SystemMatrices, g: ControllerGains, basis: str = "cauchy") -> ResolventSolution:
    """Solve ``(lam I - A) y = z`` for ``y = (u, v, eta)`` on the data grid."""
    check_compatible(sys, g)
    n = sys.n
    if data.f.shape[1] != n:
        raise ValidationError("data has the wrong number of components")
    lam = data.lam
    xi = build_xi(lam, sys, g, basis)
    if xi.flagged:
        raise NumericalError(
            f"Xi is near singular at lambda={lam:g} (normalized det {xi.normalized_det:.3e}, cond {xi.cond:.3e})"
        )
    x = data.x
    nx = data.nx
    fstar = (lam * data.f + data.g) / sys.lambda_diag
    up = np.empty((nx + 1, n))
    up_tip = np.zeros((4, n))  # derivatives 0..3 at x = 1
    for j in range(n):
        Y = particular_solution(float(xi.gamma[j]), fstar[:, j])
        up[:, j] = Y[:, 0]
        up_tip[:, j] = Y[-1]
    hs = h_star(lam, sys, g, data.h, data.f[-1])
    rhs = np.zeros(4 * n)
    rhs[2 * n: 3 * n] = -up_tip[2]
    rhs[3 * n:] = hs + up_tip[3] - xi.G @ up_tip[0]
    C = np.linalg.solve(xi.Xi, rhs).reshape(n, 4)
    Bx = BASES[basis](lam, sys, x)
    B1 = BASES[basis](lam, sys, 1.0)
    u = up + np.einsum("ijk,jk->ij", Bx[:, :, 0, :], C)
    uxxx1 = up_tip[3] + np.einsum("jk,jk->j", B1[:, 3, :], C)
    v = lam * u - data.f
    eta = -sys.F @ uxxx1 + g.B @ sys.M @ v[-1]
    return ResolventSolution(x, u, v, eta, C, uxxx1, xi)


# -- independent forward operator -------------------------------------------------------


def fd_weights(offsets, m: int) -> np.ndarray:
    """Weights ``w`` with ``sum_k w_k q(x + o_k h) ~ h^m q^(m)(x)`` (exact for degree < len)."""
    o = np.asarray(offsets, dtype=float)
    p = len(o)
    V = np.vander(o, p, increasing=True).T
    rhs = np.zeros(p)
    rhs[m] = factorial(m)
    return np.linalg.solve(V, rhs)


def fourth_derivative(U: np.ndarray, h: float) -> np.ndarray:
    """Second-order ``u''''`` at every node (one-sided 6-point stencils near the ends)."""
    U = np.asarray(U, dtype=float)
    N = U.shape[0] - 1
    out = np.empty_like(U)
    out[2:-2] = (U[:-4] - 4 * U[1:-3] + 6 * U[2:-2] - 4 * U[3:-1] + U[4:]) / h**4
    for i, base in ((0, 0), (1, 0), (N - 1, N - 5), (N, N - 5)):
        w = fd_weights(np.arange(base, base + 6) - i, 4)
        out[i] = np.tensordot(w, U[base: base + 6], axes=1) / h**4
    return out


def third_derivative_tip(U: np.ndarray, h: float) -> np.ndarray:
    """Second-order backward ``u'''(1)`` from the last five nodes."""
    w = fd_weights(np.arange(-4, 1), 3)
    return np.tensordot(w, U[-5:], axes=1) / h**3


def apply_forward(lam: float, u, v, eta, sys: SystemMatrices, g: ControllerGains):
    """Apply ``lam I - A`` with second-order differences.

    Returns ``(f, g, h, domain)`` where ``domain`` is the defect of the
    relation ``eta = -F u'''(1) + B M v(1)``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    eta = np.asarray(eta, dtype=float)
    h = 1.0 / (u.shape[0] - 1)
    f = lam * u - v
    gg = lam * v + fourth_derivative(u, h) * sys.lambda_diag
    hh = (lam * np.eye(g.n) + g.B) @ eta + g.B @ (g.K - g.B @ sys.M) @ v[-1]
    domain = eta - (-sys.F @ third_derivative_tip(u, h) + g.B @ sys.M @ v[-1])
    return f, gg, hh, domain


def grid_norm(*parts) -> float:
    """Discrete L2 norm over grid functions (trapezoid) plus Euclidean norm of vectors."""
    total = 0.0
    for p in parts:
        p = np.asarray(p, dtype=float)
        if p.ndim == 2:
            w = np.full(p.shape[0], 1.0 / (p.shape[0] - 1))
            w[[0, -1]] *= 0.5
            total += float(np.sum(w[:, None] * p**2))
        else:
            total += float(np.sum(p**2))
    return float(np.sqrt(total))
