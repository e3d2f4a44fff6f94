"""Dissipativity certificate and Lyapunov decay auxiliaries.

The closed-loop generator is dissipative in the weighted energy norm when
``He(Omega) = Omega + Omega^T`` is positive definite, where ``Omega`` depends
linearly on the diagonal weights ``P`` (bending/kinetic) and ``S`` (boundary
state).  ``solve_lmi`` searches those weights; the remaining helpers build the
quantities used to bound the decay of the energy.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import LMIInfeasible, ValidationError
from .model import ControllerGains, SystemMatrices, check_compatible

log = logging.getLogger(__name__)


def he(X: np.ndarray) -> np.ndarray:
    return X + X.T


def _diag_matrix(name: str, D, n: int) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    if D.ndim == 1:
        D = np.diag(D)
    if D.shape != (n, n):
        raise ValidationError(f"{name} must be {n}x{n}, got {D.shape}")
    if np.max(np.abs(D - np.diag(np.diag(D)))) > 0:
        raise ValidationError(f"{name} must be diagonal")
    return D


def assemble_omega(sys: SystemMatrices, g: ControllerGains, P, S) -> np.ndarray:
    """Boundary dissipation matrix acting on ``(u_xxx(1), u_t(1))``."""
    check_compatible(sys, g)
    n = sys.n
    P = _diag_matrix("P", P, n)
    S = _diag_matrix("S", S, n)
    F, M, K, B = sys.F, sys.M, g.K, g.B
    SB = S @ B
    return np.block([
        [F.T @ SB @ F, -F.T @ SB @ K],
        [P - M.T @ B.T @ SB @ F, M.T @ B.T @ SB @ K],
    ])


def dissipativity_margin(omega: np.ndarray) -> float:
    """Smallest eigenvalue of ``He(omega)``; positive means dissipative."""
    omega = np.asarray(omega, dtype=float)
    if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
        raise ValidationError("omega must be square")
    return float(np.linalg.eigvalsh(he(omega))[0])


@dataclass(frozen=True)
class Certificate:
    P: np.ndarray
    S: np.ndarray
    margin: float

    @property
    def valid(self) -> bool:
        return self.margin > 0

    def omega(self, sys: SystemMatrices, g: ControllerGains) -> np.ndarray:
        return assemble_omega(sys, g, self.P, self.S)

    def recomputed_margin(self, sys: SystemMatrices, g: ControllerGains) -> float:
        return dissipativity_margin(self.omega(sys, g))


def make_certificate(sys: SystemMatrices, g: ControllerGains, P, S) -> Certificate:
    """Wrap given weights, computing their margin; raises if they are not PD diagonals."""
    n = sys.n
    P = _diag_matrix("P", P, n)
    S = _diag_matrix("S", S, n)
    if not (np.all(np.diag(P) > 0) and np.all(np.diag(S) > 0)):
        raise ValidationError("P and S need strictly positive diagonals")
    return Certificate(P, S, dissipativity_margin(assemble_omega(sys, g, P, S)))


def _he_basis(sys: SystemMatrices, g: ControllerGains) -> np.ndarray:
    # He(Omega) is linear in (p_1..p_n, s_1..s_n): one symmetric matrix per weight.
    n = sys.n
    out = np.empty((2 * n, 2 * n, 2 * n))
    for i in range(2 * n):
        x = np.zeros(2 * n)
        x[i] = 1.0
        out[i] = he(assemble_omega(sys, g, np.diag(x[:n]), np.diag(x[n:])))
    return out


def solve_lmi(
    sys: SystemMatrices,
    g: ControllerGains,
    *,
    margin_tol: float = 1e-8,
    restarts: int = 10,
    iterations: int = 5000,
    stall: int = 600,
    seed: int = 0,
) -> Certificate:
    """Maximize ``lambda_min(He(Omega))`` over positive diagonal ``P, S``.

    The problem is homogeneous, so the weights are kept on the simplex
    ``trace(P) + trace(S) = n + 1``.  The concave objective is climbed with
    entropic mirror ascent (multiplicative subgradient steps), which keeps
    the weights positive and copes with entries that differ by orders of
    magnitude.  Raises :class:`LMIInfeasible` when the best margin found does
    not exceed ``margin_tol``.
    """
    check_compatible(sys, g)
    n = sys.n
    basis = _he_basis(sys, g)
    total = float(n + 1)
    rng = np.random.default_rng(seed)

    best_margin, best_x = -np.inf, None
    for r in range(restarts):
        x = np.full(2 * n, total / (2 * n)) if r == 0 else rng.dirichlet(np.ones(2 * n)) * total
        last_gain = 0
        run_best = -np.inf
        for k in range(1, iterations + 1):
            w, V = np.linalg.eigh(np.tensordot(x, basis, axes=1))
            if w[0] > run_best + 1e-13 * max(1.0, abs(run_best)):
                run_best, last_gain = w[0], k
            if w[0] > best_margin:
                best_margin, best_x = float(w[0]), x.copy()
            if k - last_gain > stall:
                break
            v = V[:, 0]
            grad = np.einsum("i,aij,j->a", v, basis, v)
            scale = np.max(np.abs(grad))
            if scale == 0:
                break
            x = x * np.exp(grad / (scale * np.sqrt(k)))
            x *= total / x.sum()
        log.debug("restart %d: margin %.6e after %d iterations", r, run_best, k)

    p, s = best_x[:n], best_x[n:]
    if not best_margin > margin_tol:
        raise LMIInfeasible(best_margin, p, s)
    cert = Certificate(np.diag(p), np.diag(s), dissipativity_margin(assemble_omega(sys, g, np.diag(p), np.diag(s))))
    return cert


# -- Lyapunov functional auxiliaries -----------------------------------------------


def _chol_ok(X: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(0.5 * (X + X.T))
    except np.linalg.LinAlgError:
        return False
    return True


def q_conditions_hold(Q, P, Lambda, alpha: float, beta: float) -> tuple[bool, bool]:
    """Cholesky tests of ``1.5 He(Q Lambda) - P/2 - alpha I`` and ``Q - P Lambda^-1 - beta I``."""
    Q, P, Lambda = (np.asarray(a, dtype=float) for a in (Q, P, Lambda))
    n = Q.shape[0]
    first = 1.5 * he(Q @ Lambda) - 0.5 * P - alpha * np.eye(n)
    second = Q - P @ np.linalg.inv(Lambda) - beta * np.eye(n)
    return _chol_ok(first), _chol_ok(second)


def select_q(P, Lambda, alpha: float, beta: float, slack: float = 0.05) -> np.ndarray:
    """Smallest diagonal ``Q`` (times ``1 + slack``) meeting both weighting conditions."""
    if not (alpha > 0 and beta > 0):
        raise ValidationError("alpha and beta must be positive")
    p = np.diag(np.asarray(P, dtype=float))
    lam = np.diag(np.asarray(Lambda, dtype=float))
    # He(Q Lambda) = 2 q lambda for diagonal Q, Lambda
    q = (1.0 + slack) * np.maximum((alpha + 0.5 * p) / (3.0 * lam), beta + p / lam)
    return np.diag(q)


def assemble_psi(S, Q, Lambda, F, B, M, epsilon: float) -> np.ndarray:
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    norm = lambda X: float(np.linalg.norm(np.asarray(X, dtype=float), 2))
    n = np.asarray(Q).shape[0]
    Q = np.asarray(Q, dtype=float)
    top = norm(S) * norm(F) ** 2 + norm(Q @ np.asarray(Lambda)) / epsilon
    bottom = norm(S) * norm(np.asarray(B) @ np.asarray(M)) ** 2 + norm(Q) / 2.0
    return np.diag(np.concatenate([np.full(n, top), np.full(n, bottom)]))


def estimate_tau(omega: np.ndarray, psi: np.ndarray, rtol: float = 1e-6) -> float:
    """Smallest ``t >= 0`` with ``He(t omega - psi)`` positive semidefinite."""
    omega = np.asarray(omega, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if not dissipativity_margin(omega) > 0:
        raise ValidationError("no finite tau: He(omega) is not positive definite")

    def lmin(t):
        return np.linalg.eigvalsh(he(t * omega - psi))[0]

    if lmin(0.0) >= 0:
        return 0.0
    lo, hi = 0.0, 1.0
    while lmin(hi) < 0:
        lo, hi = hi, 2.0 * hi
    scale = max(float(np.linalg.norm(psi, 2)), np.finfo(float).tiny)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if lmin(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi and lmin(hi) <= 1e-7 * scale:
            break
    return hi


def c0_bound(P, Q, Lambda) -> float:
    """Constant with ``|V - t W| <= c0 W``.

    Cauchy-Schwarz with ``int u_x^2 <= int u_xx^2 / 2`` gives ``|Q| / sqrt(2 m)``
    with ``m = min(p/lambda) min(p)``; the returned value is twice that so it
    also covers the grid versions of the integrals.
    """
    p = np.diag(np.asarray(P, dtype=float))
    lam = np.diag(np.asarray(Lambda, dtype=float))
    qn = float(np.linalg.norm(np.asarray(Q, dtype=float), 2))
    return float(np.sqrt(2.0) * qn / np.sqrt(np.min(p / lam) * np.min(p)))


@dataclass(frozen=True)
class LyapunovAux:
    Q: np.ndarray
    alpha: float
    beta: float
    epsilon: float
    Psi: np.ndarray
    tau: float
    c0: float


def lyapunov_aux(
    cert: Certificate,
    sys: SystemMatrices,
    g: ControllerGains,
    alpha: float = 0.1,
    beta: float = 0.1,
    slack: float = 0.05,
    epsilon_fraction: float = 0.9,
) -> LyapunovAux:
    """Build ``Q``, ``epsilon``, ``Psi``, ``tau`` and ``c0`` for a valid certificate."""
    Q = select_q(cert.P, sys.Lambda, alpha, beta, slack)
    q_lam = float(np.linalg.norm(Q @ sys.Lambda, 2))
    eps = epsilon_fraction * alpha / q_lam
    psi = assemble_psi(cert.S, Q, sys.Lambda, sys.F, g.B, sys.M, eps)
    tau = estimate_tau(cert.omega(sys, g), psi)
    return LyapunovAux(Q, alpha, beta, eps, psi, tau, c0_bound(cert.P, Q, sys.Lambda))
