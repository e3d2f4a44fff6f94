"""Finite-difference semi-discretization of the closed loop.

Unknowns are ``u_i, v_i`` at nodes ``i = 1..nx`` (node 0 is clamped), stored
node-major with ``u`` and ``v`` interleaved so every operator is banded, and
``eta`` appended for the full controller.  The spatial operator is the
gradient of the discrete bending energy ``h/2 sum_k w_k p d_k^2`` with
``d_k`` the ghost-point second differences (``u_-1 = u_1`` at the clamp,
``d_nx = 0`` at the free end).  Interior rows reduce to the 5-point
fourth difference, the tip row is the ghost-point scheme with the shear
``u_xxx(1)`` eliminated, and the discrete energy obeys the same boundary
dissipation identity as the continuous one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..exceptions import ValidationError
from ..model import ControllerGains, Scenario, SystemMatrices, check_compatible
from .grid import BeamState, Grid, TraceVector


def second_difference_matrix(nx: int) -> sp.csr_matrix:
    """Map ``u_1..u_nx`` to ``d_0..d_{nx-1}`` (times ``h^2``) with the clamp ghost."""
    rows, cols, vals = [0], [0], [2.0]
    for k in range(1, nx):
        for m, c in ((k - 1, 1.0), (k, -2.0), (k + 1, 1.0)):
            if m >= 1:
                rows.append(k)
                cols.append(m - 1)
                vals.append(c)
    return sp.csr_matrix((vals, (rows, cols)), shape=(nx, nx))


def bending_stiffness(nx: int) -> sp.csr_matrix:
    """``K_h`` with ``u^T K_h u = h sum_k w_k d_k^2`` (trapezoid weights, ``w_0 = 1/2``)."""
    h = 1.0 / nx
    D2 = second_difference_matrix(nx) / h**2
    w = np.ones(nx)
    w[0] = 0.5
    return (h * (D2.T @ sp.diags(w) @ D2)).tocsr()


def fourth_difference(U: np.ndarray, h: float) -> np.ndarray:
    """Central 5-point ``u_xxxx`` at interior nodes ``2..nx-2`` (no boundary closure)."""
    U = np.asarray(U, dtype=float)
    return (U[:-4] - 4 * U[1:-3] + 6 * U[2:-2] - 4 * U[3:-1] + U[4:]) / h**4


def one_sided_uxxx(U: np.ndarray, h: float) -> np.ndarray:
    """Backward 4-point third difference at the last node, first order."""
    return (U[-1] - 3 * U[-2] + 3 * U[-3] - U[-4]) / h**3


def boundary_traces(state: BeamState) -> TraceVector:
    return TraceVector(one_sided_uxxx(state.U, state.h), state.V[-1].copy())


def control_first_order(state: BeamState, g: ControllerGains) -> np.ndarray:
    return -g.K @ state.V[-1]


def tip_acceleration(M, F, uxxx1, w) -> np.ndarray:
    """Solve ``M u_tt(1) = F u_xxx(1) + w`` for the tip acceleration."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return np.linalg.solve(M, np.atleast_2d(F) @ np.atleast_1d(uxxx1) + np.atleast_1d(w))


def eta_rhs(state: BeamState, g: ControllerGains, sys: SystemMatrices) -> np.ndarray:
    """Right-hand side of the boundary ODE: ``-B eta - B (K - B M) v(1)``."""
    eta = np.zeros(g.n) if state.eta is None else state.eta
    B = g.B
    return -B @ eta - B @ (g.K - B @ sys.M) @ state.V[-1]


@dataclass(frozen=True)
class TipClosure:
    accel: np.ndarray
    uxxx1: np.ndarray
    ghost_right: np.ndarray  # u_{nx+1}, u_{nx+2}, shape (2, n)


class ClosedLoopModel:
    """Linear semi-discrete system ``y' = A y`` for one scenario and grid."""

    def __init__(self, sys: SystemMatrices, g: ControllerGains, scenario, nx: int):
        check_compatible(sys, g)
        self.sys = sys
        self.gains = g
        self.scenario = Scenario.parse(scenario)
        self.grid = Grid(nx)
        n = sys.n
        self.n = n
        self.nx = nx
        self.has_eta = self.scenario is Scenario.FULL
        self.dim = 2 * n * nx + (n if self.has_eta else 0)
        h = self.grid.h
        self._lam = sys.lambda_diag
        if self.scenario is not Scenario.FULL:
            mt = sys.M + 0.5 * h * sys.F @ np.diag(1.0 / self._lam)
            try:
                self._tip_inv = np.linalg.inv(mt)
            except np.linalg.LinAlgError as exc:
                raise ValidationError("tip mass closure is singular") from exc
        else:
            self._Finv = np.linalg.inv(sys.F)
        self._build()

    # index helpers
    def iu(self, i: int, j: int) -> int:
        return (i - 1) * 2 * self.n + j

    def iv(self, i: int, j: int) -> int:
        return (i - 1) * 2 * self.n + self.n + j

    def ie(self, j: int) -> int:
        return 2 * self.n * self.nx + j

    def _build(self):
        n, nx, h = self.n, self.nx, self.grid.h
        lam = self._lam
        Kh = bending_stiffness(nx).tocoo()
        rows, cols, vals = [], [], []

        def add(r, c, v):
            rows.append(r)
            cols.append(c)
            vals.append(v)

        for i in range(1, nx + 1):
            for j in range(n):
                add(self.iu(i, j), self.iv(i, j), 1.0)
        # interior nodes: v_i' = -lambda (K_h u)_i / h
        for r, c, v in zip(Kh.row, Kh.col, Kh.data):
            if r < nx - 1:
                for j in range(n):
                    add(self.iv(r + 1, j), self.iu(c + 1, j), -lam[j] * v / h)

        # r = (K_h u)_nx, per component
        last = Kh.tocsr()[nx - 1]
        Rr = sp.lil_matrix((n, self.dim))
        for c, v in zip(last.indices, last.data):
            for j in range(n):
                Rr[j, self.iu(c + 1, j)] = v
        self.R_r = Rr.tocsr()
        RvN = sp.lil_matrix((n, self.dim))
        for j in range(n):
            RvN[j, self.iv(nx, j)] = 1.0
        self.R_vN = RvN.tocsr()

        sys, g = self.sys, self.gains
        if self.scenario is Scenario.FULL:
            Reta = sp.lil_matrix((n, self.dim))
            for j in range(n):
                Reta[j, self.ie(j)] = 1.0
            Reta = Reta.tocsr()
            # s = F^-1 (B M v_N - eta)
            R_s = sp.csr_matrix(self._Finv @ g.B @ sys.M) @ self.R_vN - sp.csr_matrix(self._Finv) @ Reta
            R_vdot = sp.diags(2.0 * lam / h) @ (-self.R_r - R_s)
            R_etadot = -sp.csr_matrix(g.B) @ Reta - sp.csr_matrix(g.B @ (g.K - g.B @ sys.M)) @ self.R_vN
            self.R_eta = Reta
        else:
            Keff = g.K if self.scenario is Scenario.FIRST_ORDER else np.zeros_like(g.K)
            R_vdot = sp.csr_matrix(-self._tip_inv @ sys.F) @ self.R_r - sp.csr_matrix(self._tip_inv @ Keff) @ self.R_vN
            R_s = -self.R_r - sp.diags(0.5 * h / lam) @ R_vdot
            R_etadot = None
            self.R_eta = -sp.csr_matrix(sys.F) @ R_s + sp.csr_matrix(g.B @ sys.M) @ self.R_vN
        self.R_s = sp.csr_matrix(R_s)
        self.R_vdot = sp.csr_matrix(R_vdot)

        A = sp.coo_matrix((vals, (rows, cols)), shape=(self.dim, self.dim)).tolil()
        for j in range(n):
            A[self.iv(nx, j), :] = self.R_vdot[j]
            if R_etadot is not None:
                A[self.ie(j), :] = R_etadot[j]
        self.A = A.tocsr()
        self.A.eliminate_zeros()

        if self.scenario is Scenario.OPEN_LOOP:
            self.R_w = sp.csr_matrix((n, self.dim))
        elif self.scenario is Scenario.FIRST_ORDER:
            self.R_w = sp.csr_matrix(-g.K) @ self.R_vN
        else:
            # input actually applied at the tip: M u_tt(1) - F u_xxx(1)
            self.R_w = sp.csr_matrix(sys.M) @ self.R_vdot - sp.csr_matrix(sys.F) @ self.R_s
        self.R_w = sp.csr_matrix(self.R_w)

    # -- state conversion ---------------------------------------------------------

    def pack(self, state: BeamState) -> np.ndarray:
        if state.U.shape != (self.nx + 1, self.n):
            raise ValidationError(f"state shape {state.U.shape} does not match grid ({self.nx + 1}, {self.n})")
        y = np.empty(self.dim)
        blk = np.empty((self.nx, 2 * self.n))
        blk[:, : self.n] = state.U[1:]
        blk[:, self.n:] = state.V[1:]
        y[: 2 * self.n * self.nx] = blk.ravel()
        if self.has_eta:
            y[2 * self.n * self.nx:] = 0.0 if state.eta is None else state.eta
        return y

    def unpack_arrays(self, Y: np.ndarray):
        """Split stacked vectors ``(k, dim)`` into ``U, V`` of shape ``(k, nx+1, n)``."""
        Y = np.atleast_2d(Y)
        k = Y.shape[0]
        blk = Y[:, : 2 * self.n * self.nx].reshape(k, self.nx, 2 * self.n)
        U = np.zeros((k, self.nx + 1, self.n))
        V = np.zeros((k, self.nx + 1, self.n))
        U[:, 1:] = blk[:, :, : self.n]
        V[:, 1:] = blk[:, :, self.n:]
        return U, V

    def unpack(self, y: np.ndarray, t: float = 0.0) -> BeamState:
        U, V = self.unpack_arrays(y)
        return BeamState(t, U[0], V[0], self.R_eta @ y)

    # -- readouts ----------------------------------------------------------------------

    def trace(self, y: np.ndarray) -> TraceVector:
        """Scheme-consistent traces: the ghost-point shear and the tip velocity."""
        return TraceVector(self.R_s @ y, self.R_vN @ y)

    def control(self, y: np.ndarray) -> np.ndarray:
        return self.R_w @ y

    def energy_root(self, P, S) -> sp.csr_matrix:
        """Banded ``R`` with ``W = |R y|^2 / 2`` for diagonal weights ``P, S``.

        Rows follow the nodes (weighted second differences, then velocities)
        with the boundary-state rows last.  Summing squares avoids the
        cancellation of the assembled quadratic form at fine grids.
        """
        n, nx, h = self.n, self.nx, self.grid.h
        p = np.diag(np.asarray(P, dtype=float)) if np.ndim(P) == 2 else np.asarray(P, dtype=float)
        s = np.diag(np.asarray(S, dtype=float)) if np.ndim(S) == 2 else np.asarray(S, dtype=float)
        if np.any(p < 0) or np.any(s < 0):
            raise ValidationError("energy weights must be non-negative")
        D2 = second_difference_matrix(nx).tocsr() / h**2
        wd = np.ones(nx)
        wd[0] = 0.5
        wm = np.ones(nx)
        wm[-1] = 0.5
        rows, cols, vals = [], [], []
        for k in range(nx):
            row = D2[k]
            for j in range(n):
                c = np.sqrt(h * wd[k] * p[j])
                for m, v in zip(row.indices, row.data):
                    rows.append(2 * n * k + j)
                    cols.append(self.iu(m + 1, j))
                    vals.append(c * v)
                rows.append(2 * n * k + n + j)
                cols.append(self.iv(k + 1, j))
                vals.append(np.sqrt(h * wm[k] * p[j] / self._lam[j]))
        R = sp.coo_matrix((vals, (rows, cols)), shape=(2 * n * nx, self.dim)).tocsr()
        return sp.csr_matrix(sp.vstack([R, sp.diags(np.sqrt(s)) @ self.R_eta]))

    def energy_matrix(self, P, S) -> sp.csr_matrix:
        """Symmetric ``H = R^T R`` with ``W = y^T H y / 2``."""
        R = self.energy_root(P, S)
        return sp.csr_matrix(R.T @ R)

    def initial_vector(self, ic, t: float = 0.0) -> np.ndarray:
        x = self.grid.x
        U = ic.displacement(x)
        U[0] = 0.0
        V = ic.velocity_samples(x)
        V[0] = 0.0
        eta = None
        if self.has_eta:
            uxxx = ic.uxxx_at_tip()
            if uxxx is None:
                uxxx = one_sided_uxxx(U, self.grid.h)
            eta = -self.sys.F @ uxxx + self.gains.B @ self.sys.M @ V[-1]
        return self.pack(BeamState(t, U, V, eta))

    # -- operator views ----------------------------------------------------------------

    def acceleration(self, state: BeamState) -> np.ndarray:
        ydot = self.A @ self.pack(state)
        _, Vd = self.unpack_arrays(ydot)
        return Vd[0]

    def closure(self, state: BeamState) -> TipClosure:
        y = self.pack(state)
        s = self.R_s @ y
        accel = self.R_vdot @ y
        U, h = state.U, self.grid.h
        g1 = 2 * U[-1] - U[-2]
        g2 = 2 * h**3 * s + 4 * U[-1] - 4 * U[-2] + U[-3]
        return TipClosure(accel, s, np.stack([g1, g2]))


_MODEL_CACHE: dict = {}


def get_model(sys: SystemMatrices, g: ControllerGains, scenario, nx: int) -> ClosedLoopModel:
    key = (
        sys.Lambda.tobytes(), sys.M.tobytes(), sys.F.tobytes(),
        g.K.tobytes(), g.Binv.tobytes(), Scenario.parse(scenario), int(nx),
    )
    model = _MODEL_CACHE.get(key)
    if model is None:
        if len(_MODEL_CACHE) > 32:
            _MODEL_CACHE.clear()
        model = _MODEL_CACHE[key] = ClosedLoopModel(sys, g, scenario, nx)
    return model


def spatial_operator(state: BeamState, sys: SystemMatrices, scenario, g: ControllerGains | None = None) -> np.ndarray:
    """Acceleration ``u_tt`` at every node, boundary rows from the scenario closure."""
    if state.nx < 8:
        raise ValidationError(f"nx >= 8 required, got {state.nx}")
    if g is None:
        g = ControllerGains(np.zeros((sys.n, sys.n)), np.eye(sys.n))
    return get_model(sys, g, scenario, state.nx).acceleration(state)


def closure_tip_mass(state: BeamState, sys: SystemMatrices, g: ControllerGains, scenario) -> TipClosure:
    return get_model(sys, g, scenario, state.nx).closure(state)
