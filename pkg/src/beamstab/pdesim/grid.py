"""Uniform grid and discrete beam state containers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import ValidationError


@dataclass(frozen=True)
class Grid:
    nx: int

    def __post_init__(self):
        if int(self.nx) != self.nx or self.nx < 8:
            raise ValidationError(f"nx >= 8 required, got {self.nx}")

    @property
    def h(self) -> float:
        return 1.0 / self.nx

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.nx + 1)


@dataclass(frozen=True)
class BeamState:
    """Displacement ``U``, velocity ``V`` (both ``(nx+1, n)``) and boundary state ``eta``.

    Row 0 is the clamped node and always zero.  ``eta`` is the auxiliary
    boundary variable; outside the full-controller scenario it holds the value
    implied by the boundary traces, or ``None`` for hand-built states.
    """

    t: float
    U: np.ndarray
    V: np.ndarray
    eta: np.ndarray | None = None

    def __post_init__(self):
        U = np.asarray(self.U, dtype=float)
        V = np.asarray(self.V, dtype=float)
        if U.ndim == 1:
            U = U[:, None]
        if V.ndim == 1:
            V = V[:, None]
        if U.shape != V.shape:
            raise ValidationError(f"U {U.shape} and V {V.shape} differ")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)
        if self.eta is not None:
            object.__setattr__(self, "eta", np.asarray(self.eta, dtype=float).reshape(-1))

    @property
    def nx(self) -> int:
        return self.U.shape[0] - 1

    @property
    def n(self) -> int:
        return self.U.shape[1]

    @property
    def h(self) -> float:
        return 1.0 / self.nx

    def scaled(self, c: float) -> "BeamState":
        eta = None if self.eta is None else c * self.eta
        return BeamState(self.t, c * self.U, c * self.V, eta)

    @classmethod
    def zeros(cls, nx: int, n: int, t: float = 0.0) -> "BeamState":
        return cls(t, np.zeros((nx + 1, n)), np.zeros((nx + 1, n)), np.zeros(n))


@dataclass(frozen=True)
class TraceVector:
    """Boundary traces ``(u_xxx(1), u_t(1))``."""

    uxxx1: np.ndarray
    vt1: np.ndarray

    @property
    def zeta(self) -> np.ndarray:
        return np.concatenate([self.uxxx1, self.vt1])
