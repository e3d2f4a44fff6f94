"""Banded storage helpers and the stepping-loop backends.

The compiled backend (``_kernels``, built from Cython) is used when it
imports; otherwise the pure-Python loop below runs the identical sequence of
BLAS/LAPACK calls.  Set ``BEAMSTAB_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np
import scipy.sparse as sp
from scipy.linalg import blas, lapack

from ..exceptions import NumericalError

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = ("compiled", "python") if _compiled is not None else ("python",)
DEFAULT_BACKEND = "python" if (_compiled is None or os.environ.get("BEAMSTAB_PURE_PYTHON") == "1") else "compiled"


def bandwidths(A) -> tuple[int, int]:
    A = sp.coo_matrix(A)
    if A.nnz == 0:
        return 0, 0
    d = A.row - A.col
    return int(max(d.max(), 0)), int(max(-d.min(), 0))


def to_band(A, kl: int, ku: int, extra: int = 0) -> np.ndarray:
    """General band layout, Fortran order; ``extra`` leading rows are left for ``dgbtrf`` fill-in."""
    A = sp.coo_matrix(A)
    ab = np.zeros((extra + kl + ku + 1, A.shape[1]), order="F")
    ab[extra + ku + A.row - A.col, A.col] = A.data
    return ab


class BandedLU:
    """LU factors of a banded matrix, reusable across right-hand sides."""

    def __init__(self, A):
        self.kl, self.ku = bandwidths(A)
        ab = to_band(A, self.kl, self.ku, extra=self.kl)
        lu, piv, info = lapack.dgbtrf(ab, self.kl, self.ku)
        if info != 0:
            raise NumericalError(f"banded LU failed (info={info})")
        self.lu = np.asfortranarray(lu)
        self.piv = piv.astype(np.int32)

    def solve(self, b: np.ndarray) -> np.ndarray:
        x, info = lapack.dgbtrs(self.lu, self.kl, self.ku, b, self.piv)
        if info != 0:
            raise NumericalError(f"banded solve failed (info={info})")
        return x


def _sq(r: np.ndarray) -> float:
    return float(r @ r)


def _integrate_python(lu, piv, kl, ku, y0, nsteps, stride, energy, m, ekl, eku, with_energy):
    n = y0.size
    snaps = np.empty((nsteps // stride + 1, n))
    energies = np.zeros(nsteps + 1 if with_energy else 0)
    y = y0.copy()
    snaps[0] = y
    if with_energy:
        energies[0] = 0.5 * _sq(blas.dgbmv(m, n, ekl, eku, 1.0, energy, y))
    snap = 1
    for k in range(1, nsteps + 1):
        x, info = lapack.dgbtrs(lu, kl, ku, y, piv)
        if info != 0:
            raise NumericalError(f"banded solve failed (info={info})")
        y = 2.0 * x - y
        if with_energy:
            energies[k] = 0.5 * _sq(blas.dgbmv(m, n, ekl, eku, 1.0, energy, y))
        if k % stride == 0:
            snaps[snap] = y
            snap += 1
    return snaps, energies


def integrate(factor: BandedLU, y0, nsteps: int, stride: int = 1, energy=None, backend: str | None = None):
    """Run ``nsteps`` of ``y <- 2 L^-1 y - y`` with ``L`` the factored matrix.

    For ``L = I - dt/2 A`` this is the trapezoidal step, since
    ``I + dt/2 A = 2 I - L``.  Returns ``(snapshots, energies)``.

    ``energy`` is an optional banded root factor ``R`` (``m x n``); the energy
    ``|R y|^2 / 2`` is then recorded after every step.
    """
    backend = backend or DEFAULT_BACKEND
    if backend not in BACKENDS:
        raise ValueError(f"backend {backend!r} unavailable; have {BACKENDS}")
    if energy is not None:
        ekl, eku = bandwidths(energy)
        eb = to_band(energy, ekl, eku)
        erows = int(energy.shape[0])
    else:
        erows = 0
        ekl = eku = 0
        eb = np.zeros((1, 1), order="F")
    y0 = np.ascontiguousarray(y0, dtype=float)
    args = (y0, int(nsteps), int(stride), eb, erows, ekl, eku, energy is not None)
    if backend == "compiled":
        try:
            return _compiled.integrate(factor.lu, factor.piv + 1, factor.kl, factor.ku, *args)
        except RuntimeError as exc:
            raise NumericalError(str(exc)) from exc
    return _integrate_python(factor.lu, factor.piv, factor.kl, factor.ku, *args)
