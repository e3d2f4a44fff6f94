# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled time-stepping loop for the banded trapezoidal scheme.

The band widths here are a handful of entries, so calling BLAS/LAPACK per
step (which in turn loops over columns with level-1/2 calls) is dominated
by call overhead.  The loops below work directly on the ``dgbtrf`` factor
and ``dgbmv`` band layouts.
"""
import numpy as np


cdef inline void band_matvec(double[::1, :] ab, int m, int n, int kl, int ku,
                             double[::1] x, double[::1] y) noexcept nogil:
    # y = A x with A(i, j) = ab[ku + i - j, j]
    cdef Py_ssize_t i, j, lo, hi
    cdef double xj
    for i in range(m):
        y[i] = 0.0
    for j in range(n):
        xj = x[j]
        if xj == 0.0:
            continue
        lo = j - ku
        if lo < 0:
            lo = 0
        hi = j + kl + 1
        if hi > m:
            hi = m
        for i in range(lo, hi):
            y[i] += ab[ku + i - j, j] * xj


cdef inline void band_lu_solve(double[::1, :] lu, int[::1] ipiv, int n, int kl, int ku,
                               double[::1] b) noexcept nogil:
    # same sequence as dgbtrs('N'): row swaps with unit-lower elimination, then U back substitution
    cdef Py_ssize_t j, i, lm, p, lo
    cdef int kv = kl + ku
    cdef double t
    if kl > 0:
        for j in range(n - 1):
            lm = kl
            if n - j - 1 < lm:
                lm = n - j - 1
            p = ipiv[j] - 1
            if p != j:
                t = b[p]
                b[p] = b[j]
                b[j] = t
            t = b[j]
            if t != 0.0:
                for i in range(lm):
                    b[j + 1 + i] -= lu[kv + 1 + i, j] * t
    for j in range(n - 1, -1, -1):
        if b[j] != 0.0:
            b[j] /= lu[kv, j]
            t = b[j]
            lo = j - kv
            if lo < 0:
                lo = 0
            for i in range(lo, j):
                b[i] -= lu[kv + i - j, j] * t


def integrate(double[::1, :] lu, int[::1] ipiv, int kl, int ku,
              double[::1] y0, Py_ssize_t nsteps, Py_ssize_t stride,
              double[::1, :] energy, int erows, int ekl, int eku, bint with_energy):
    """Advance ``L y_{k+1} = (2 I - L) y_k``, i.e. ``y_{k+1} = 2 L^-1 y_k - y_k``.

    ``lu``/``ipiv`` are the ``dgbtrf`` factors of ``L`` (``ipiv`` 1-based);
    ``energy`` is an ``erows x n`` root factor ``R`` in ``dgbmv`` band layout.
    Returns snapshots every ``stride`` steps
    and, if requested, ``|R y|^2 / 2`` at every step.
    """
    cdef int n = y0.shape[0]
    cdef Py_ssize_t nsnap = nsteps // stride + 1
    snaps = np.empty((nsnap, n))
    energies = np.zeros(nsteps + 1 if with_energy else 0)
    y_arr = np.array(y0, copy=True)
    tmp_arr = np.empty(n)
    work_arr = np.empty(max(erows, 1))
    cdef double[:, ::1] S = snaps
    cdef double[::1] E = energies
    cdef double[::1] y = y_arr
    cdef double[::1] tmp = tmp_arr
    cdef double[::1] work = work_arr
    cdef Py_ssize_t k, i, snap = 1
    cdef double acc

    S[0, :] = y
    if with_energy:
        band_matvec(energy, erows, n, ekl, eku, y, work)
        acc = 0.0
        for i in range(erows):
            acc += work[i] * work[i]
        E[0] = 0.5 * acc
    with nogil:
        for k in range(1, nsteps + 1):
            tmp[:] = y
            band_lu_solve(lu, ipiv, n, kl, ku, tmp)
            for i in range(n):
                y[i] = 2.0 * tmp[i] - y[i]
            if with_energy:
                band_matvec(energy, erows, n, ekl, eku, y, work)
                acc = 0.0
                for i in range(erows):
                    acc += work[i] * work[i]
                E[k] = 0.5 * acc
            if k % stride == 0:
                S[snap, :] = y
                snap += 1
    return snaps, energies
