"""Energy, Lyapunov functional and decay-rate post-processing.

The energy is ``W = 1/2 int (v^T P Lambda^-1 v + u_xx^T P u_xx) dx + 1/2 eta^T S eta``
with the same second differences and trapezoid weights as the simulator, so
``W`` evaluated here equals the quadratic form the stepper dissipates.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .model import ControllerGains, SystemMatrices
from .pdesim.grid import BeamState, TraceVector
from .pdesim.operators import one_sided_uxxx

R2_THRESHOLD = 0.9


def _diag(D) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    return np.diag(D).copy() if D.ndim == 2 else D


def second_differences(U: np.ndarray, h: float) -> np.ndarray:
    """``d_0..d_{nx-1}`` along axis -2, with the clamp ghost ``u_-1 = u_1`` and ``d_nx = 0``."""
    U = np.asarray(U, dtype=float)
    d = np.empty(U.shape[:-2] + (U.shape[-2] - 1, U.shape[-1]))
    d[..., 0, :] = 2.0 * (U[..., 1, :] - U[..., 0, :])
    d[..., 1:, :] = U[..., :-2, :] - 2.0 * U[..., 1:-1, :] + U[..., 2:, :]
    return d / h**2


def _trapezoid_weights(m: int) -> np.ndarray:
    w = np.ones(m)
    w[[0, -1]] = 0.5
    return w


@dataclass(frozen=True)
class EnergyComponents:
    W: float
    bend: float
    kin: float
    eta: float


def energy_arrays(U, V, eta, P, S, lam_diag, h: float):
    """Vectorized energy over leading axes; returns ``(W, bend, kin, eta)`` arrays."""
    p = _diag(P)
    S = np.diag(S) if np.ndim(S) == 1 else np.asarray(S, dtype=float)
    d = second_differences(U, h)
    wd = _trapezoid_weights(d.shape[-2] + 1)[:-1]  # d_nx = 0 contributes nothing
    bend = 0.5 * h * np.einsum("k,...kj,j->...", wd, d**2, p)
    wv = _trapezoid_weights(np.shape(V)[-2])
    kin = 0.5 * h * np.einsum("k,...kj,j->...", wv, np.asarray(V) ** 2, p / lam_diag)
    eta = np.asarray(eta, dtype=float)
    e = 0.5 * np.einsum("...i,ij,...j->...", eta, S, eta)
    return bend + kin + e, bend, kin, e


def trace_eta(state: BeamState, sys: SystemMatrices, g: ControllerGains) -> np.ndarray:
    """``-F u_xxx(1) + B M v(1)`` from the one-sided trace."""
    return -sys.F @ one_sided_uxxx(state.U, state.h) + g.B @ sys.M @ state.V[-1]


def energy(state: BeamState, sys: SystemMatrices, P, S, g: ControllerGains | None = None) -> EnergyComponents:
    """Energy of one state.

    ``state.eta`` is used when present; otherwise it is evaluated from the
    trace relation (needs ``g``), so open- and first-order runs are measured
    in the same norm as the full controller.
    """
    eta = state.eta
    if eta is None:
        if g is None:
            raise ValidationError("gains are needed to evaluate eta from the traces")
        eta = trace_eta(state, sys, g)
    W, b, k, e = energy_arrays(state.U, state.V, eta, P, S, sys.lambda_diag, state.h)
    return EnergyComponents(float(W), float(b), float(k), float(e))


@dataclass(frozen=True)
class EnergySeries:
    t: np.ndarray
    W: np.ndarray
    bend: np.ndarray
    kin: np.ndarray
    eta: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    @property
    def samples(self):
        return list(zip(self.t, self.W, self.bend, self.kin, self.eta))


def energy_series(traj, P, S) -> EnergySeries:
    """Energy at every snapshot of a trajectory (``eta`` from the scheme's readout)."""
    model = traj.model
    U, V = traj.arrays()
    W, b, k, e = energy_arrays(U, V, traj.eta(), P, S, model.sys.lambda_diag, model.grid.h)
    return EnergySeries(np.asarray(traj.times, dtype=float), W, b, k, e)


def boundary_dissipation(zeta, omega) -> np.ndarray | float:
    """``-zeta^T Omega zeta``; ``zeta`` may be a TraceVector or an array ``(..., 2n)``."""
    z = zeta.zeta if isinstance(zeta, TraceVector) else np.asarray(zeta, dtype=float)
    out = -np.einsum("...i,ij,...j->...", z, np.asarray(omega, dtype=float), z)
    return float(out) if np.ndim(out) == 0 else out


def slope_ux(U: np.ndarray, h: float) -> np.ndarray:
    """Second-order ``u_x`` along axis -2 (zero at the clamp, one-sided at the tip)."""
    U = np.asarray(U, dtype=float)
    ux = np.empty_like(U)
    ux[..., 0, :] = 0.0
    ux[..., 1:-1, :] = (U[..., 2:, :] - U[..., :-2, :]) / (2 * h)
    ux[..., -1, :] = (3 * U[..., -1, :] - 4 * U[..., -2, :] + U[..., -3, :]) / (2 * h)
    return ux


def cross_term(U, V, Q, h: float) -> np.ndarray:
    """``int_0^1 x v^T Q u_x dx`` by the trapezoid rule, over leading axes."""
    U = np.asarray(U, dtype=float)
    m = U.shape[-2]
    x = np.arange(m) * h
    wx = _trapezoid_weights(m) * h * x
    QV = np.asarray(V, dtype=float) @ np.asarray(Q, dtype=float).T
    return np.einsum("k,...kj,...kj->...", wx, QV, slope_ux(U, h))


def lyapunov_v(state: BeamState, Q, t: float, W: float) -> float:
    """``V = t W + int x v^T Q u_x dx`` for a state with energy ``W``."""
    return float(t * W + cross_term(state.U, state.V, Q, state.h))


def lyapunov_series(traj, Q, series: EnergySeries) -> np.ndarray:
    U, V = traj.arrays()
    return series.t * series.W + cross_term(U, V, Q, traj.model.grid.h)


def estimate_c0(t, W, V) -> float:
    """Largest ``|V - t W| / W`` over samples with ``W > 0``."""
    t, W, V = (np.asarray(a, dtype=float) for a in (t, W, V))
    ok = W > 0
    if not np.any(ok):
        return 0.0
    return float(np.max(np.abs(V[ok] - t[ok] * W[ok]) / W[ok]))


@dataclass(frozen=True)
class DecayEstimate:
    mu: float
    delta: float
    r_squared: float
    window: tuple[float, float]
    npoints: int

    @property
    def reliable(self) -> bool:
        return self.r_squared >= R2_THRESHOLD


def decay_fit(t, W, window: tuple[float | None, float | None] | None = None) -> DecayEstimate:
    """Least-squares fit of ``log W = log mu^2 - 2 delta t`` over ``window``.

    The default window is ``[0.2 T, T]`` with ``T`` the last sample time.
    """
    t = np.asarray(t, dtype=float)
    W = np.asarray(W, dtype=float)
    if t.shape != W.shape or t.size == 0:
        raise ValidationError("t and W must be non-empty and of equal length")
    T = float(t[-1])
    lo, hi = (None, None) if window is None else window
    lo = 0.2 * T if lo is None else float(lo)
    hi = T if hi is None else float(hi)
    sel = (t >= lo) & (t <= hi)
    if np.count_nonzero(sel) < 2:
        raise ValidationError(f"fewer than two samples in window [{lo:g}, {hi:g}]")
    if np.any(W[sel] <= 0):
        raise ValidationError("energy must be positive in the fit window")
    ts, y = t[sel], np.log(W[sel])
    slope, intercept = np.polyfit(ts, y, 1)
    resid = y - (slope * ts + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    floor = 1e-24 * max(1.0, float(y @ y))  # rounding level of log W
    if ss_tot > floor:
        r2 = 1.0 - ss_res / ss_tot
    else:
        # flat energy: a constant model explains it exactly
        slope, intercept = 0.0, float(y.mean())
        r2 = 1.0
    delta = -0.5 * slope
    if abs(delta) < 1e-14:
        delta = 0.0
    return DecayEstimate(float(np.exp(0.5 * intercept)), float(delta), float(r2), (lo, hi), int(sel.sum()))


@dataclass(frozen=True)
class DissipationBudget:
    rate: np.ndarray         # (W_{k+1} - W_k) / (t_{k+1} - t_k)
    dissipation: np.ndarray  # -zeta^T Omega zeta at the interval midpoints
    residual: np.ndarray
    C: float                 # max |residual| / ((dt + h) W(0))
    traces: str

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0


def dissipation_budget(traj, series: EnergySeries, omega, traces: str = "scheme") -> DissipationBudget:
    """Compare the sampled energy rate with the boundary dissipation.

    ``traces="scheme"`` uses the simulator's own shear and tip velocity,
    averaged over each sampling interval; at stride 1 the trapezoidal step
    then satisfies the balance exactly.  ``traces="one-sided"`` uses the
    backward-difference ``u_xxx(1)`` of the sampled state, which measures
    consistency with the continuous identity ``dW/dt = -zeta^T Omega zeta``.
    """
    t, W = series.t, series.W
    if len(t) < 2:
        raise ValidationError("need at least two samples")
    if traces == "scheme":
        zeta = traj.zeta()
    elif traces == "one-sided":
        U, V = traj.arrays()
        h = traj.model.grid.h
        zeta = np.concatenate([one_sided_uxxx(np.moveaxis(U, 1, 0), h), V[:, -1, :]], axis=1)
    else:
        raise ValidationError(f"unknown traces {traces!r}")
    rate = np.diff(W) / np.diff(t)
    diss = boundary_dissipation(0.5 * (zeta[1:] + zeta[:-1]), omega)
    res = rate - diss
    scale = (float(traj.config.dt) + traj.model.grid.h) * max(float(W[0]), np.finfo(float).tiny)
    return DissipationBudget(rate, diss, res, float(np.max(np.abs(res)) / scale), traces)


def write_energy_csv(path, series: EnergySeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "W", "W_bend", "W_kin", "W_eta"])
        for row in series.samples:
            w.writerow([format(float(v), ".17g") for v in row])


def read_energy_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(t, W)`` from any CSV with ``t`` and ``W`` columns."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "t" not in reader.fieldnames or "W" not in reader.fieldnames:
            raise ValidationError(f"{path}: expected columns 't' and 'W'")
        try:
            rows = [(float(r["t"]), float(r["W"])) for r in reader]
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: non-numeric t or W value ({exc})") from exc
    if not rows:
        return np.zeros(0), np.zeros(0)
    arr = np.array(rows)
    return arr[:, 0], arr[:, 1]


@dataclass(frozen=True)
class LyapunovRun:
    """Long-horizon samples, stored scale-free: energies are relative to the segment start."""

    t: np.ndarray
    log_W: np.ndarray       # natural log of the true (unnormalized) energy
    vdot_over_w: np.ndarray  # central-difference dV/dt divided by W
    cross_over_w: np.ndarray  # (V - t W) / W
    tau: float

    def after_tau(self) -> np.ndarray:
        return self.t >= self.tau

    @property
    def max_vdot_after_tau(self) -> float:
        m = self.after_tau()
        return float(np.max(self.vdot_over_w[m])) if np.any(m) else float("nan")

    @property
    def c0_empirical(self) -> float:
        return float(np.max(np.abs(self.cross_over_w)))


def lyapunov_run(model, stepper, y0, P, S, Q, tau: float, t_end: float, segment: int = 5000) -> LyapunovRun:
    """Advance ``y0`` to ``t_end``, renormalizing between segments.

    The system is linear and ``dV/dt / W`` and ``(V - t W) / W`` are invariant
    under rescaling of the state, so each segment restarts from a unit-energy
    state and the running log-energy is accumulated separately.  Derivatives
    are central differences within a segment (one-sided at its ends).
    """
    dt = stepper.dt
    nsteps = int(np.ceil(t_end / dt))
    R = model.energy_root(P, S)
    h = model.grid.h
    y = np.array(y0, dtype=float)
    log_scale = 0.0
    ts, lw, vd, cw = [], [], [], []
    k = 0
    while k < nsteps:
        m = min(segment, nsteps - k)
        if m < 2:
            break
        Y, E = stepper.run(y, m, 1, R)
        t = (k + np.arange(m + 1)) * dt
        U, V = model.unpack_arrays(Y)
        cross = cross_term(U, V, Q, h)
        Vl = t * E + cross
        vd.append(np.gradient(Vl, dt) / E)
        cw.append(cross / E)
        lw.append(log_scale + np.log(E))
        ts.append(t)
        if not E[-1] > 0:
            break
        log_scale += float(np.log(E[-1]))
        y = Y[-1] / np.sqrt(E[-1])
        k += m
    cat = lambda a: np.concatenate(a) if a else np.zeros(0)
    return LyapunovRun(cat(ts), cat(lw), cat(vd), cat(cw), float(tau))
