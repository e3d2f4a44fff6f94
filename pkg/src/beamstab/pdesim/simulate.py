"""Scenario runs and their CSV output."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..model import ControllerGains, InitialCondition, Scenario, ScenarioConfig, SystemMatrices, check_compatible
from .grid import BeamState
from .operators import ClosedLoopModel, get_model
from .stepper import get_stepper


@dataclass
class Trajectory:
    model: ClosedLoopModel
    config: ScenarioConfig
    times: np.ndarray          # snapshot times
    Y: np.ndarray              # (nsnap, dim) packed states
    step_times: np.ndarray     # every step, when energies were recorded
    step_energy: np.ndarray | None

    @property
    def scenario(self) -> Scenario:
        return self.model.scenario

    @property
    def x(self) -> np.ndarray:
        return self.model.grid.x

    def arrays(self):
        """Return ``U, V`` with shape ``(nsnap, nx+1, n)``."""
        return self.model.unpack_arrays(self.Y)

    def states(self):
        for t, y in zip(self.times, self.Y):
            yield self.model.unpack(y, float(t))

    def state(self, k: int) -> BeamState:
        return self.model.unpack(self.Y[k], float(self.times[k]))

    def eta(self) -> np.ndarray:
        return (self.model.R_eta @ self.Y.T).T

    def zeta(self) -> np.ndarray:
        """Scheme-consistent ``(u_xxx(1), u_t(1))`` at each snapshot, shape ``(nsnap, 2n)``."""
        return np.hstack([(self.model.R_s @ self.Y.T).T, (self.model.R_vN @ self.Y.T).T])

    def controls(self) -> np.ndarray:
        return (self.model.R_w @ self.Y.T).T


def simulate(
    cfg: ScenarioConfig,
    sys: SystemMatrices,
    g: ControllerGains,
    ic: InitialCondition,
    weights=None,
    backend: str | None = None,
    y0: np.ndarray | None = None,
    integrator: str = "trapezoid",
) -> Trajectory:
    """Run one scenario over ``[0, cfg.t_final]``.

    ``weights`` may be a certificate or a ``(P, S)`` pair; when given, the
    energy is recorded at every step (not only at snapshots).  ``integrator``
    selects the trapezoidal (Newmark) step or exact exponential propagation.
    """
    check_compatible(sys, g)
    if ic.n != sys.n:
        raise ValueError(f"initial condition has {ic.n} components, system has {sys.n}")
    model = get_model(sys, g, cfg.scenario, cfg.nx)
    stepper = get_stepper(model, cfg.dt, integrator)
    if y0 is None:
        y0 = model.initial_vector(ic)
    H = None
    if weights is not None:
        P, S = (weights.P, weights.S) if hasattr(weights, "P") else weights
        H = model.energy_root(P, S)
    nsteps = cfg.nsteps
    Y, E = stepper.run(y0, nsteps, cfg.stride, H, backend)
    times = np.arange(Y.shape[0]) * cfg.stride * cfg.dt
    step_times = np.arange(nsteps + 1) * cfg.dt if H is not None else np.zeros(0)
    return Trajectory(model, cfg, times, Y, step_times, E if H is not None else None)


def _g(v) -> str:
    return format(float(v), ".17g")


def write_state_csv(path, traj: Trajectory) -> None:
    n = traj.model.n
    U, V = traj.arrays()
    x = traj.x
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x"] + [f"u_{j + 1}" for j in range(n)] + [f"v_{j + 1}" for j in range(n)])
        for k, t in enumerate(traj.times):
            for i, xi in enumerate(x):
                w.writerow([_g(t), _g(xi)] + [_g(a) for a in U[k, i]] + [_g(a) for a in V[k, i]])


def write_boundary_csv(path, traj: Trajectory, energy: np.ndarray) -> None:
    """Boundary series: time, control input, traces and energy at each snapshot."""
    n = traj.model.n
    wts = traj.controls()
    zeta = traj.zeta()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["t"] + [f"w_{j + 1}" for j in range(n)] + [f"uxxx1_{j + 1}" for j in range(n)]
            + [f"ut1_{j + 1}" for j in range(n)] + ["W"]
        )
        for k, t in enumerate(traj.times):
            w.writerow([_g(t)] + [_g(a) for a in wts[k]] + [_g(a) for a in zeta[k]] + [_g(energy[k])])


def read_boundary_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body]) if body else np.zeros((0, len(header)))
    return {name: data[:, i] for i, name in enumerate(header)}
