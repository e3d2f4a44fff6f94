"""Plant, controller and scenario data for the coupled tip-mass beam system.

The plant is ``u_tt = -Lambda u_xxxx`` on ``(0, 1)`` with ``u(0) = u_x(0) = 0``,
``u_xx(1) = 0`` and the tip-mass condition ``M u_tt(1) = F u_xxx(1) + w``.
All quantities are dimensionless.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import ValidationError


@dataclass(frozen=True)
class Tolerances:
    diag_offdiag: float = 1e-14
    symmetry: float = 1e-12
    rel_singular: float = 1e-10
    inverse_residual: float = 1e-10


DEFAULT_TOLERANCES = Tolerances()


def _as_square(name: str, a, n: int | None = None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{name} must be a square matrix, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ValidationError(f"{name} must be {n}x{n}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def _singular(a: np.ndarray, rel: float) -> bool:
    sv = np.linalg.svd(a, compute_uv=False)
    return not sv[-1] > rel * sv[0]


@dataclass(frozen=True)
class SystemMatrices:
    """Plant data: diagonal stiffness ``Lambda``, tip mass ``M``, coupling ``F``."""

    Lambda: np.ndarray
    M: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        lam = _as_square("Lambda", self.Lambda)
        n = lam.shape[0]
        object.__setattr__(self, "Lambda", lam)
        object.__setattr__(self, "M", _as_square("M", self.M, n))
        object.__setattr__(self, "F", _as_square("F", self.F, n))

    @classmethod
    def from_diag(cls, lambda_diag: Sequence[float], M, F) -> "SystemMatrices":
        return cls(np.diag(np.asarray(lambda_diag, dtype=float)), M, F)

    @property
    def n(self) -> int:
        return self.Lambda.shape[0]

    @property
    def lambda_diag(self) -> np.ndarray:
        return np.diag(self.Lambda).copy()


@dataclass(frozen=True)
class ControllerGains:
    """Feedback gains ``K`` and ``B``; ``B`` is stored through its inverse."""

    K: np.ndarray
    Binv: np.ndarray
    B: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        binv = _as_square("Binv", self.Binv)
        object.__setattr__(self, "Binv", binv)
        object.__setattr__(self, "K", _as_square("K", self.K, binv.shape[0]))
        try:
            b = np.linalg.inv(binv)
        except np.linalg.LinAlgError:
            b = np.full_like(binv, np.nan)
        b.setflags(write=False)
        object.__setattr__(self, "B", b)

    @property
    def n(self) -> int:
        return self.K.shape[0]


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def raise_if_failed(self) -> None:
        if self.violations:
            raise ValidationError("; ".join(self.violations))


def validate_system(sys: SystemMatrices, tol: Tolerances = DEFAULT_TOLERANCES) -> ValidationReport:
    """Check the plant invariants and name every one that fails."""
    report = ValidationReport()
    lam = sys.Lambda
    off = lam - np.diag(np.diag(lam))
    if np.max(np.abs(off), initial=0.0) > tol.diag_offdiag:
        report.violations.append("Lambda not diagonal")
    if not np.min(np.diag(lam)) > 0:
        report.violations.append("Lambda not positive definite")
    M = sys.M
    if np.max(np.abs(M - M.T)) > tol.symmetry:
        report.violations.append("M not symmetric")
    if not np.linalg.eigvalsh(0.5 * (M + M.T))[0] > 0:
        report.violations.append("M not positive definite")
    if _singular(sys.F, tol.rel_singular):
        report.violations.append("F singular")
    return report


def validate_gains(g: ControllerGains, tol: Tolerances = DEFAULT_TOLERANCES) -> ValidationReport:
    report = ValidationReport()
    if not np.all(np.isfinite(g.Binv)) or _singular(g.Binv, tol.rel_singular):
        report.violations.append("Binv singular")
        return report
    resid = np.max(np.abs(g.B @ g.Binv - np.eye(g.n)))
    if resid > tol.inverse_residual:
        report.violations.append(f"B*Binv deviates from identity by {resid:.2e}")
    return report


def check_compatible(sys: SystemMatrices, g: ControllerGains) -> None:
    if sys.n != g.n:
        raise ValidationError(f"system has n={sys.n} but gains have n={g.n}")


# -- initial conditions -------------------------------------------------------

_HALF_PI = 0.5 * np.pi


def _sin_half_pi(x, d=0):
    # d-th derivative of sin(pi x / 2)
    return _HALF_PI**d * np.sin(_HALF_PI * np.asarray(x, dtype=float) + d * _HALF_PI)


def _cos_half_pi(x, d=0):
    return _HALF_PI**d * np.cos(_HALF_PI * np.asarray(x, dtype=float) + d * _HALF_PI)


PROFILES: dict[str, Callable] = {
    "sin_half_pi": _sin_half_pi,
    "cos_half_pi": _cos_half_pi,
}


@dataclass(frozen=True)
class ProfileComponent:
    amplitude: float
    profile: str
    samples: tuple[float, ...] | None = None


@dataclass(frozen=True)
class InitialCondition:
    """Initial displacement per component, plus zero or sampled velocity.

    Analytic profiles are re-sampled exactly on any grid.  With ``lift`` on,
    each profile ``f`` is replaced by
    ``f(x) - f(0) - f'(0) x - f''(1) x^2 / 2`` so the displacement satisfies
    ``u(0) = u_x(0) = u_xx(1) = 0``; the correction is a quadratic, so it
    leaves ``u_xxx`` untouched.
    """

    components: tuple[ProfileComponent, ...]
    lift: bool = True
    velocity: tuple[tuple[float, ...], ...] | None = None

    @property
    def n(self) -> int:
        return len(self.components)

    @classmethod
    def zero(cls, n: int) -> "InitialCondition":
        return cls(tuple(ProfileComponent(0.0, "sin_half_pi") for _ in range(n)))

    def _analytic(self, comp: ProfileComponent, x: np.ndarray, d: int) -> np.ndarray:
        f = PROFILES[comp.profile]
        val = f(x, d)
        if self.lift:
            corr = [f(0.0, 0), f(0.0, 1), f(1.0, 2)]
            if d == 0:
                val = val - corr[0] - corr[1] * x - 0.5 * corr[2] * x**2
            elif d == 1:
                val = val - corr[1] - corr[2] * x
            elif d == 2:
                val = val - corr[2]
        return comp.amplitude * val

    def _sampled(self, comp: ProfileComponent, x: np.ndarray) -> np.ndarray:
        from scipy.interpolate import CubicSpline

        s = np.asarray(comp.samples, dtype=float)
        xs = np.linspace(0.0, 1.0, s.size)
        return comp.amplitude * CubicSpline(xs, s)(x)

    def displacement(self, x, derivative: int = 0) -> np.ndarray:
        """Sample ``u0`` (or one of its derivatives) at points ``x``; shape (len(x), n)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        cols = []
        for comp in self.components:
            if comp.profile == "samples":
                if derivative == 0:
                    cols.append(self._sampled(comp, x))
                else:
                    from scipy.interpolate import CubicSpline

                    s = np.asarray(comp.samples, dtype=float)
                    xs = np.linspace(0.0, 1.0, s.size)
                    cols.append(comp.amplitude * CubicSpline(xs, s)(x, derivative))
            else:
                cols.append(self._analytic(comp, x, derivative))
        return np.stack(cols, axis=1)

    def velocity_samples(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.velocity is None:
            return np.zeros((x.size, self.n))
        cols = []
        for s in self.velocity:
            s = np.asarray(s, dtype=float)
            cols.append(np.interp(x, np.linspace(0.0, 1.0, s.size), s))
        return np.stack(cols, axis=1)

    def uxxx_at_tip(self) -> np.ndarray | None:
        """Exact ``u0_xxx(1)`` when every component is analytic, else ``None``."""
        if any(c.profile == "samples" for c in self.components):
            return None
        return self.displacement([1.0], derivative=3)[0]

    def check_clamped(self, nx_values=(64, 128, 256)) -> ValidationReport:
        """Verify ``u0(0) = 0`` and that the one-sided slope at 0 vanishes under refinement."""
        report = ValidationReport()
        u00 = self.displacement([0.0])[0]
        if np.max(np.abs(u00)) > 1e-12:
            report.violations.append("u0(0) != 0")
        slopes = []
        for nx in nx_values:
            h = 1.0 / nx
            u = self.displacement([0.0, h, 2 * h])
            slopes.append(np.max(np.abs((-3 * u[0] + 4 * u[1] - u[2]) / (2 * h))))
        scale = max(1.0, float(np.max(np.abs(self.displacement(np.linspace(0, 1, 33))))))
        if not (slopes[-1] <= 1e-8 * scale or slopes[-1] < 0.5 * slopes[0]):
            report.violations.append("u0_x(0) does not vanish under refinement")
        return report


# -- scenario configuration ----------------------------------------------------


class Scenario(enum.Enum):
    """The three closed-loop configurations: uncontrolled, ``-K u_t`` only, full law."""

    OPEN_LOOP = "a"
    FIRST_ORDER = "b"
    FULL = "c"

    @classmethod
    def parse(cls, value) -> "Scenario":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {
            "a": cls.OPEN_LOOP, "open_loop": cls.OPEN_LOOP, "openloop": cls.OPEN_LOOP,
            "b": cls.FIRST_ORDER, "first_order": cls.FIRST_ORDER, "firstorder": cls.FIRST_ORDER,
            "c": cls.FULL, "full": cls.FULL,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValidationError(f"unknown scenario {value!r}") from None


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: Scenario = Scenario.FULL
    nx: int = 100
    dt: float = 1e-3
    t_final: float = 5.0
    stride: int = 10

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario.parse(self.scenario))
        if int(self.nx) != self.nx or self.nx < 8:
            raise ValidationError(f"nx >= 8 required, got {self.nx}")
        if not self.dt > 0:
            raise ValidationError(f"dt > 0 required, got {self.dt}")
        if not self.t_final > 0:
            raise ValidationError(f"t_final > 0 required, got {self.t_final}")
        if int(self.stride) != self.stride or self.stride < 1:
            raise ValidationError(f"stride >= 1 required, got {self.stride}")

    @property
    def nsteps(self) -> int:
        return int(round(self.t_final / self.dt))


# -- the worked example --------------------------------------------------------

REFERENCE_P = np.diag([0.954272, 0.881155])
REFERENCE_S = np.diag([0.00197144, 0.0271201])


def reference_system() -> SystemMatrices:
    return SystemMatrices.from_diag([15.0, 10.0], np.diag([0.1, 0.3]), [[2.0, 0.4], [-0.8, 1.0]])


def reference_gains() -> ControllerGains:
    return ControllerGains(K=np.diag([20.0, 20.0]), Binv=np.diag([0.01, 0.02]))


def reference_initial_condition(lift: bool = True) -> InitialCondition:
    return InitialCondition(
        (ProfileComponent(0.03, "sin_half_pi"), ProfileComponent(-0.02, "cos_half_pi")),
        lift=lift,
    )
