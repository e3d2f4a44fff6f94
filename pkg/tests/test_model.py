import numpy as np
import pytest

from beamstab.exceptions import ValidationError
from beamstab.model import (
    ControllerGains,
    InitialCondition,
    ProfileComponent,
    Scenario,
    ScenarioConfig,
    SystemMatrices,
    reference_initial_condition,
    validate_gains,
    validate_system,
)


def test_reference_system_is_valid(ref_sys, ref_gains):
    assert validate_system(ref_sys).ok
    assert validate_gains(ref_gains).ok
    assert ref_sys.n == ref_gains.n == 2
    np.testing.assert_allclose(ref_gains.B, np.diag([100.0, 50.0]))


def test_matrices_are_read_only(ref_sys):
    with pytest.raises(ValueError):
        ref_sys.F[0, 0] = 1.0


@pytest.mark.parametrize(
    "lam, M, F, message",
    [
        ([1.0, -1.0], np.eye(2), np.eye(2), "Lambda not positive definite"),
        ([1.0, 1.0], [[1.0, 0.5], [0.0, 1.0]], np.eye(2), "M not symmetric"),
        ([1.0, 1.0], -np.eye(2), np.eye(2), "M not positive definite"),
        ([1.0, 1.0], np.eye(2), [[1.0, 2.0], [0.5, 1.0]], "F singular"),
    ],
)
def test_validate_system_names_violation(lam, M, F, message):
    report = validate_system(SystemMatrices.from_diag(lam, M, F))
    assert message in report.violations
    with pytest.raises(ValidationError):
        report.raise_if_failed()


def test_nondiagonal_lambda_rejected():
    s = SystemMatrices([[1.0, 0.1], [0.1, 1.0]], np.eye(2), np.eye(2))
    assert "Lambda not diagonal" in validate_system(s).violations


def test_singular_binv_rejected():
    g = ControllerGains(K=np.eye(2), Binv=[[1.0, 1.0], [1.0, 1.0]])
    assert not validate_gains(g).ok


def test_shape_errors():
    with pytest.raises(ValidationError):
        SystemMatrices.from_diag([1.0, 2.0], np.eye(3), np.eye(2))
    with pytest.raises(ValidationError):
        ControllerGains(K=np.eye(3), Binv=np.eye(2))
    with pytest.raises(ValidationError):
        SystemMatrices.from_diag([1.0], [[np.nan]], [[1.0]])


@pytest.mark.parametrize("value, expected", [("a", Scenario.OPEN_LOOP), ("open-loop", Scenario.OPEN_LOOP),
                                             ("B", Scenario.FIRST_ORDER), ("full", Scenario.FULL)])
def test_scenario_parse(value, expected):
    assert Scenario.parse(value) is expected


def test_scenario_parse_rejects_unknown():
    with pytest.raises(ValidationError):
        Scenario.parse("d")


@pytest.mark.parametrize("kw", [dict(nx=4), dict(nx=10.5), dict(dt=0.0), dict(t_final=-1.0), dict(stride=0)])
def test_scenario_config_rejects(kw):
    with pytest.raises(ValidationError):
        ScenarioConfig(**kw)


def test_scenario_config_steps():
    assert ScenarioConfig("c", 100, 5e-4, 5.0).nsteps == 10000


def test_lifted_profiles_satisfy_boundary_conditions():
    ic = reference_initial_condition()
    assert np.allclose(ic.displacement([0.0])[0], 0.0, atol=1e-15)
    assert np.allclose(ic.displacement([0.0], 1)[0], 0.0, atol=1e-15)
    assert np.allclose(ic.displacement([1.0], 2)[0], 0.0, atol=1e-15)
    assert ic.check_clamped().ok


def test_lift_leaves_third_derivative():
    lifted = reference_initial_condition(lift=True)
    raw = reference_initial_condition(lift=False)
    x = np.linspace(0, 1, 11)
    np.testing.assert_allclose(lifted.displacement(x, 3), raw.displacement(x, 3))
    hp = np.pi / 2
    # d^3/dx^3 of 0.03 sin(pi x / 2) at x = 1
    np.testing.assert_allclose(raw.uxxx_at_tip()[0], -0.03 * hp**3 * np.cos(hp), atol=1e-15)


def test_unclamped_profile_detected():
    ic = InitialCondition((ProfileComponent(1.0, "cos_half_pi"),), lift=False)
    assert not ic.check_clamped().ok


def test_sampled_profile_has_no_exact_tip_derivative():
    x = np.linspace(0, 1, 21)
    ic = InitialCondition((ProfileComponent(1.0, "samples", tuple(x**2)),), lift=False)
    assert ic.uxxx_at_tip() is None
    np.testing.assert_allclose(ic.displacement([0.5])[0, 0], 0.25, atol=1e-12)


def test_zero_initial_condition():
    ic = InitialCondition.zero(3)
    assert ic.n == 3
    assert not np.any(ic.displacement(np.linspace(0, 1, 5)))
    assert not np.any(ic.velocity_samples(np.linspace(0, 1, 5)))
