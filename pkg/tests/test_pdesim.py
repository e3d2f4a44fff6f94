import numpy as np
import pytest
import scipy.linalg as sla

from beamstab.analysis import energy_arrays
from beamstab.certify import assemble_omega
from beamstab.exceptions import ValidationError
from beamstab.model import (
    REFERENCE_P,
    REFERENCE_S,
    ControllerGains,
    InitialCondition,
    ProfileComponent,
    ScenarioConfig,
    SystemMatrices,
)
from beamstab.pdesim import (
    BACKENDS,
    BeamState,
    ExponentialStepper,
    Stepper,
    boundary_traces,
    control_first_order,
    eta_rhs,
    fourth_difference,
    get_model,
    read_boundary_csv,
    simulate,
    spatial_operator,
    step,
    tip_acceleration,
    write_boundary_csv,
    write_state_csv,
)
from beamstab.pdesim.kernels import BandedLU
from beamstab.pdesim.operators import bending_stiffness, one_sided_uxxx


def test_fourth_difference_exact_on_quartic():
    x = np.linspace(0, 1, 21)
    np.testing.assert_allclose(fourth_difference(x**4, x[1]), 24.0, rtol=1e-9)


def test_fourth_difference_second_order():
    errs = []
    for nx in (20, 40, 80):
        x = np.linspace(0, 1, nx + 1)
        errs.append(np.max(np.abs(fourth_difference(np.sin(2 * x), 1 / nx) - 16 * np.sin(2 * x[2:-2]))))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.05)
    assert np.log2(errs[1] / errs[2]) == pytest.approx(2.0, abs=0.05)


def test_one_sided_third_difference_exact_on_cubic():
    x = np.linspace(0, 1, 11)
    assert one_sided_uxxx(x**3, 0.1) == pytest.approx(6.0, rel=1e-9)


def test_boundary_traces_and_control(ref_gains):
    x = np.linspace(0, 1, 11)
    U = np.stack([x**3, 2 * x**3], axis=1)
    V = np.stack([x, -x], axis=1)
    tr = boundary_traces(BeamState(0.0, U, V))
    np.testing.assert_allclose(tr.uxxx1, [6.0, 12.0], rtol=1e-9)
    np.testing.assert_allclose(tr.zeta, [6.0, 12.0, 1.0, -1.0], rtol=1e-9)
    np.testing.assert_allclose(control_first_order(BeamState(0.0, U, V), ref_gains), [-20.0, 20.0])


def test_tip_acceleration_example():
    M, F = np.diag([0.1, 0.3]), np.array([[2.0, 0.4], [-0.8, 1.0]])
    acc = tip_acceleration(M, F, [1.0, 2.0], [0.5, -0.5])
    np.testing.assert_allclose(M @ acc, F @ [1.0, 2.0] + np.array([0.5, -0.5]))
    np.testing.assert_allclose(acc, [33.0, 7.0 / 3.0])


def test_eta_rhs_example(ref_sys, ref_gains):
    nx = 10
    V = np.zeros((nx + 1, 2))
    V[-1] = [1.0, -2.0]
    st = BeamState(0.0, np.zeros((nx + 1, 2)), V, np.array([0.5, 0.25]))
    B, K, M = ref_gains.B, ref_gains.K, ref_sys.M
    expected = -B @ st.eta - B @ (K - B @ M) @ V[-1]
    np.testing.assert_allclose(eta_rhs(st, ref_gains, ref_sys), expected)
    # B = diag(100, 50): -100 * 0.5 - 100 * (20 - 10) * 1 and -50 * 0.25 - 50 * (20 - 15) * -2
    np.testing.assert_allclose(expected, [-1050.0, 487.5])


def test_bending_stiffness_of_parabola():
    nx = 16
    x = np.linspace(0, 1, nx + 1)
    u = x[1:] ** 2
    # u_xx = 2 everywhere; the half weight at the clamp removes h/2 of the integral
    assert u @ bending_stiffness(nx) @ u == pytest.approx(4.0 - 2.0 / nx, rel=1e-12)


def test_energy_root_matches_analysis(ref_sys, ref_gains, rng):
    model = get_model(ref_sys, ref_gains, "c", 16)
    y = rng.standard_normal(model.dim)
    R = model.energy_root(REFERENCE_P, REFERENCE_S)
    W_root = 0.5 * np.sum((R @ y) ** 2)
    H = model.energy_matrix(REFERENCE_P, REFERENCE_S)
    assert 0.5 * y @ H @ y == pytest.approx(W_root, rel=1e-10)
    st = model.unpack(y)
    W = energy_arrays(st.U, st.V, st.eta, REFERENCE_P, REFERENCE_S, ref_sys.lambda_diag, model.grid.h)[0]
    assert float(W) == pytest.approx(W_root, rel=1e-10)


def test_pack_unpack_round_trip(ref_sys, ref_gains, rng):
    for scen in "abc":
        model = get_model(ref_sys, ref_gains, scen, 12)
        y = rng.standard_normal(model.dim)
        np.testing.assert_array_equal(model.pack(model.unpack(y)), y)


def test_model_is_banded(ref_sys, ref_gains):
    model = get_model(ref_sys, ref_gains, "b", 50)
    lu = BandedLU(Stepper(model, 1e-3).lhs)
    assert lu.kl <= 12 and lu.ku <= 12


def test_full_eta_relation_at_start(ref_sys, ref_gains, ref_ic):
    traj = simulate(ScenarioConfig("c", 40, 1e-3, 0.01, 1), ref_sys, ref_gains, ref_ic)
    eta0 = traj.eta()[0]
    expected = -ref_sys.F @ ref_ic.uxxx_at_tip() + ref_gains.B @ ref_sys.M @ np.zeros(2)
    np.testing.assert_allclose(eta0, expected, rtol=1e-12)


@pytest.mark.parametrize("scen", "abc")
def test_zero_state_is_fixed(ref_sys, ref_gains, scen):
    out = step(BeamState.zeros(20, 2), ref_sys, ref_gains, scen, 1e-3)
    assert not np.any(out.U) and not np.any(out.V)
    assert out.t == pytest.approx(1e-3)


@pytest.mark.parametrize("scen", "abc")
def test_step_is_linear(ref_sys, ref_gains, rng, scen):
    model = get_model(ref_sys, ref_gains, scen, 16)
    y1, y2 = rng.standard_normal(model.dim), rng.standard_normal(model.dim)
    adv = lambda y: model.pack(step(model.unpack(y), ref_sys, ref_gains, scen, 2e-3))
    np.testing.assert_allclose(adv(2.0 * y1 - 3.0 * y2), 2.0 * adv(y1) - 3.0 * adv(y2), rtol=1e-9, atol=1e-9)


def test_trapezoid_matches_exponential_at_second_order(ref_sys, ref_gains, ref_ic):
    # dt small enough that every grid mode is resolved
    model = get_model(ref_sys, ref_gains, "c", 8)
    y0 = model.initial_vector(ref_ic)
    exact = sla.expm(model.A.toarray() * 0.2) @ y0
    errs = []
    for dt in (1e-4, 5e-5, 2.5e-5):
        Y, _ = Stepper(model, dt).run(y0, int(round(0.2 / dt)), int(round(0.2 / dt)))
        errs.append(np.linalg.norm(Y[-1] - exact))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.1)
    assert np.log2(errs[1] / errs[2]) == pytest.approx(2.0, abs=0.1)
    Ye, _ = ExponentialStepper(model, 0.01).run(y0, 20, 20)
    np.testing.assert_allclose(Ye[-1], exact, rtol=1e-9, atol=1e-12)


def test_backends_agree(ref_sys, ref_gains, ref_ic):
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    cfg = ScenarioConfig("c", 50, 1e-3, 0.5, 10)
    runs = [simulate(cfg, ref_sys, ref_gains, ref_ic, (REFERENCE_P, REFERENCE_S), backend=b) for b in BACKENDS]
    np.testing.assert_allclose(runs[0].Y, runs[1].Y, rtol=0, atol=1e-8 * np.abs(runs[1].Y).max())
    np.testing.assert_allclose(runs[0].step_energy, runs[1].step_energy, rtol=1e-9)


def test_unknown_backend(ref_sys, ref_gains, ref_ic):
    with pytest.raises(ValueError):
        simulate(ScenarioConfig("a", 10, 1e-3, 0.01, 1), ref_sys, ref_gains, ref_ic, backend="gpu")


def test_open_loop_conserves_mechanical_energy():
    # single beam: W + p/2 F^-1 M v(1)^2 is invariant when the boundary state carries no weight
    lam, m, f, p = 15.0, 0.1, 2.0, 0.7
    sysm = SystemMatrices.from_diag([lam], [[m]], [[f]])
    g = ControllerGains(np.zeros((1, 1)), np.eye(1))
    ic = InitialCondition((ProfileComponent(0.05, "sin_half_pi"),))
    traj = simulate(ScenarioConfig("a", 40, 1e-3, 2.0, 1), sysm, g, ic, weights=([p], [0.0]))
    _, V = traj.arrays()
    E = traj.step_energy + 0.5 * p * m / f * V[:, -1, 0] ** 2
    np.testing.assert_allclose(E, E[0], rtol=1e-9)


def test_discrete_dissipation_identity(ref_sys, ref_gains, ref_ic):
    # W_{k+1} - W_k = -dt zeta_mid^T Omega zeta_mid with the scheme traces
    cfg = ScenarioConfig("c", 30, 2e-3, 0.2, 1)
    traj = simulate(cfg, ref_sys, ref_gains, ref_ic, (REFERENCE_P, REFERENCE_S))
    z = traj.zeta()
    zm = 0.5 * (z[1:] + z[:-1])
    om = assemble_omega(ref_sys, ref_gains, REFERENCE_P, REFERENCE_S)
    dW = np.diff(traj.step_energy)
    pred = -cfg.dt * np.einsum("ki,ij,kj->k", zm, om, zm)
    np.testing.assert_allclose(dW, pred, atol=1e-9 * traj.step_energy[0])


def test_closed_loop_energy_decreases(ref_sys, ref_gains, ref_ic):
    traj = simulate(ScenarioConfig("c", 40, 1e-3, 1.0, 1), ref_sys, ref_gains, ref_ic, (REFERENCE_P, REFERENCE_S))
    W = traj.step_energy
    assert np.all(np.diff(W) <= 1e-12 * W[0])


def test_spatial_operator_rejects_coarse_grid(ref_sys):
    with pytest.raises(ValidationError):
        spatial_operator(BeamState.zeros(4, 2), ref_sys, "a")


def test_spatial_operator_interior_is_fourth_difference(ref_sys, ref_gains):
    nx = 20
    x = np.linspace(0, 1, nx + 1)
    U = np.stack([np.sin(x) * x**2, x**4], axis=1)
    acc = spatial_operator(BeamState(0.0, U, np.zeros_like(U)), ref_sys, "b", ref_gains)
    expected = -ref_sys.lambda_diag * fourth_difference(U, 1 / nx)
    np.testing.assert_allclose(acc[2:-2], expected, rtol=1e-9)


def test_ic_component_mismatch(ref_sys, ref_gains):
    ic = InitialCondition((ProfileComponent(1.0, "sin_half_pi"),))
    with pytest.raises(ValueError):
        simulate(ScenarioConfig("a", 10, 1e-3, 0.01, 1), ref_sys, ref_gains, ic)


def test_csv_round_trip(tmp_path, ref_sys, ref_gains, ref_ic):
    traj = simulate(ScenarioConfig("c", 20, 1e-3, 0.05, 10), ref_sys, ref_gains, ref_ic)
    W = np.linspace(1.0, 0.5, len(traj.times))
    write_boundary_csv(tmp_path / "b.csv", traj, W)
    data = read_boundary_csv(tmp_path / "b.csv")
    np.testing.assert_array_equal(data["t"], traj.times)
    np.testing.assert_array_equal(data["W"], W)
    np.testing.assert_array_equal(data["ut1_2"], traj.arrays()[1][:, -1, 1])
    write_state_csv(tmp_path / "s.csv", traj)
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0].split(",")[:2] == ["t", "x"]
    assert len(rows) == 1 + len(traj.times) * 21
