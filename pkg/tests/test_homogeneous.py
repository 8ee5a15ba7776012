from __future__ import annotations

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from softflow.domains import Ball, Radial, hexagon_domain
from softflow.homogeneous import (
    CSV_HEADER,
    HomogeneousState,
    LoadingProgram,
    critical_time,
    default_windows,
    energy_audit_homogeneous,
    integrate_eps_ode,
    quasistatic_assemble,
    slow_fast_coefficients,
    verify_eps_convergence,
    write_run_csv,
)
from softflow.softening import PlateauPotential, SqrtPotential, TabulatedPotential
from softflow.tensors import IsotropicElasticity, shear_embed

SQRT = SqrtPotential()

# the no-window parameter set (B0 > 0 everywhere) and the windowed one
MU_A, S_A, TH0_A = 1.0, 1.0, 0.5
MU_J, S_J = 0.008, 25.0


def ball_scenario(mu, S, th0):
    return dict(C=IsotropicElasticity(mu),
                K=Radial(Ball(1.0)),
                V=SQRT,
                loading=LoadingProgram.linear(shear_embed(S, 2)),
                init=HomogeneousState(0.0, shear_embed(0.0, 2), th0))


@pytest.fixture(scope="module")
def dec_a():
    return slow_fast_coefficients(MU_A, S_A, SQRT)


@pytest.fixture(scope="module")
def dec_j():
    return slow_fast_coefficients(MU_J, S_J, SQRT)


@pytest.fixture(scope="module")
def run_a():
    sc = ball_scenario(MU_A, S_A, TH0_A)
    return integrate_eps_ode(sc["C"], sc["K"], sc["V"], sc["loading"],
                             sc["init"], eps=5e-3, t_end=5.0, tol=1e-9)


@pytest.fixture(scope="module")
def run_a_scalar():
    # same physics in the scalar convention: planar domain, bare-real loading
    return integrate_eps_ode(IsotropicElasticity(MU_A), Ball(1.0), SQRT,
                             LoadingProgram.linear(1.0),
                             HomogeneousState(0.0, 0.0, TH0_A),
                             eps=5e-3, t_end=5.0, tol=1e-9)


@pytest.fixture(scope="module")
def traj_a(dec_a):
    return quasistatic_assemble(dec_a, MU_A, S_A, SQRT, TH0_A, t_end=5.0)


@pytest.fixture(scope="module")
def traj_b(dec_j):
    return quasistatic_assemble(dec_j, MU_J, S_J, SQRT, 1.0, t_end=5.0)


@pytest.fixture(scope="module")
def traj_c(dec_j):
    return quasistatic_assemble(dec_j, MU_J, S_J, SQRT, 0.002, t_end=5.0)


# --------------------------------------------------------------------------
# critical time
# --------------------------------------------------------------------------


def test_critical_time_closed_form():
    # V'(sqrt 3) = -sqrt(3)/4, so t0 = sqrt(1 - 3/16) = sqrt(13)/4
    t0 = critical_time(0.5, 1.0, SQRT, np.sqrt(3.0))
    assert t0 == pytest.approx(np.sqrt(13.0) / 4.0, abs=1e-15)


def test_critical_time_zero_slope_limit():
    for mu, S in [(0.5, 1.0), (2.0, 3.0), (0.008, 25.0)]:
        assert critical_time(mu, S, SQRT, 0.0) == pytest.approx(
            1.0 / (2.0 * mu * S), rel=1e-15)


def test_critical_time_scales_inversely_with_mu():
    vals = [mu * critical_time(mu, 2.0, SQRT, 1.3) for mu in (0.25, 0.5, 2.0, 8.0)]
    assert np.ptp(vals) < 1e-15


def test_critical_time_rejects_zero_loading():
    with pytest.raises(ValueError, match="invalid loading"):
        critical_time(1.0, 0.0, SQRT, 0.5)


def test_critical_time_rejects_supercritical_slope():
    steep = TabulatedPotential(
        knots=[-1.0, 0.0, 1.0], values=[1.5, 0.0, -1.5],
        slopes=[-1.5, -1.5, -1.5], curvatures=[0.0, 0.0, 0.0],
        m_bound=0.1, slope_minus_inf=1.5, slope_plus_inf=-1.5)
    with pytest.raises(ValueError, match="invalid initial state"):
        critical_time(1.0, 1.0, steep, 0.5)


# --------------------------------------------------------------------------
# loading programs
# --------------------------------------------------------------------------


def test_loading_linear_profile_and_rate():
    lp = LoadingProgram.linear(shear_embed(2.0, 2))
    assert lp.d == 2 and lp.norm == pytest.approx(2.0)
    ts = np.linspace(0.0, 4.0, 9)
    assert np.allclose(lp.profile(ts), ts)
    assert np.allclose(lp.rate(ts), 1.0)
    assert lp.kink_times(0.0, 4.0) == ()


def test_loading_triangular_rooftop():
    lp = LoadingProgram.triangular(1.0, 3.5)
    assert lp.profile(3.5) == pytest.approx(3.5)
    assert lp.profile(5.0) == pytest.approx(2.0)
    assert lp.rate(3.4) == 1.0 and lp.rate(3.6) == -1.0
    assert lp.kink_times(0.0, 8.0) == (3.5,)
    assert lp.kink_times(4.0, 8.0) == ()


def test_loading_tabulated_holds_outside_knots():
    lp = LoadingProgram.tabulated(1.0, [(1.0, 0.0), (2.0, 2.0), (4.0, 1.0)])
    assert lp.profile(0.0) == 0.0 and lp.profile(9.0) == 1.0
    assert lp.rate(0.5) == 0.0 and lp.rate(5.0) == 0.0
    assert lp.rate(1.5) == pytest.approx(2.0)
    assert lp.rate(3.0) == pytest.approx(-0.5)
    # right-hand slope at the interior kink
    assert lp.rate(2.0) == pytest.approx(-0.5)


def test_loading_validation():
    with pytest.raises(ValueError, match="turnaround"):
        LoadingProgram.triangular(1.0, 0.0)
    with pytest.raises(ValueError, match="increasing knots"):
        LoadingProgram.tabulated(1.0, [(2.0, 0.0), (1.0, 1.0)])
    with pytest.raises(ValueError, match="unknown kind"):
        LoadingProgram(1.0, kind="sawtooth")


@given(st.floats(0.5, 10.0), st.floats(0.0, 1.0))
@settings(max_examples=40, deadline=None)
def test_loading_triangular_is_symmetric(turn, s):
    lp = LoadingProgram.triangular(1.0, turn)
    off = s * turn
    assert float(lp.profile(turn + off)) == pytest.approx(
        float(lp.profile(turn - off)), abs=1e-12)


@given(st.lists(st.tuples(st.floats(-5.0, 5.0), st.floats(-3.0, 3.0)),
                min_size=2, max_size=6, unique_by=lambda k: round(k[0], 3)))
@settings(max_examples=40, deadline=None)
def test_loading_tabulated_profile_interpolates(knots):
    knots = sorted(knots)
    if min(b - a for (a, _), (b, _) in zip(knots, knots[1:])) < 1e-2:
        return
    lp = LoadingProgram.tabulated(1.0, knots)
    vs = [v for _, v in knots]
    ts = np.linspace(knots[0][0] - 1.0, knots[-1][0] + 1.0, 50)
    prof = lp.profile(ts)
    assert np.all(prof >= min(vs) - 1e-9) and np.all(prof <= max(vs) + 1e-9)
    for t, v in knots:
        assert float(lp.profile(t)) == pytest.approx(v, abs=1e-12)


# --------------------------------------------------------------------------
# regularized runs
# --------------------------------------------------------------------------


def test_run_dormant_phase_is_exact(run_a):
    t0 = critical_time(MU_A, S_A, SQRT, TH0_A)
    assert run_a.t_yield == pytest.approx(t0, abs=1e-12)
    ts = np.linspace(0.0, 0.95 * t0, 40)
    assert np.all(run_a.theta(ts) == TH0_A)
    assert np.all(run_a.xi_p_flat(ts) == 0.0)
    acc_h, acc_v, _ = run_a.accumulators(ts)
    assert np.all(acc_h == 0.0) and np.all(acc_v == 0.0)
    assert np.all(run_a.psi(ts) == pytest.approx(0.0, abs=1e-15))
    # purely elastic stress ramp
    assert run_a.sigma_norm(ts) == pytest.approx(2.0 * MU_A * S_A * ts, abs=1e-12)


def test_run_first_contact_sits_on_the_boundary(run_a):
    sn = float(run_a.sigma_norm([run_a.t_yield])[0])
    ze = -float(SQRT.slope(TH0_A))
    assert np.hypot(sn, ze) == pytest.approx(1.0, abs=1e-10)


def test_run_constraint_residual_small(run_a):
    # flow-equation defect measured by differencing the dense output; the
    # onset layer blurs over the difference step, so sample past it
    ts = np.linspace(run_a.t_yield + 10 * run_a.eps, 5.0 - run_a.eps, 300)
    assert np.max(run_a.constraint_residual(ts)) < 10.0 * run_a.tol


def test_run_energy_equality(run_a):
    ts = np.linspace(0.0, 5.0, 200)
    assert np.max(np.abs(run_a.energy_residual(ts))) < 1e-6


def test_run_monotonicity(run_a):
    ts = np.linspace(0.0, 5.0, 800)
    th = run_a.theta(ts)
    ps = run_a.psi(ts)
    assert np.all(np.diff(th) >= -1e-12)
    assert np.all(np.diff(ps) >= -1e-12)
    live = ts >= run_a.t_yield
    assert np.all(ts[live] - ps[live] > 0.0)


def test_run_viscous_rate_below_softening_slope(run_a):
    # eps * theta_dot stays inside [0, -V'(theta))
    h = run_a.eps / 2.0
    ts = np.linspace(run_a.t_yield + 5 * run_a.eps, 5.0 - h, 200)
    v = run_a.eps * (run_a.theta(ts + h) - run_a.theta(ts - h)) / (2.0 * h)
    bound = -SQRT.slope(run_a.theta(ts))
    assert np.all(v >= -1e-10)
    assert np.all(v <= bound + 1e-8)


def test_run_matrix_and_scalar_conventions_agree(run_a, run_a_scalar):
    ts = np.linspace(0.0, 5.0, 400)
    assert np.max(np.abs(run_a.theta(ts) - run_a_scalar.theta(ts))) < 1e-8
    assert np.max(np.abs(run_a.sigma_norm(ts)
                         - run_a_scalar.sigma_norm(ts))) < 1e-8


def test_run_against_fixed_step_oracle(run_a_scalar):
    """Independent RK4 of the scalar-ray flow reproduces the run."""
    eps = run_a_scalar.eps
    t0 = run_a_scalar.t_yield

    def f(t, e, th):
        sig = 2.0 * MU_A * e
        ze = -float(SQRT.slope(th))
        r = np.hypot(sig, ze)
        if r <= 1.0:
            return S_A, 0.0
        fac = (1.0 - 1.0 / r) / eps
        return S_A - fac * sig, fac * ze

    h = eps / 16.0
    n = int(np.ceil((2.0 - t0) / h))
    h = (2.0 - t0) / n
    e, th, t = t0 * S_A, TH0_A, t0
    for _ in range(n):
        k1 = f(t, e, th)
        k2 = f(t + h / 2, e + h / 2 * k1[0], th + h / 2 * k1[1])
        k3 = f(t + h / 2, e + h / 2 * k2[0], th + h / 2 * k2[1])
        k4 = f(t + h, e + h * k3[0], th + h * k3[1])
        e += h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        th += h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        t += h
    assert float(run_a_scalar.theta([2.0])[0]) == pytest.approx(th, abs=2e-7)
    assert float(run_a_scalar.xi_e_flat([2.0])[0, 0]) == pytest.approx(e, abs=2e-7)


def test_run_states_roundtrip(run_a):
    st_ = run_a.states([0.2, 3.0])
    assert st_[0].t == 0.2 and st_[0].theta == TH0_A
    assert st_[1].theta == pytest.approx(float(run_a.theta([3.0])[0]))
    assert st_[0].xi_e.d == 2


def test_run_rejects_bad_parameters():
    sc = ball_scenario(MU_A, S_A, TH0_A)
    with pytest.raises(ValueError, match="eps must be positive"):
        integrate_eps_ode(sc["C"], sc["K"], sc["V"], sc["loading"],
                          sc["init"], eps=0.0, t_end=5.0)
    with pytest.raises(ValueError, match="tol must be positive"):
        integrate_eps_ode(sc["C"], sc["K"], sc["V"], sc["loading"],
                          sc["init"], eps=1e-2, t_end=5.0, tol=0.0)
    with pytest.raises(ValueError, match="t_end"):
        integrate_eps_ode(sc["C"], sc["K"], sc["V"], sc["loading"],
                          sc["init"], eps=1e-2, t_end=0.0)


def test_run_rejects_mismatched_domain_shape():
    sc = ball_scenario(MU_A, S_A, TH0_A)
    with pytest.raises(ValueError, match="radially lifted"):
        integrate_eps_ode(sc["C"], Ball(1.0), sc["V"], sc["loading"],
                          sc["init"], eps=1e-2, t_end=5.0)
    with pytest.raises(ValueError, match="planar domain"):
        integrate_eps_ode(sc["C"], Radial(Ball(1.0)), sc["V"],
                          LoadingProgram.linear(1.0),
                          HomogeneousState(0.0, 0.0, 0.5),
                          eps=1e-2, t_end=5.0)


def test_run_rejects_initial_state_outside_domain():
    sc = ball_scenario(MU_A, S_A, TH0_A)
    bad = HomogeneousState(0.0, shear_embed(40.0, 2), TH0_A)
    with pytest.raises(ValueError, match="outside the elastic domain"):
        integrate_eps_ode(sc["C"], sc["K"], sc["V"], sc["loading"],
                          bad, eps=1e-2, t_end=5.0)


def test_run_triangular_hexagon_scenario_closes_books():
    # rooftop loading on the hexagonal domain, plateau softening: yields,
    # unloads through the interior, re-yields on the opposite face
    run = integrate_eps_ode(IsotropicElasticity(0.5), hexagon_domain(),
                            PlateauPotential(),
                            LoadingProgram.triangular(1.0, 3.5),
                            HomogeneousState(0.0, 0.0, 0.2),
                            eps=5e-3, t_end=8.0, tol=1e-8)
    ts = np.linspace(0.0, 8.0, 300)
    assert np.max(np.abs(run.energy_residual(ts))) < 1e-5
    acc_h = run.accumulators(ts)[0]
    assert np.all(np.diff(acc_h) >= -1e-12)
    # the unloading stretch passes through the interior: no dissipation there
    mid = (ts > 3.6) & (ts < 4.4)
    assert np.ptp(acc_h[mid]) < 1e-9
    # and plastic flow resumes afterwards
    assert acc_h[-1] > acc_h[np.nonzero(mid)[0][-1]] + 1e-3


# --------------------------------------------------------------------------
# quasistatic assembly
# --------------------------------------------------------------------------


def test_assemble_case_selection(dec_j):
    alpha, beta = dec_j.roots
    grid = [(0.5 * alpha, "c"), (alpha, "b"), (0.5 * (alpha + beta), "b"),
            (beta, "a"), (2.0 * beta, "a")]
    for th0, case in grid:
        traj = quasistatic_assemble(dec_j, MU_J, S_J, SQRT, th0, t_end=5.0)
        assert traj.case == case
        assert (traj.jump is not None) == (case in ("b", "c"))


def test_assemble_no_window_modulus_is_always_case_a():
    mu = 1.0
    dec = slow_fast_coefficients(mu, 1.0, SQRT)
    assert dec.roots is None
    for th0 in (0.3, 1.0, 3.0):
        traj = quasistatic_assemble(dec, mu, 1.0, SQRT, th0, t_end=5.0)
        assert traj.case == "a" and traj.jump is None


def test_assemble_case_b_jumps_at_contact(dec_j, traj_b):
    # V'(1) = -1/(2 sqrt 2) gives t0 = sqrt(7/8)/(2 mu S)
    t0 = np.sqrt(7.0 / 8.0) / (2.0 * MU_J * S_J)
    assert traj_b.case == "b"
    assert traj_b.t0 == pytest.approx(t0, abs=1e-12)
    assert traj_b.tau == pytest.approx(t0, abs=1e-12)
    assert traj_b.jump["theta_minus"] == 1.0
    # regression pin for the arrival value, cross-checked elsewhere
    assert traj_b.jump["theta_plus"] == pytest.approx(2.3907835394529307,
                                                      abs=1e-9)
    assert traj_b.jump["theta_plus"] > dec_j.roots[1]


def test_assemble_case_c_departs_at_alpha(dec_j, traj_c):
    alpha, beta = dec_j.roots
    assert traj_c.case == "c"
    assert traj_c.tau > traj_c.t0
    assert traj_c.jump["theta_minus"] == pytest.approx(alpha, abs=1e-12)
    assert traj_c.jump["theta_plus"] > beta
    assert float(traj_c.theta([traj_c.tau])[0]) == pytest.approx(alpha, abs=1e-9)


def test_assemble_left_continuous_at_jump(traj_b):
    tau = traj_b.tau
    assert float(traj_b.theta([tau])[0]) == pytest.approx(1.0, abs=1e-12)
    assert float(traj_b.theta([tau + 1e-9])[0]) == pytest.approx(
        traj_b.jump["theta_plus"], abs=1e-6)
    at_tau = [r for r in traj_b.samples if r[0] == tau]
    assert len(at_tau) == 2
    assert at_tau[0][1] == pytest.approx(1.0, abs=1e-12)
    assert at_tau[1][1] == pytest.approx(traj_b.jump["theta_plus"], abs=1e-12)


def test_assemble_theta_nondecreasing(traj_a, traj_b, traj_c):
    for traj in (traj_a, traj_b, traj_c):
        th = [r[1] for r in traj.samples]
        assert np.all(np.diff(th) >= -1e-12)


def test_assemble_psi_zero_before_contact(traj_a, traj_c):
    for traj in (traj_a, traj_c):
        ts = np.linspace(0.0, traj.t0, 30)
        assert np.all(traj.psi(ts) == 0.0)
        assert np.allclose(traj.sigma_norm(ts),
                           2.0 * traj.mu * traj.xi0s_norm * ts, atol=1e-12)


def test_assemble_stress_strictly_decreases_after_contact(traj_a, traj_b, traj_c):
    for traj in (traj_a, traj_b, traj_c):
        ts = np.linspace(traj.t0 + 1e-6, traj.t_end, 2000)
        assert np.all(np.diff(traj.sigma_norm(ts)) < 0.0)


def test_assemble_slow_branch_matches_independent_integrator(dec_a, traj_a):
    sol = solve_ivp(lambda t, y: [float(dec_a.slow_rate(y[0]))],
                    (traj_a.t0, 5.0), [TH0_A], method="DOP853",
                    rtol=1e-12, atol=1e-14, dense_output=True)
    assert sol.success
    ts = np.linspace(traj_a.t0, 5.0, 500)
    assert np.max(np.abs(traj_a.theta(ts) - sol.sol(ts)[0])) < 1e-8


def test_assemble_slow_velocity_limit(dec_j):
    # A0/B0 tends to |xi0^s|/sqrt(3) far out on the branch
    lim = S_J / np.sqrt(3.0)
    assert float(dec_j.slow_rate(1e3)) == pytest.approx(lim, rel=1e-5)


def test_assemble_validation(dec_a, dec_j):
    with pytest.raises(ValueError, match="different \\(mu, xi0s_norm\\)"):
        quasistatic_assemble(dec_a, MU_J, S_J, SQRT, 1.0, t_end=5.0)
    with pytest.raises(ValueError, match="theta0 must be positive"):
        quasistatic_assemble(dec_a, MU_A, S_A, SQRT, -0.5, t_end=5.0)
    with pytest.raises(ValueError, match="before first contact"):
        quasistatic_assemble(dec_a, MU_A, S_A, SQRT, 0.5, t_end=0.1)
    with pytest.raises(ValueError, match="before the jump"):
        quasistatic_assemble(dec_j, MU_J, S_J, SQRT, 0.002, t_end=2.6)


# --------------------------------------------------------------------------
# eps-convergence reports
# --------------------------------------------------------------------------


def test_convergence_case_a_pair(traj_a):
    rep = verify_eps_convergence((1e-2, 5e-3), traj_a)
    assert rep.windows == ((traj_a.t0 + 0.1, 5.0),)
    assert rep.sup_errors[1, 0] < rep.sup_errors[0, 0]
    assert rep.monotone
    assert rep.jump_window_errors is None


def test_convergence_error_vanishes_before_contact(traj_a):
    rep = verify_eps_convergence((1e-2, 5e-3), traj_a,
                                 windows=((0.05, traj_a.t0 - 0.05),))
    assert np.all(rep.sup_errors == 0.0)


def test_convergence_jump_window_error_persists(traj_b):
    # the boundary layer lives inside (tau - 0.2, tau + 0.2): sup error
    # there must not tend to zero with eps
    rep = verify_eps_convergence((1e-2, 5e-3), traj_b)
    assert rep.jump_window_errors is not None
    assert np.all(rep.jump_window_errors > 0.3)


def test_convergence_validation(traj_a):
    with pytest.raises(ValueError, match="strictly decreasing"):
        verify_eps_convergence((5e-3, 1e-2), traj_a)
    with pytest.raises(ValueError, match="strictly decreasing"):
        verify_eps_convergence((5e-3,), traj_a)
    with pytest.raises(ValueError, match="empty comparison window"):
        verify_eps_convergence((1e-2, 5e-3), traj_a, windows=((2.0, 2.0),))


def test_default_windows_shapes(traj_a, traj_b, traj_c):
    assert default_windows(traj_a) == ((traj_a.t0 + 0.1, 5.0),)
    # case (b) jumps at contact, so only the post-jump window survives
    wb = default_windows(traj_b)
    assert len(wb) == 1 and wb[0][0] == pytest.approx(traj_b.tau + 0.2)
    wc = default_windows(traj_c)
    assert len(wc) == 2
    assert wc[0][1] == pytest.approx(traj_c.tau - 0.2)
    assert wc[1][0] == pytest.approx(traj_c.tau + 0.2)


# --------------------------------------------------------------------------
# energy audits
# --------------------------------------------------------------------------


def audit(run_or_traj, mu, S, T=None):
    return energy_audit_homogeneous(
        run_or_traj, C=IsotropicElasticity(mu), K=Radial(Ball(1.0)), V=SQRT,
        loading=LoadingProgram.linear(shear_embed(S, 2)), T=T)


def test_audit_eps_run_is_an_equality(run_a):
    rep = audit(run_a, MU_A, S_A)
    assert rep.kind == "eps"
    assert abs(rep.residual) < 1e-6
    mid = audit(run_a, MU_A, S_A, T=2.0)
    assert abs(mid.residual) < 1e-6
    assert mid.work < rep.work


def test_audit_quasistatic_case_a_balances(traj_a):
    rep = audit(traj_a, MU_A, S_A)
    assert rep.kind == "quasistatic"
    assert abs(rep.residual) < 1e-6
    assert rep.jump_deficit is None


def test_audit_case_b_deficit_matches_orbit_dissipation(traj_b):
    rep = audit(traj_b, MU_J, S_J)
    assert rep.jump_deficit is not None
    assert rep.jump_deficit < -1e-3
    assert rep.orbit_excess > 0.0
    assert rep.jump_match < 0.02
    # before the jump the books balance exactly
    pre = audit(traj_b, MU_J, S_J, T=traj_b.tau - 0.05)
    assert abs(pre.residual) < 1e-9
    assert pre.jump_deficit is None


def test_audit_case_c_deficit_matches_orbit_dissipation(traj_c):
    rep = audit(traj_c, MU_J, S_J)
    assert rep.jump_deficit < -1e-3
    assert rep.jump_match < 0.02
    pre = audit(traj_c, MU_J, S_J, T=traj_c.tau - 0.05)
    assert abs(pre.residual) < 1e-9


def test_audit_requires_the_radial_unit_ball(traj_a):
    with pytest.raises(ValueError, match="unit-ball"):
        energy_audit_homogeneous(
            traj_a, C=IsotropicElasticity(MU_A), K=Radial(Ball(2.0)), V=SQRT,
            loading=LoadingProgram.linear(shear_embed(S_A, 2)))
    with pytest.raises(ValueError, match="linear"):
        energy_audit_homogeneous(
            traj_a, C=IsotropicElasticity(MU_A), K=Radial(Ball(1.0)), V=SQRT,
            loading=LoadingProgram.triangular(shear_embed(S_A, 2), 3.0))


# --------------------------------------------------------------------------
# CSV output
# --------------------------------------------------------------------------


def test_csv_eps_run_layout(run_a):
    buf = io.StringIO()
    write_run_csv(run_a, buf, n_samples=101)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == CSV_HEADER
    assert len(lines) == 102
    first = lines[1].split(",")
    assert float(first[0]) == 0.0 and float(first[1]) == TH0_A


def test_csv_quasistatic_metadata(traj_b):
    buf = io.StringIO()
    write_run_csv(traj_b, buf)
    text = buf.getvalue()
    assert text.startswith(CSV_HEADER + "\n")
    assert "jump_tau,theta_minus,theta_plus" in text
    tail = text.strip().split("\n")[-1].split(",")
    assert float(tail[0]) == pytest.approx(traj_b.tau)
    assert float(tail[2]) == pytest.approx(traj_b.jump["theta_plus"])


def test_csv_deterministic(run_a, traj_b):
    for obj in (run_a, traj_b):
        a, b = io.StringIO(), io.StringIO()
        write_run_csv(obj, a, n_samples=50)
        write_run_csv(obj, b, n_samples=50)
        assert a.getvalue() == b.getvalue()
