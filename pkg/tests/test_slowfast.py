from __future__ import annotations

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from softflow.slowfast import (
    ALPHA0,
    MU0,
    coefficient_bounds_check,
    critical_constants,
    curvature_ratio,
    decompose,
    fast_transition,
    transition_dissipation,
)
from softflow.softening import PlateauPotential, SqrtPotential

SQRT = SqrtPotential()


def rk4_orbit(dec, gamma, h=1e-4):
    """Independent fixed-step integration of w' = B(theta, w) from gamma."""
    theta = gamma + 1e-7
    hh = 1e-6
    b0s = (float(dec.b0(gamma + hh)) - float(dec.b0(gamma - hh))) / (2 * hh)
    w = max(-0.5 * b0s * 1e-14, 0.0) + max(-float(dec.b0(gamma)), 0.0) * 1e-7
    if w == 0.0:
        w = 1e-18
    f = lambda t, y: float(dec.b(t, y))
    last = (theta, w)
    for _ in range(int(60.0 / h)):
        k1 = f(theta, w)
        k2 = f(theta + h / 2, w + h / 2 * k1)
        k3 = f(theta + h / 2, w + h / 2 * k2)
        k4 = f(theta + h, w + h * k3)
        wn = w + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if wn <= 0.0 and theta > gamma + 10 * h:
            # linear interpolation of the crossing
            return theta + h * w / (w - wn)
        last = (theta, w)
        theta, w = theta + h, wn
    raise AssertionError("oracle orbit did not close")


def test_critical_constants_digits():
    mu0, alpha0 = critical_constants()
    assert mu0 == pytest.approx(0.012959, abs=1e-6)
    assert alpha0 == pytest.approx(0.863957, abs=1e-6)


def test_critical_constants_maximize_curvature_ratio():
    # independent maximization of g = V'^2 V'' / (V'^2 - 1)
    res = minimize_scalar(lambda t: -float(curvature_ratio(SQRT, t)),
                          bounds=(0.1, 3.0), method="bounded",
                          options={"xatol": 1e-12})
    assert -res.fun == pytest.approx(2.0 * MU0, abs=1e-10)
    assert res.x == pytest.approx(ALPHA0, abs=1e-6)


def test_curvature_ratio_closed_form():
    th = np.linspace(0.01, 10.0, 500)
    g = curvature_ratio(SQRT, th)
    expect = 0.5 * th ** 2 / ((4.0 + 3.0 * th ** 2) * (1.0 + th ** 2) ** 1.5)
    assert np.allclose(g, expect, atol=1e-14)


def test_b0_factorization():
    dec = decompose(0.008, 1.0, SQRT)
    th = np.linspace(0.05, 5.0, 200)
    vp = SQRT.slope(th)
    lhs = dec.b0(th)
    rhs = (1.0 - vp ** 2) * (2.0 * dec.mu - curvature_ratio(SQRT, th))
    assert np.allclose(lhs, rhs, atol=1e-14)


def test_decompose_above_critical():
    dec = decompose(2.0 * MU0, 1.0, SQRT)
    assert dec.roots is None and not dec.degenerate
    th = np.linspace(1e-3, 8.0, 400)
    assert np.all(np.asarray(dec.b0(th)) > 0.0)


def test_decompose_below_critical():
    dec = decompose(0.5 * MU0, 1.0, SQRT)
    assert dec.roots is not None
    alpha, beta = dec.roots
    assert 0.0 < alpha < ALPHA0 < beta
    assert abs(float(dec.b0(alpha))) < 1e-10
    assert abs(float(dec.b0(beta))) < 1e-10
    inside = np.linspace(alpha + 1e-6, beta - 1e-6, 100)
    assert np.all(np.asarray(dec.b0(inside)) < 0.0)


def test_decompose_at_critical_is_degenerate():
    dec = decompose(MU0, 1.0, SQRT)
    assert dec.degenerate
    assert dec.roots == (ALPHA0, ALPHA0)
    # B0 >= 0 with equality only at alpha0
    th = np.linspace(0.1, 5.0, 400)
    assert np.all(np.asarray(dec.b0(th)) >= -1e-14)


def test_decompose_handles_other_potentials():
    # the scan path, not the closed form
    dec = decompose(0.004, 1.0, PlateauPotential())
    assert dec.roots is not None
    a, b = dec.roots
    assert abs(float(dec.b0(a))) < 1e-9 and abs(float(dec.b0(b))) < 1e-9


def test_decompose_rejects_bad_parameters():
    with pytest.raises(ValueError):
        decompose(-1.0, 1.0, SQRT)
    with pytest.raises(ValueError):
        decompose(1.0, 0.0, SQRT)


@pytest.fixture(scope="module")
def dec_half():
    return decompose(0.5 * MU0, 1.0, SQRT)


def test_transition_lands_past_beta(dec_half):
    alpha, beta = dec_half.roots
    orbit = fast_transition(dec_half, 0.5 * (alpha + beta))
    assert orbit.phi > beta
    assert orbit.w_slope_at_phi < 0.0
    th = np.linspace(orbit.gamma + 1e-4, orbit.phi - 1e-4, 200)
    w = orbit(th)
    assert np.all(w > 0.0)
    # barrier: w stays below -V'
    assert np.all(w < -np.asarray(SQRT.slope(th)))


def test_transition_from_alpha_tangent_start(dec_half):
    alpha, beta = dec_half.roots
    orbit = fast_transition(dec_half, alpha)
    assert orbit.phi > beta


def test_transition_monotone_decreasing(dec_half):
    alpha, beta = dec_half.roots
    gammas = [alpha, alpha + 0.2 * (beta - alpha), 0.5 * (alpha + beta),
              beta - 0.1 * (beta - alpha)]
    phis = [fast_transition(dec_half, g).phi for g in gammas]
    assert all(a > b for a, b in zip(phis, phis[1:]))
    assert all(p > beta for p in phis)


def test_transition_approaches_beta(dec_half):
    alpha, beta = dec_half.roots
    assert fast_transition(dec_half, beta - 1e-6).phi - beta < 0.05


def test_transition_against_rk4_oracle(dec_half):
    alpha, beta = dec_half.roots
    for gamma in (alpha + 0.3 * (beta - alpha), 0.5 * (alpha + beta)):
        phi = fast_transition(dec_half, gamma).phi
        assert phi == pytest.approx(rk4_orbit(dec_half, gamma), abs=5e-4)


def test_transition_rejects_outside_window(dec_half):
    alpha, beta = dec_half.roots
    with pytest.raises(ValueError, match="domain error"):
        fast_transition(dec_half, beta)
    with pytest.raises(ValueError, match="domain error"):
        fast_transition(dec_half, alpha / 2.0)
    dec_up = decompose(2.0 * MU0, 1.0, SQRT)
    with pytest.raises(ValueError, match="domain error"):
        fast_transition(dec_up, 1.0)


def test_transition_dissipation_identity(dec_half):
    alpha, beta = dec_half.roots
    for gamma in (alpha, 0.5 * (alpha + beta)):
        orbit = fast_transition(dec_half, gamma)
        d = transition_dissipation(dec_half, orbit)
        # layer dissipation must balance the closed-form energy drop
        assert d.arc + d.viscous == pytest.approx(d.energy_drop, rel=1e-6)
        # the chord undercounts: positive excess
        assert d.chord < d.arc
        assert d.excess > 0.0


def test_coefficient_envelopes():
    for mu, theta0 in ((0.5 * MU0, 0.1), (1.0, np.sqrt(3.0)), (2.0 * MU0, 0.5)):
        dec = decompose(mu, 1.0, SQRT)
        rep = coefficient_bounds_check(dec, theta0, n=10000, seed=3)
        assert rep.ok, rep.worst


def test_coefficient_envelopes_need_sqrt():
    dec = decompose(1.0, 1.0, PlateauPotential())
    with pytest.raises(ValueError):
        coefficient_bounds_check(dec, 0.5)


def test_slow_rate_positive_above_critical():
    dec = decompose(1.0, 1.0, SQRT)
    th = np.linspace(0.05, 40.0, 500)
    rate = np.asarray(dec.slow_rate(th))
    assert np.all(rate > 0.0)
    # asymptotic slope |xi0s|/sqrt(3)
    assert float(dec.slow_rate(1e5)) == pytest.approx(1.0 / np.sqrt(3.0), abs=1e-4)
