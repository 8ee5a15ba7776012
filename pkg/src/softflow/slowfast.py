"""Slow/fast structure of the homogeneous softening dynamics.

After reduction, the regularized evolution on the yield surface obeys the
second-order equation eps * theta'' = F_eps(theta, theta') whose coefficient
functions are assembled here. The sign of

    B0(theta) = 2 mu (1 - V'(theta)^2) + V'(theta)^2 V''(theta)

decides between purely slow motion and jumps: B0 factors as
(1 - V'^2) (2 mu - g(theta)) with g = V'^2 V'' / (V'^2 - 1) >= 0, so B0 has
zeros iff 2 mu < max g. For the square-root potential the maximum is known in
closed form: max g = 2 mu0 attained at alpha0 with

    mu0    = (79 sqrt(19) - 344)/108 * sqrt(7 + 2 sqrt(19))  ~ 0.012959,
    alpha0 = (sqrt(2)/3) sqrt(sqrt(19) - 1)                  ~ 0.863957.

For mu < mu0 the zeros alpha < alpha0 < beta bound the unstable window; the
transition map Phi carries a state arriving at gamma in [alpha, beta) to the
first zero Phi(gamma) > beta of the connecting fast orbit w' = B(theta, w),
w(gamma) = 0, along which w stays below the barrier -V'(theta).
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from .errors import IntegrationFailure
from .softening import SofteningPotential, SqrtPotential

#: closed-form critical shear modulus for the square-root potential
MU0 = (79.0 * np.sqrt(19.0) - 344.0) / 108.0 * np.sqrt(7.0 + 2.0 * np.sqrt(19.0))
#: closed-form location of the critical curvature maximum
ALPHA0 = (np.sqrt(2.0) / 3.0) * np.sqrt(np.sqrt(19.0) - 1.0)


def critical_constants() -> tuple[float, float]:
    return MU0, ALPHA0


def curvature_ratio(V: SofteningPotential, theta):
    """g(theta) = V'^2 V'' / (V'^2 - 1), the quantity 2 mu competes with.

    Where |V'| reaches 1 the ratio degenerates; the interior limit is +inf
    for potentials whose slope saturates (plateau type), and +inf is the
    value that keeps "2 mu < sup g iff B0 has zeros" true, so it is used
    at those points.
    """
    vp = np.asarray(V.slope(theta))
    vpp = np.asarray(V.curvature(theta))
    den = vp ** 2 - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        g = vp ** 2 * vpp / den
    return np.where(den == 0.0, np.inf, g)


@dataclass(frozen=True)
class SlowFastDecomposition:
    """Coefficient bundle for one (mu, |xi0s|, V) homogeneous problem.

    ``roots`` is None when B0 has no zero (mu >= mu0 regime), a pair
    (alpha, beta) when it has two, and the degenerate pair (alpha0, alpha0)
    exactly at the critical modulus (``degenerate`` is then True).
    """

    mu: float
    xi0s_norm: float
    V: SofteningPotential
    mu0: float
    alpha0: float
    roots: tuple[float, float] | None
    degenerate: bool = False

    # --- scalar coefficient functions (vectorized in theta) ----------------

    def a0(self, theta):
        vp = np.asarray(self.V.slope(theta))
        return -2.0 * self.mu * self.xi0s_norm * vp * np.sqrt(1.0 - vp ** 2)

    def a1(self, theta, v):
        vp = np.asarray(self.V.slope(theta))
        v = np.asarray(v, dtype=float)
        s0 = np.sqrt(np.maximum(1.0 - vp ** 2, 0.0))
        sv = np.sqrt(np.maximum(1.0 - (vp + v) ** 2, 0.0))
        small = np.abs(v) < 1e-8
        safe_v = np.where(small, 1.0, v)
        quot = np.where(small,
                        -vp / s0 + 0.5 * v * (-1.0 / s0 ** 3),
                        (sv - s0) / safe_v)
        c = 2.0 * self.mu * self.xi0s_norm
        return 2.0 * c * sv + c * vp * quot

    def a2(self, theta, v):
        vp = np.asarray(self.V.slope(theta))
        sv = np.sqrt(np.maximum(1.0 - (vp + np.asarray(v)) ** 2, 0.0))
        return -(2.0 * self.mu * self.xi0s_norm / vp) * sv

    def a(self, theta, v):
        v = np.asarray(v, dtype=float)
        return self.a0(theta) - self.a1(theta, v) * v + self.a2(theta, v) * v ** 2

    def b0(self, theta):
        vp = np.asarray(self.V.slope(theta))
        vpp = np.asarray(self.V.curvature(theta))
        return 2.0 * self.mu * (1.0 - vp ** 2) + vp ** 2 * vpp

    def b1(self, theta):
        vp = np.asarray(self.V.slope(theta))
        vpp = np.asarray(self.V.curvature(theta))
        return -(2.0 * self.mu - vpp) * (1.0 - 3.0 * vp ** 2) / vp

    def b2(self, theta):
        vpp = np.asarray(self.V.curvature(theta))
        return 3.0 * (2.0 * self.mu - vpp)

    def b3(self, theta):
        vp = np.asarray(self.V.slope(theta))
        vpp = np.asarray(self.V.curvature(theta))
        return -(2.0 * self.mu - vpp) / vp

    def b(self, theta, v):
        v = np.asarray(v, dtype=float)
        return (-self.b0(theta) + self.b1(theta) * v
                + self.b2(theta) * v ** 2 - self.b3(theta) * v ** 3)

    def f_eps(self, theta, theta_dot, eps):
        """Right-hand side of eps theta'' = F_eps(theta, theta')."""
        v = eps * np.asarray(theta_dot, dtype=float)
        return self.a(theta, v) + self.b(theta, v) * np.asarray(theta_dot)

    def slow_rate(self, theta):
        """Quasistatic branch velocity A0/B0 (positive where B0 > 0)."""
        return self.a0(theta) / self.b0(theta)


def decompose(mu: float, xi0s_norm: float, V: SofteningPotential,
              root_tol: float = 1e-12) -> SlowFastDecomposition:
    """Classify the B0 sign structure for one parameter set.

    The zeros of B0 are located by a sign scan over (0, 10 alpha0] in steps
    of alpha0/200, refined by bisection to ``root_tol``. The critical pair
    (mu0, alpha0) comes from the closed forms for the square-root potential
    and from numerical maximization of g otherwise.
    """
    if not (mu > 0.0 and np.isfinite(mu)):
        raise ValueError("invalid parameter: mu must be positive")
    if not (xi0s_norm > 0.0 and np.isfinite(xi0s_norm)):
        raise ValueError("invalid parameter: xi0s_norm must be positive")

    if isinstance(V, SqrtPotential):
        mu0, alpha0 = MU0, ALPHA0
    else:
        grid = np.linspace(1e-6, 60.0, 60001)
        g = np.asarray(curvature_ratio(V, grid))
        i = int(np.argmax(g))
        alpha0 = float(grid[i])
        mu0 = float(g[i]) / 2.0

    dec = SlowFastDecomposition(mu=float(mu), xi0s_norm=float(xi0s_norm), V=V,
                                mu0=mu0, alpha0=alpha0, roots=None)

    lo, hi = alpha0 / 200.0, 10.0 * alpha0
    grid = np.linspace(lo, hi, 2001)
    vals = np.asarray(dec.b0(grid))
    sign_changes = np.nonzero(np.diff(np.sign(vals)) != 0)[0]
    if len(sign_changes) >= 2:
        f = lambda t: float(dec.b0(t))
        i, j = sign_changes[0], sign_changes[-1]
        alpha = brentq(f, grid[i], grid[i + 1], xtol=root_tol)
        beta = brentq(f, grid[j], grid[j + 1], xtol=root_tol)
        return SlowFastDecomposition(mu=dec.mu, xi0s_norm=dec.xi0s_norm, V=V,
                                     mu0=mu0, alpha0=alpha0,
                                     roots=(float(alpha), float(beta)))
    # no sign change: either strictly positive or tangent at the critical mu
    if abs(2.0 * mu - 2.0 * mu0) <= 1e-12 * (1.0 + 2.0 * mu):
        return SlowFastDecomposition(mu=dec.mu, xi0s_norm=dec.xi0s_norm, V=V,
                                     mu0=mu0, alpha0=alpha0,
                                     roots=(alpha0, alpha0), degenerate=True)
    return dec


@dataclass(frozen=True)
class TransitionOrbit:
    """Fast connecting orbit from gamma back to the stable slow branch."""

    gamma: float
    phi: float
    w: object  # dense callable theta -> w(theta) on [gamma, phi]
    w_slope_at_phi: float

    def __call__(self, theta):
        theta = np.clip(np.asarray(theta, dtype=float), self.gamma, self.phi)
        out = self.w(theta)
        return np.maximum(out, 0.0)


def fast_transition(dec: SlowFastDecomposition, gamma: float,
                    guard: float = 50.0) -> TransitionOrbit:
    """Integrate w' = B(theta, w), w(gamma) = 0, to its first return to zero.

    Defined for gamma in [alpha, beta); the arrival point Phi(gamma) lies
    beyond beta and the orbit stays inside (0, -V'(theta)).  At gamma = alpha
    the orbit leaves the zero line tangentially (w' = -B0(alpha) = 0), so the
    integration starts a series step off the degeneracy.
    """
    if dec.roots is None or dec.degenerate:
        raise ValueError("domain error: no unstable window for these parameters")
    alpha, beta = dec.roots
    if not (alpha - 1e-9 <= gamma < beta):
        raise ValueError(
            f"domain error: gamma must lie in [alpha, beta) = [{alpha}, {beta})")
    gamma = max(float(gamma), alpha)

    # w'(gamma) = B(gamma, 0) = -B0(gamma), positive strictly inside the
    # window and zero exactly at alpha, where the orbit starts tangentially
    b0g = float(dec.b0(gamma))
    if abs(b0g) < 1e-10:
        delta, h = 1e-7, 1e-6
        b0_slope = float((dec.b0(gamma + h) - dec.b0(gamma - h)) / (2.0 * h))
        start = gamma + delta
        w_start = max(-0.5 * b0_slope * delta ** 2, 1e-18)
    else:
        if b0g > 0.0:
            raise ValueError("domain error: gamma is not in the unstable window")
        delta = 1e-10 * (1.0 + abs(gamma))
        start = gamma + delta
        w_start = -b0g * delta

    def rhs(theta, w):
        return [float(dec.b(theta, w[0]))]

    def hit_zero(theta, w):
        return w[0]

    hit_zero.terminal = True
    hit_zero.direction = -1

    sol = solve_ivp(rhs, (start, gamma + guard), [w_start], method="DOP853",
                    rtol=1e-10, atol=1e-13, dense_output=True, events=hit_zero)
    if not sol.success or len(sol.t_events[0]) == 0:
        raise IntegrationFailure(
            "fast orbit did not return to the slow manifold within the guard")
    phi = float(sol.t_events[0][0])
    if not phi > beta:
        raise IntegrationFailure(
            f"fast orbit landed at {phi}, inside the unstable window")

    dense = sol.sol

    def w_of_theta(theta):
        theta = np.asarray(theta, dtype=float)
        th = np.clip(theta, start, phi)
        vals = dense(np.atleast_1d(th))[0]
        vals = vals.reshape(np.shape(th)) if np.ndim(th) else float(vals[0])
        return vals

    slope_at_phi = float(dec.b(phi, 0.0))  # = -B0(phi) < 0
    return TransitionOrbit(gamma=gamma, phi=phi, w=w_of_theta,
                           w_slope_at_phi=slope_at_phi)


@dataclass(frozen=True)
class TransitionDissipation:
    """Dissipation bookkeeping across one fast transition."""

    gamma: float
    phi: float
    arc: float        # int H(dp, dz) along the connecting orbit
    viscous: float    # eps int (|dp|^2 + dz^2) across the layer (eps -> 0 limit)
    chord: float      # H of the total jump increment
    energy_drop: float  # Q + V drop across the jump, closed form
    excess: float     # arc + viscous - chord: dissipation unseen by the chord


def transition_dissipation(dec: SlowFastDecomposition,
                           orbit: TransitionOrbit) -> TransitionDissipation:
    """Quadrature of the layer dissipation along a transition orbit.

    With W(theta) = V'(theta) + w(theta) < 0 along the orbit, the plastic
    dissipation density is -1/W and the viscous one w/W^2; their sum
    integrates to the total energy drop, whose closed form
    [V'(phi)^2 - V'(gamma)^2]/(4 mu) + V(gamma) - V(phi) serves as a
    cross-check of the orbit accuracy.
    """
    V, mu, s = dec.V, dec.mu, dec.xi0s_norm
    gamma, phi = orbit.gamma, orbit.phi

    def w_big(theta):
        return float(V.slope(theta)) + float(orbit(theta))

    arc = quad(lambda t: -1.0 / w_big(t), gamma, phi, limit=200)[0]
    viscous = quad(lambda t: float(orbit(t)) / w_big(t) ** 2, gamma, phi,
                   limit=200)[0]

    vg, vphi = float(V.slope(gamma)), float(V.slope(phi))
    dpsi = (np.sqrt(1.0 - vg ** 2) - np.sqrt(1.0 - vphi ** 2)) / (2.0 * mu * s)
    chord = float(np.hypot(dpsi * s, phi - gamma))
    e_drop = (vphi ** 2 - vg ** 2) / (4.0 * mu) \
        + float(V.value(gamma)) - float(V.value(phi))
    return TransitionDissipation(gamma=gamma, phi=phi, arc=arc, viscous=viscous,
                                 chord=chord, energy_drop=e_drop,
                                 excess=arc + viscous - chord)


@dataclass
class BoundsReport:
    ok: bool
    worst: dict


def coefficient_bounds_check(dec: SlowFastDecomposition, theta0: float,
                             n: int = 10000, seed: int = 0,
                             slack: float = 1e-9) -> BoundsReport:
    """Sample the coefficient envelopes on theta >= theta0, v in [0, -V').

    The envelopes are specific to the square-root potential (they use
    |V'| < 1/2 and -1/2 <= V'' < 0):

        sqrt(3) mu s |V'(theta0)| <= A0 <= mu s
        2 mu s   <= A1 <= 4 mu s
        2 sqrt(3) mu s <= A2 <= 2 mu s / |V'(theta0)|
        3 mu/2 - 1/8   <= B0 <= 2 mu
        mu       <= B1 <= (2 mu + 1/2) / |V'(theta0)|
        6 mu     <= B2 <= 6 mu + 3/2
        4 mu     <= B3 <= (2 mu + 1/2) / |V'(theta0)|
    """
    if not isinstance(dec.V, SqrtPotential):
        raise ValueError("domain error: envelopes hold for the sqrt potential")
    rng = np.random.default_rng(seed)
    theta = theta0 + (50.0 - theta0) * rng.random(n)
    vmax = -np.asarray(dec.V.slope(theta))
    v = vmax * rng.random(n)

    mu, s = dec.mu, dec.xi0s_norm
    vp0 = abs(float(dec.V.slope(theta0)))
    bounds = {
        "A0": (dec.a0(theta), np.sqrt(3.0) * mu * s * vp0, mu * s),
        "A1": (dec.a1(theta, v), 2.0 * mu * s, 4.0 * mu * s),
        "A2": (dec.a2(theta, v), 2.0 * np.sqrt(3.0) * mu * s, 2.0 * mu * s / vp0),
        "B0": (dec.b0(theta), 1.5 * mu - 0.125, 2.0 * mu),
        "B1": (dec.b1(theta), mu, (2.0 * mu + 0.5) / vp0),
        "B2": (dec.b2(theta), 6.0 * mu, 6.0 * mu + 1.5),
        "B3": (dec.b3(theta), 4.0 * mu, (2.0 * mu + 0.5) / vp0),
    }
    worst = {}
    ok = True
    for name, (vals, lo, hi) in bounds.items():
        viol = max(float(np.max(lo - vals)), float(np.max(vals - hi)))
        worst[name] = viol
        if viol > slack:
            ok = False
    return BoundsReport(ok=ok, worst=worst)
