"""Concave softening potentials V and their interplay with a domain K.

A potential is C^2 with -M <= V'' <= 0 and finite slope limits
V'(-inf) >= V'(+inf). The recession function V_inf(theta) is the linear
growth at infinity, and the pair function {V}(theta, eta) is the positively
1-homogeneous extension eta V(theta/eta) used when mass concentrates
(eta <= 0 falls back to V_inf, the eta -> 0+ limit).

Compatibility with an elastic domain K asks for strict room between the slope
limits and the zeta-extent [-a_K, b_K] of K, plus a positive coercivity
constant for H(xi, dtheta) + V(theta2) - V(theta1); `validate_against_domain`
estimates both on a deterministic sample.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .domains import Radial


class SofteningPotential:
    """Base class; subclasses fill in value/slope/curvature (vectorized)."""

    #: declared curvature bound: V'' >= -M everywhere
    M: float = np.inf
    #: declared slope limits V'(-inf), V'(+inf)
    slope_minus_inf: float = np.nan
    slope_plus_inf: float = np.nan

    def value(self, theta):
        raise NotImplementedError

    def slope(self, theta):
        raise NotImplementedError

    def curvature(self, theta):
        raise NotImplementedError

    def recession(self, theta):
        """V_inf(theta): slope_minus_inf * theta for theta <= 0, else
        slope_plus_inf * theta."""
        theta = np.asarray(theta, dtype=float)
        out = np.where(theta >= 0.0,
                       self.slope_plus_inf * theta,
                       self.slope_minus_inf * theta)
        return out if out.ndim else float(out)

    def pair_value(self, theta, eta):
        """{V}(theta, eta) = eta V(theta/eta) for eta > 0, else V_inf(theta)."""
        theta = np.asarray(theta, dtype=float)
        eta = np.asarray(eta, dtype=float)
        safe = np.where(eta > 0.0, eta, 1.0)
        scaled = np.where(eta > 0.0, safe * self.value(theta / safe),
                          self.recession(theta))
        return scaled if scaled.ndim else float(scaled)


class SqrtPotential(SofteningPotential):
    """V(theta) = 1/2 - sqrt(1 + theta^2)/2; slopes tend to -+1/2, M = 1/2."""

    M = 0.5
    slope_minus_inf = 0.5
    slope_plus_inf = -0.5

    def value(self, theta):
        theta = np.asarray(theta, dtype=float)
        return 0.5 - 0.5 * np.sqrt(1.0 + theta ** 2)

    def slope(self, theta):
        theta = np.asarray(theta, dtype=float)
        return -0.5 * theta / np.sqrt(1.0 + theta ** 2)

    def curvature(self, theta):
        theta = np.asarray(theta, dtype=float)
        return -0.5 / (1.0 + theta ** 2) ** 1.5


class PlateauPotential(SofteningPotential):
    """Sine ramp to slope -1 at |theta| = 1, linear beyond; even, C^2.

    V'(theta) = -sin(pi theta / 2) on [-1, 1] and -sign(theta) outside, so
    the curvature vanishes continuously at the junctions and M = pi/2.
    """

    M = np.pi / 2.0
    slope_minus_inf = 1.0
    slope_plus_inf = -1.0

    def value(self, theta):
        theta = np.asarray(theta, dtype=float)
        a = np.abs(theta)
        inner = (2.0 / np.pi) * (np.cos(np.pi * np.minimum(a, 1.0) / 2.0) - 1.0)
        outer = -2.0 / np.pi - (a - 1.0)
        return np.where(a <= 1.0, inner, outer)

    def slope(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.where(np.abs(theta) <= 1.0,
                        -np.sin(np.pi * theta / 2.0),
                        -np.sign(theta))

    def curvature(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.where(np.abs(theta) < 1.0,
                        -(np.pi / 2.0) * np.cos(np.pi * theta / 2.0),
                        0.0)


class TabulatedPotential(SofteningPotential):
    """Custom potential from knot data, cubic-Hermite interpolated.

    Parameters
    ----------
    knots, values, slopes, curvatures : array_like
        Strictly increasing knots with V, V', V'' samples. V is interpolated
        with Hermite data (V, V'), V' with (V', V''); V'' is the derivative
        of the V' interpolant.
    m_bound : float
        Declared curvature bound (not inferred from the table).
    slope_minus_inf, slope_plus_inf : float
        Declared slope limits; outside the table V' is held at its end
        values and V continues linearly.
    """

    def __init__(self, knots, values, slopes, curvatures, m_bound,
                 slope_minus_inf, slope_plus_inf):
        t = np.asarray(knots, dtype=float)
        if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("invalid parameter: knots must be strictly increasing")
        self._t = t
        self._v = CubicHermiteSpline(t, np.asarray(values, float),
                                     np.asarray(slopes, float))
        self._vp = CubicHermiteSpline(t, np.asarray(slopes, float),
                                      np.asarray(curvatures, float))
        self._vpp = self._vp.derivative()
        self.M = float(m_bound)
        self.slope_minus_inf = float(slope_minus_inf)
        self.slope_plus_inf = float(slope_plus_inf)
        self._lo, self._hi = t[0], t[-1]
        self._v_lo = float(self._v(self._lo))
        self._v_hi = float(self._v(self._hi))
        self._s_lo = float(self._vp(self._lo))
        self._s_hi = float(self._vp(self._hi))

    def value(self, theta):
        theta = np.asarray(theta, dtype=float)
        mid = self._v(np.clip(theta, self._lo, self._hi))
        below = self._v_lo + self._s_lo * (theta - self._lo)
        above = self._v_hi + self._s_hi * (theta - self._hi)
        return np.where(theta < self._lo, below,
                        np.where(theta > self._hi, above, mid))

    def slope(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self._vp(np.clip(theta, self._lo, self._hi))

    def curvature(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = self._vpp(np.clip(theta, self._lo, self._hi))
        return np.where((theta < self._lo) | (theta > self._hi), 0.0, out)


@dataclass
class DomainCompatibility:
    """Outcome of checking a potential against a domain."""

    ok: bool
    a_k: float
    b_k: float
    slope_minus_inf: float
    slope_plus_inf: float
    coercivity: float
    failed: list = field(default_factory=list)


def validate_against_domain(V: SofteningPotential, K,
                            theta_span: float = 40.0,
                            n_theta: int = 81) -> DomainCompatibility:
    """Check the strict slope/extent inequalities and estimate coercivity.

    Requires -b_K < V'(+inf) <= V'(-inf) < a_K (strict at the outer ends) and
    a positive lower bound for
    [H(xi, t2 - t1) + V(t2) - V(t1)] / (|xi| + |t2 - t1|)
    over a deterministic sample of increments. Returns the findings; `ok` is
    the conjunction.
    """
    kern = K.generator if isinstance(K, Radial) else K
    a_k, b_k = K.zeta_bounds()
    vm, vp = V.slope_minus_inf, V.slope_plus_inf
    failed = []
    if not vp <= vm:
        failed.append("slope limits must satisfy V'(+inf) <= V'(-inf)")
    if not vp > -b_k + 1e-12:
        failed.append("V'(+inf) > -b_K must hold strictly")
    if not vm < a_k - 1e-12:
        failed.append("V'(-inf) < a_K must hold strictly")

    thetas = np.linspace(-theta_span, theta_span, n_theta)
    t1, t2 = np.meshgrid(thetas, thetas, indexing="ij")
    keep = np.abs(t2 - t1) > 1e-9
    t1, t2 = t1[keep], t2[keep]
    dtheta = t2 - t1
    dv = V.value(t2) - V.value(t1)
    best = np.inf
    for xi in (0.0, 0.3, -0.3, 1.0, -1.0, 3.0, -3.0):
        h = kern.support_xy(np.full_like(dtheta, xi), dtheta)
        ratio = (h + dv) / (abs(xi) + np.abs(dtheta))
        best = min(best, float(ratio.min()))
    if not best > 1e-9:
        failed.append("coercivity constant is not positive on the sample")
    return DomainCompatibility(ok=not failed, a_k=a_k, b_k=b_k,
                               slope_minus_inf=vm, slope_plus_inf=vp,
                               coercivity=best, failed=failed)
