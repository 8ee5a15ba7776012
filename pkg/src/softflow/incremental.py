"""Implicit-Euler time discretization of the regularized flow.

Each step solves the convex incremental problem

    min  Q(e) + H(p - p0, z - z0) + V(z)
         + (eps/2 tau) (|p - p0|^2 + |z - z0|^2)

over kinematically admissible states, which has a unique solution whenever
tau < eps/M (M bounds the softening curvature).  The minimizer is
characterized by the dual fixed point

    (p1 - p0, z1 - z0) = tau N^eps(sigma1_D, -V'(z1)),

which the solvers iterate directly: a damped fixed point for the homogeneous
chain, and a nested solve for the reduced slab (outer scalar root in the
stress, inner per-node updates).  Verification helpers check the optimality
system from both sides (subdifferential inclusion, dual and primal objective
values against feasible perturbations) and the two discrete energy
estimates, stored + dissipated <= initial + work up to a loading modulus,
and its dual counterpart with no modulus at all.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .domains import FlowDirection, PlanarDomain, Radial, StressPoint
from .errors import StepFailure
from .homogeneous import HomogeneousState, LoadingProgram
from .shear1d import Grid1D, ReducedState
from .softening import SofteningPotential
from .tensors import (
    DevMatrix,
    IsotropicElasticity,
    SymMatrix,
    apply_elasticity,
    elastic_bounds,
)

CSV_HEADER = "i,t,sigma,theta,kkt_residual,energy_lhs,energy_rhs"


# --------------------------------------------------------------------------
# time grid and interpolants
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing step times starting at 0."""

    knots: np.ndarray
    tau_max: float = field(init=False)

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        if knots.ndim != 1 or len(knots) < 2 or not np.all(np.isfinite(knots)):
            raise ValueError(
                "invalid parameter: knots must be a finite 1d array with at "
                "least two entries")
        if knots[0] != 0.0 or not np.all(np.diff(knots) > 0.0):
            raise ValueError(
                "invalid parameter: knots must start at 0 and increase strictly")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "tau_max", float(np.diff(knots).max()))

    @staticmethod
    def uniform(t_end: float, tau: float) -> "TimeGrid":
        """Uniform grid of step tau on [0, t_end]; the last step may be short."""
        if not (t_end > 0.0 and np.isfinite(t_end)):
            raise ValueError("invalid parameter: t_end must be positive")
        if not (tau > 0.0 and np.isfinite(tau)):
            raise ValueError("invalid parameter: tau must be positive")
        n = int(np.floor(t_end / tau + 1e-9))
        knots = np.arange(n + 1, dtype=float) * tau
        if t_end - knots[-1] > 1e-9 * tau:
            knots = np.append(knots, t_end)
        else:
            knots[-1] = t_end
        return TimeGrid(knots)

    @property
    def taus(self) -> np.ndarray:
        return np.diff(self.knots)

    def admissible_for(self, eps: float, V: SofteningPotential) -> bool:
        """Does tau_max sit strictly inside the convexity window eps/M?"""
        M = float(V.M)
        return M <= 0.0 or self.tau_max < eps / M

    def floor_index(self, t: float) -> int:
        """Index i with t in [knots[i], knots[i+1]); the last index at the end."""
        knots = self.knots
        if t < knots[0] - 1e-12 or t > knots[-1] + 1e-12:
            raise ValueError("domain error: sample time outside the run window")
        return int(np.clip(np.searchsorted(knots, t, side="right") - 1,
                           0, len(knots) - 1))


def _require_window(eps: float, tau: float, V: SofteningPotential) -> None:
    if not (eps > 0.0 and np.isfinite(eps)):
        raise ValueError("invalid parameter: eps must be positive")
    if not (tau > 0.0 and np.isfinite(tau)):
        raise ValueError("invalid parameter: tau must be positive")
    M = float(V.M)
    if M > 0.0 and tau >= eps / M:
        raise ValueError(
            "invalid parameter: tau must stay below eps/M (convexity window)")


@dataclass(frozen=True)
class Interpolants:
    """Piecewise views of knot samples: constant (left-closed right-open)
    and continuous affine."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or len(times) < 2 or not np.all(np.diff(times) > 0.0):
            raise ValueError(
                "invalid parameter: interpolation times must increase strictly")
        if len(values) != len(times):
            raise ValueError(
                "invalid parameter: one value row per interpolation time")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def _clip(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < self.times[0] - 1e-12) or np.any(t > self.times[-1] + 1e-12):
            raise ValueError("domain error: sample time outside the run window")
        return np.clip(t, self.times[0], self.times[-1])

    def _coerce(self, t) -> tuple[np.ndarray, bool]:
        scalar = np.ndim(t) == 0
        return self._clip(np.atleast_1d(np.asarray(t, dtype=float))), scalar

    def floor_index(self, t):
        t, scalar = self._coerce(t)
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1,
                      0, len(self.times) - 1)
        return int(idx[0]) if scalar else idx

    def constant(self, t) -> np.ndarray:
        """Value at [t]: the sample taken at the last knot <= t."""
        return self.values[self.floor_index(t)]

    def affine(self, t) -> np.ndarray:
        """Continuous piecewise-affine interpolation between knots."""
        t, scalar = self._coerce(t)
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1,
                      0, len(self.times) - 2)
        t0, t1 = self.times[idx], self.times[idx + 1]
        lam = (t - t0) / (t1 - t0)
        v0, v1 = self.values[idx], self.values[idx + 1]
        out = v0 + (lam.reshape(lam.shape + (1,) * (v0.ndim - 1))) * (v1 - v0)
        return out[0] if scalar else out

    def rate(self, t) -> np.ndarray:
        """Slope of the affine view; at a knot the right-hand slope."""
        t, scalar = self._coerce(t)
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1,
                      0, len(self.times) - 2)
        dt = (self.times[idx + 1] - self.times[idx])
        dv = self.values[idx + 1] - self.values[idx]
        out = dv / dt.reshape(dt.shape + (1,) * (dv.ndim - 1))
        return out[0] if scalar else out


# --------------------------------------------------------------------------
# step result
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StepResult:
    """Accepted incremental step.

    ``kkt_residual`` is the sup-norm of the dual fixed-point defect
    |(dp, dz)/tau - N^eps(sigma1_D, zeta1)|, ``dual_gap`` the integrated
    Fenchel gap of the viscous pair at the accepted rates (nonnegative up to
    roundoff, zero exactly at optimality).  ``load_increment`` is the change
    of the boundary strain across the step, kept so the verifiers can
    reconstruct every increment from the two states alone.
    """

    state_new: object
    kkt_residual: float
    dual_gap: float
    iterations: int
    sigma: object
    zeta: object
    delta_p: object
    delta_z: object
    load_increment: object


# --------------------------------------------------------------------------
# homogeneous step
# --------------------------------------------------------------------------


def _hom_shape(xi) -> int:
    if isinstance(xi, SymMatrix):
        return xi.d
    return 1


def _hom_flat(xi, d: int) -> np.ndarray:
    if d == 1:
        return np.array([xi.scalar if isinstance(xi, SymMatrix) else float(xi)])
    if not isinstance(xi, SymMatrix) or xi.d != d:
        raise ValueError("invalid initial state: xi_e does not match the loading")
    return xi.a.reshape(-1).astype(float)

def _dev_flat(flat: np.ndarray, d: int) -> np.ndarray:
    if d == 1:
        return flat
    out = flat.copy()
    out[:: d + 1] -= flat[:: d + 1].sum() / d
    return out


def _hom_generator(K, d: int) -> PlanarDomain:
    if d == 1:
        if isinstance(K, Radial):
            raise ValueError(
                "invalid domain: scalar runs use a planar domain directly")
        return K
    if not isinstance(K, Radial):
        raise ValueError(
            "invalid domain: matrix runs need a radially lifted domain")
    return K.generator


def incremental_step_homogeneous(C, K, V, eps, tau, prev: HomogeneousState,
                                 xi_s_new, xi_s_prev=None, *,
                                 kkt_tol: float = 1e-9, max_iter: int = 400,
                                 initial_increment=None) -> StepResult:
    """One implicit step of the homogeneous chain.

    Solves (xi_p1 - xi_p0, theta1 - theta0) = tau N^eps(2 mu (xi_e1)_D,
    -V'(theta1)) with xi_e1 = xi_e0 + (xi_s_new - xi_s_prev) - (xi_p1 - xi_p0)
    by a damped fixed point on the increments: the relaxation halves whenever
    a candidate fails to shrink the residual, which covers step maps that are
    expansive at full length (large 2 mu tau / eps) but still contract on
    average inside the convexity window.

    ``xi_s_prev`` is the boundary strain at prev.t; when omitted it is taken
    on the proportional ramp through xi_s_new, which reproduces linear-in-t
    loading exactly.  ``initial_increment`` optionally seeds the iteration
    with a (delta_p, delta_theta) pair; the solution does not depend on it.
    """
    _require_window(eps, tau, V)
    d = _hom_shape(xi_s_new)
    gen = _hom_generator(K, d)
    mu = C.mu
    t_new = prev.t + tau
    if xi_s_prev is None:
        scale = prev.t / t_new
        xi_s_prev = xi_s_new * scale if d > 1 else _hom_flat(xi_s_new, 1)[0] * scale
    xs_new = _hom_flat(xi_s_new, d)
    xs_old = _hom_flat(xi_s_prev, d)
    xe0 = _hom_flat(prev.xi_e, d)
    theta0 = float(prev.theta)
    base = xe0 + (xs_new - xs_old)  # elastic predictor strain
    nd = len(base)

    def apply_T(x):
        # x = [dp_flat..., dtheta]; returns tau * N^eps at the trial state
        xe = base - x[:nd]
        th = theta0 + x[nd]
        ze = -float(V.slope(th))
        out = np.empty(nd + 1)
        if d == 1:
            al = 2.0 * mu * xe[0]
            pa, pz = gen.project_xy(al, ze)
            out[0] = tau * (al - float(pa)) / eps
        else:
            sig = 2.0 * mu * _dev_flat(xe, d)
            al = float(np.sqrt(sig @ sig))
            pa, pz = gen.project_xy(al, ze)
            n1 = (al - float(pa)) / eps
            out[:nd] = (tau * n1 / al) * sig if al > 0.0 else 0.0
        out[nd] = tau * (ze - float(pz)) / eps
        return out

    x = np.zeros(nd + 1)
    if initial_increment is not None:
        dp0, dth0 = initial_increment
        x[:nd] = _hom_flat(dp0, d)
        x[nd] = float(dth0)
    tol_abs = kkt_tol * tau
    Tx = apply_T(x)
    r = float(np.linalg.norm(Tx - x))
    evals = 1
    lam = 1.0
    while r > tol_abs and evals < max_iter:
        cand = x + lam * (Tx - x)
        Tc = apply_T(cand)
        evals += 1
        rc = float(np.linalg.norm(Tc - cand))
        if rc >= r and lam > 1e-6:
            lam *= 0.5
            continue
        x, Tx, r = cand, Tc, rc
    if r > tol_abs:
        raise StepFailure(
            f"implicit step did not converge after {evals} iterations: "
            f"try tau = {tau / 2:.6g}")

    dp, dth = x[:nd], float(x[nd])
    xe1 = base - dp
    theta1 = theta0 + dth
    zeta1 = -float(V.slope(theta1))
    if d == 1:
        state = HomogeneousState(t_new, float(xe1[0]), theta1)
        sigma = 2.0 * mu * float(xe1[0])
        sigma_pt = StressPoint(sigma, zeta1)
        vdir = FlowDirection(float(dp[0]) / tau, dth / tau)
        hval = float(gen.support_xy(vdir.xi, vdir.theta))
        pair = sigma * vdir.xi + zeta1 * vdir.theta
        hstar = gen.hepsilon_conjugate(sigma_pt, eps)
        delta_p = float(dp[0])
        load_inc = float(xs_new[0] - xs_old[0])
    else:
        xem = SymMatrix(xe1.reshape(d, d))
        state = HomogeneousState(t_new, xem, theta1)
        sigma = apply_elasticity(C, xem)
        sig_dev = DevMatrix(_dev_flat(2.0 * mu * _dev_flat(xe1, d), d).reshape(d, d))
        sigma_pt = StressPoint(sig_dev, zeta1)
        dpm = DevMatrix(dp.reshape(d, d) / tau)
        vdir = FlowDirection(dpm, dth / tau)
        hval = float(gen.support_xy(dpm.norm, dth / tau))
        pair = sig_dev.dot(dpm) + zeta1 * (dth / tau)
        hstar = K.hepsilon_conjugate(sigma_pt, eps)
        delta_p = DevMatrix(dp.reshape(d, d))
        load_inc = SymMatrix((xs_new - xs_old).reshape(d, d))
    heps = hval + 0.5 * eps * (vdir.xi_norm ** 2 + (dth / tau) ** 2)
    gap = heps + hstar - pair
    return StepResult(state_new=state, kkt_residual=r / tau, dual_gap=gap,
                      iterations=evals, sigma=sigma, zeta=zeta1,
                      delta_p=delta_p, delta_z=dth, load_increment=load_inc)


# --------------------------------------------------------------------------
# reduced 1d step
# --------------------------------------------------------------------------


def node_update(K_R: PlanarDomain, V: SofteningPotential, sigma: float,
                z_prev: np.ndarray, eps: float, tau: float, *,
                tol: float = 1e-12, max_iter: int = 80):
    """Backward-Euler update of every node at a fixed stress value.

    Solves z1 = z_prev + tau N2(sigma, -V'(z1)) nodewise by Picard iteration
    (a contraction with rate tau M / eps inside the convexity window) and
    returns (dp, dz).  Nodes that have not settled when the iteration budget
    runs out fall back to bisection on the monotone scalar residual, so the
    update converges for any step inside the window.
    """
    z0 = np.asarray(z_prev, dtype=float)
    sig = np.full_like(z0, float(sigma))

    def flow(z):
        ze = -np.asarray(V.slope(z), dtype=float)
        pa, pz = K_R.project_xy(sig, ze)
        return (sig - pa) / eps, (ze - pz) / eps

    z = z0
    n1, n2 = flow(z)
    for _ in range(max_iter):
        z_new = z0 + tau * n2
        done = float(np.max(np.abs(z_new - z))) <= tol * (1.0 + float(np.max(np.abs(z_new))))
        z = z_new
        if done:
            return tau * n1, z - z0
        n1, n2 = flow(z)

    # bisection fallback on g(z) = z - z0 - tau N2, strictly increasing in z
    def gval(z):
        _, n2 = flow(z)
        return z - z0 - tau * n2

    lo = np.minimum(z0, z) - tau * (np.abs(n2) + 1.0)
    hi = np.maximum(z0, z) + tau * (np.abs(n2) + 1.0)
    for _ in range(60):
        bad_lo = gval(lo) > 0.0
        bad_hi = gval(hi) < 0.0
        if not (np.any(bad_lo) or np.any(bad_hi)):
            break
        span = hi - lo
        lo = np.where(bad_lo, lo - span, lo)
        hi = np.where(bad_hi, hi + span, hi)
    else:
        raise StepFailure(
            f"node update found no bracket: try tau = {tau / 2:.6g}")
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        high = gval(mid) > 0.0
        lo = np.where(high, lo, mid)
        hi = np.where(high, mid, hi)
    z = 0.5 * (lo + hi)
    n1, n2 = flow(z)
    return tau * n1, tau * n2


def incremental_step_1d(K_R: PlanarDomain, V: SofteningPotential, eps: float,
                        tau: float, prev: ReducedState, w_new: float, *,
                        mu: float = 0.5, kkt_tol: float = 1e-9,
                        max_iter: int = 100) -> StepResult:
    """One implicit step of the reduced slab chain.

    Nested solve: the outer scalar root R(sigma) = sigma - 2 mu (w_new -
    int p1(sigma)) is bracketed and solved by Brent iteration (R grows with
    slope >= 1, so the root lies within |R| of any probe), while each
    evaluation runs the nodewise inner update at that stress.  The previous
    state fixes its own boundary span through e0 + int p0, so only the new
    span is needed.
    """
    if isinstance(K_R, Radial):
        raise ValueError(
            "invalid domain: the reduced problem uses a planar domain directly")
    _require_window(eps, tau, V)
    if not mu > 0.0:
        raise ValueError("invalid parameter: mu must be positive")
    p0 = np.asarray(prev.p, dtype=float)
    z0 = np.asarray(prev.z, dtype=float)
    if p0.shape != z0.shape or p0.ndim != 1 or p0.size == 0:
        raise ValueError(
            "invalid initial state: p and z must be matching 1d node arrays")
    if not (np.all(np.isfinite(p0)) and np.all(np.isfinite(z0))
            and np.isfinite(prev.e) and np.isfinite(w_new)):
        raise ValueError("invalid initial state: fields must be finite")
    h = 1.0 / p0.size
    w_prev = float(prev.e) + h * float(p0.sum())
    inner_tol = min(1e-12, 0.1 * kkt_tol * eps)

    evals = 0

    def residual(sigma):
        nonlocal evals
        evals += 1
        dp, _ = node_update(K_R, V, sigma, z0, eps, tau, tol=inner_tol)
        return sigma - 2.0 * mu * (w_new - h * float((p0 + dp).sum()))

    s_el = 2.0 * mu * (w_new - h * float(p0.sum()))
    r0 = residual(s_el)
    if r0 == 0.0:
        sigma_root = s_el
    else:
        pad = 1e-9 * (1.0 + abs(s_el)) + 0.25 * abs(r0)
        lo, hi = sorted((s_el, s_el - r0))
        lo, hi = lo - pad, hi + pad
        r_lo, r_hi = residual(lo), residual(hi)
        widen = 0
        while r_lo * r_hi > 0.0:
            widen += 1
            if widen > 6:
                raise StepFailure(
                    f"stress bracket failed after widening: try tau = {tau / 2:.6g}")
            span = hi - lo
            lo, hi = lo - 1.5 * span, hi + 1.5 * span
            r_lo, r_hi = residual(lo), residual(hi)
        sigma_root = float(brentq(residual, lo, hi, xtol=1e-13,
                                  rtol=4.0 * np.finfo(float).eps,
                                  maxiter=max_iter))

    dp, dz = node_update(K_R, V, sigma_root, z0, eps, tau, tol=inner_tol)
    evals += 1
    p1 = p0 + dp
    z1 = z0 + dz
    e1 = w_new - h * float(p1.sum())
    t_new = float(prev.t) + tau
    state = ReducedState(t=t_new, e=e1, p=p1, z=z1)

    sigma1 = 2.0 * mu * e1
    zeta1 = -np.asarray(V.slope(z1), dtype=float)
    sig_vec = np.full_like(z1, sigma1)
    pa, pz = K_R.project_xy(sig_vec, zeta1)
    n1 = (sig_vec - pa) / eps
    n2 = (zeta1 - pz) / eps
    kkt = float(np.max(np.hypot(dp / tau - n1, dz / tau - n2)))
    if kkt > kkt_tol:
        raise StepFailure(
            f"implicit step left a stationarity defect of {kkt:.3g}: "
            f"try tau = {tau / 2:.6g}")

    v1, v2 = dp / tau, dz / tau
    heps = (np.asarray(K_R.support_xy(v1, v2), dtype=float)
            + 0.5 * eps * (v1 ** 2 + v2 ** 2))
    hstar = (np.hypot(sig_vec - pa, zeta1 - pz) ** 2) / (2.0 * eps)
    gap = h * float(np.sum(heps + hstar - (sig_vec * v1 + zeta1 * v2)))

    return StepResult(state_new=state, kkt_residual=kkt, dual_gap=gap,
                      iterations=evals, sigma=sigma1, zeta=zeta1,
                      delta_p=dp, delta_z=dz,
                      load_increment=w_new - w_prev)


# --------------------------------------------------------------------------
# chained runs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class IncrementalRun:
    """Chained step results on one time grid.

    ``kind`` is "homogeneous" (scalar or flattened-matrix columns) or
    "reduced" (scalar strain plus nodal fields).  Knot arrays hold one row
    per grid time; per-step diagnostics hold one entry per step.
    """

    kind: str
    C: IsotropicElasticity
    K: object
    V: SofteningPotential
    eps: float
    tgrid: TimeGrid
    loading: LoadingProgram
    d: int
    loads: np.ndarray
    es: np.ndarray
    ps: np.ndarray
    zs: np.ndarray
    sigmas: np.ndarray
    kkt_residuals: np.ndarray
    dual_gaps: np.ndarray
    iterations: np.ndarray
    steps: tuple

    @property
    def times(self) -> np.ndarray:
        return self.tgrid.knots

    def interpolant(self, name: str) -> Interpolants:
        series = {"load": self.loads, "e": self.es, "p": self.ps,
                  "z": self.zs, "sigma": self.sigmas}
        if name not in series:
            raise ValueError(f"invalid parameter: unknown series {name!r}")
        return Interpolants(self.times, series[name])

    def state(self, i: int):
        if self.kind == "reduced":
            return ReducedState(t=float(self.times[i]), e=float(self.es[i]),
                                p=self.ps[i], z=self.zs[i])
        if self.d == 1:
            return HomogeneousState(float(self.times[i]), float(self.es[i]),
                                    float(self.zs[i]))
        return HomogeneousState(float(self.times[i]),
                                SymMatrix(self.es[i].reshape(self.d, self.d)),
                                float(self.zs[i]))


def run_incremental_homogeneous(C, K, V, loading: LoadingProgram, eps: float,
                                tgrid: TimeGrid, init: HomogeneousState, *,
                                kkt_tol: float = 1e-9,
                                max_iter: int = 400) -> IncrementalRun:
    """Chain homogeneous steps over the grid, one per knot interval."""
    d = loading.d
    if float(init.t) != 0.0:
        raise ValueError("invalid initial state: the chain starts at t = 0")
    if not tgrid.admissible_for(eps, V):
        raise ValueError(
            "invalid parameter: tau must stay below eps/M (convexity window)")
    knots = tgrid.knots
    nd = 1 if d == 1 else d * d
    xi0 = _hom_flat(loading.xi0, d)
    profs = np.asarray(loading.profile(knots), dtype=float)
    loads = np.multiply.outer(profs, xi0)

    n = len(knots) - 1
    es = np.empty((n + 1, nd))
    zs = np.empty(n + 1)
    ps = np.empty((n + 1, nd))
    sigmas = np.empty((n + 1, nd))
    kkts = np.empty(n)
    gaps = np.empty(n)
    iters = np.empty(n, dtype=int)
    steps = []

    es[0] = _hom_flat(init.xi_e, d)
    zs[0] = float(init.theta)
    ps[0] = loads[0] - es[0]
    state = init
    warm = None
    for i in range(n):
        tau = float(knots[i + 1] - knots[i])
        if d == 1:
            xs_new, xs_old = float(loads[i + 1, 0]), float(loads[i, 0])
        else:
            xs_new = SymMatrix(loads[i + 1].reshape(d, d))
            xs_old = SymMatrix(loads[i].reshape(d, d))
        step = incremental_step_homogeneous(
            C, K, V, eps, tau, state, xs_new, xs_old,
            kkt_tol=kkt_tol, max_iter=max_iter, initial_increment=warm)
        warm = (step.delta_p, step.delta_z)
        state = step.state_new
        es[i + 1] = _hom_flat(state.xi_e, d)
        zs[i + 1] = state.theta
        ps[i + 1] = loads[i + 1] - es[i + 1]
        kkts[i] = step.kkt_residual
        gaps[i] = step.dual_gap
        iters[i] = step.iterations
        steps.append(step)
    for i in range(n + 1):
        if d == 1:
            sigmas[i] = 2.0 * C.mu * es[i]
        else:
            sigmas[i] = _hom_flat(
                apply_elasticity(C, SymMatrix(es[i].reshape(d, d))), d)
    if d == 1:
        es = es[:, 0]
        ps = ps[:, 0]
        sigmas = sigmas[:, 0]
        loads = loads[:, 0]
    return IncrementalRun(kind="homogeneous", C=C, K=K, V=V, eps=eps,
                          tgrid=tgrid, loading=loading, d=d, loads=loads,
                          es=es, ps=ps, zs=zs, sigmas=sigmas,
                          kkt_residuals=kkts, dual_gaps=gaps,
                          iterations=iters, steps=tuple(steps))


def run_incremental_1d(K_R: PlanarDomain, V: SofteningPotential,
                       boundary: LoadingProgram, z0, eps: float,
                       tgrid: TimeGrid, ygrid: Grid1D, *, mu: float = 0.5,
                       kkt_tol: float = 1e-9) -> IncrementalRun:
    """Chain reduced-slab steps over the grid from a plastically virgin start."""
    if boundary.d != 1:
        raise ValueError(
            "invalid loading: the reduced problem takes a scalar transverse profile")
    if not tgrid.admissible_for(eps, V):
        raise ValueError(
            "invalid parameter: tau must stay below eps/M (convexity window)")
    z0v = np.asarray(z0(ygrid.nodes) if callable(z0) else z0, dtype=float)
    if z0v.shape != ygrid.nodes.shape or not np.all(np.isfinite(z0v)):
        raise ValueError(
            "invalid initial state: z0 must be finite and match the grid")
    amp = float(boundary.xi0)
    knots = tgrid.knots
    spans = amp * np.asarray(boundary.profile(knots), dtype=float)
    n = len(knots) - 1
    ncell = len(ygrid.nodes)
    es = np.empty(n + 1)
    ps = np.empty((n + 1, ncell))
    zs = np.empty((n + 1, ncell))
    kkts = np.empty(n)
    gaps = np.empty(n)
    iters = np.empty(n, dtype=int)
    steps = []
    es[0] = spans[0]
    ps[0] = 0.0
    zs[0] = z0v
    state = ReducedState(t=0.0, e=float(spans[0]), p=np.zeros(ncell), z=z0v)
    for i in range(n):
        tau = float(knots[i + 1] - knots[i])
        step = incremental_step_1d(K_R, V, eps, tau, state,
                                   float(spans[i + 1]), mu=mu, kkt_tol=kkt_tol)
        state = step.state_new
        es[i + 1] = state.e
        ps[i + 1] = state.p
        zs[i + 1] = state.z
        kkts[i] = step.kkt_residual
        gaps[i] = step.dual_gap
        iters[i] = step.iterations
        steps.append(step)
    return IncrementalRun(kind="reduced", C=IsotropicElasticity(mu), K=K_R,
                          V=V, eps=eps, tgrid=tgrid, loading=boundary, d=1,
                          loads=spans, es=es, ps=ps, zs=zs,
                          sigmas=2.0 * mu * es, kkt_residuals=kkts,
                          dual_gaps=gaps, iterations=iters,
                          steps=tuple(steps))


# --------------------------------------------------------------------------
# optimality verification
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EulerReport:
    """Nodewise stationarity check of one accepted step."""

    ok: bool
    subgradient_ok: bool
    equilibrium_dev: float
    membership_margin: float
    alignment_defect: float
    n_nodes: int


def _step_increments(step: StepResult, prev):
    """(dp, dz) recomputed from the two states and the recorded load move."""
    new = step.state_new
    if isinstance(new, ReducedState):
        return (np.asarray(new.p, float) - np.asarray(prev.p, float),
                np.asarray(new.z, float) - np.asarray(prev.z, float))
    d = _hom_shape(new.xi_e)
    dxe = _hom_flat(new.xi_e, d) - _hom_flat(prev.xi_e, d)
    dload = _hom_flat(step.load_increment, d)
    dp = dload - dxe
    dz = float(new.theta) - float(prev.theta)
    if d == 1:
        return float(dp[0]), dz
    return DevMatrix(dp.reshape(d, d)), dz


def verify_euler(step: StepResult, prev, C, K, V, eps: float, tau: float,
                 tol: float = 1e-8) -> EulerReport:
    """Check the stationarity system of the incremental problem.

    The shifted stress (sigma1_D - (eps/tau) dp, zeta1 - (eps/tau) dz) must be
    a subgradient witness for the increment direction at every node, and the
    new stress must match the kinematic constraint.  All quantities are
    recomputed from the two states, so a tampered result fails.
    """
    new = step.state_new
    dp, dz = _step_increments(step, prev)
    if isinstance(new, ReducedState):
        mu = C.mu
        p1 = np.asarray(new.p, dtype=float)
        h = 1.0 / p1.size
        w_prev = float(prev.e) + h * float(np.asarray(prev.p, float).sum())
        w_new = w_prev + float(step.load_increment)
        sigma1 = 2.0 * mu * float(new.e)
        equil = abs(float(step.sigma) - 2.0 * mu * (w_new - h * float(p1.sum())))
        zeta1 = -np.asarray(V.slope(new.z), dtype=float)
        shift = eps / tau
        ok_nodes = True
        worst_margin = 0.0
        worst_align = 0.0
        for k in range(len(zeta1)):
            x = StressPoint(sigma1 - shift * dp[k], zeta1[k] - shift * dz[k])
            direc = FlowDirection(dp[k], dz[k])
            if not K.subgradient_test(x, direc, tol=tol):
                ok_nodes = False
            worst_margin = max(worst_margin, K.distance(x) / (1.0 + x.norm))
            hd = K.support(direc)
            pairing = x.sigma * direc.xi + x.zeta * direc.theta
            worst_align = max(worst_align,
                              abs(pairing - hd) / (1.0 + abs(hd)))
        n_nodes = len(zeta1)
    else:
        d = _hom_shape(new.xi_e)
        sigma_full = (2.0 * C.mu * _hom_flat(new.xi_e, 1)[0] if d == 1
                      else apply_elasticity(C, new.xi_e))
        if d == 1:
            sig_dev = float(sigma_full)
            equil = abs(sig_dev - float(step.sigma))
            x = StressPoint(sig_dev - (eps / tau) * dp,
                            -float(V.slope(new.theta)) - (eps / tau) * dz)
            direc = FlowDirection(dp, dz)
        else:
            equil = float(np.linalg.norm(_hom_flat(sigma_full, d)
                                         - _hom_flat(step.sigma, d)))
            dev = DevMatrix(_dev_flat(_hom_flat(sigma_full, d), d).reshape(d, d))
            x = StressPoint(DevMatrix(dev.a - (eps / tau) * dp.a),
                            -float(V.slope(new.theta)) - (eps / tau) * dz)
            direc = FlowDirection(dp, dz)
        ok_nodes = K.subgradient_test(x, direc, tol=tol)
        worst_margin = K.distance(x) / (1.0 + x.norm)
        hd = K.support(direc)
        if d == 1:
            pairing = x.sigma * direc.xi + x.zeta * direc.theta
        else:
            pairing = x.sigma.dot(direc.xi) + x.zeta * direc.theta
        worst_align = abs(pairing - hd) / (1.0 + abs(hd))
        n_nodes = 1
    sig_scale = (step.sigma.norm if isinstance(step.sigma, SymMatrix)
                 else abs(float(step.sigma)))
    ok = bool(ok_nodes and equil <= tol * (1.0 + sig_scale))
    return EulerReport(ok=ok, subgradient_ok=bool(ok_nodes),
                       equilibrium_dev=float(equil),
                       membership_margin=float(worst_margin),
                       alignment_defect=float(worst_align), n_nodes=n_nodes)


@dataclass(frozen=True)
class OptimalityReport:
    """Objective value at the accepted step against feasible perturbations."""

    ok: bool
    value: float
    min_increase: float
    quad_coefficient: float
    n_perturbations: int


def _dual_objective_hom(C, K, V, eps, tau, d, sigma_flat, zeta, sigma0_flat,
                        dz, dload_flat):
    q_star = _qstar_flat(C, d, sigma_flat - sigma0_flat)
    if d == 1:
        pt = StressPoint(float(sigma_flat[0]), zeta)
        gen = K
        hstar = gen.hepsilon_conjugate(pt, eps)
    else:
        dev = DevMatrix(_dev_flat(sigma_flat, d).reshape(d, d))
        hstar = K.hepsilon_conjugate(StressPoint(dev, zeta), eps)
    pair = float(sigma_flat @ dload_flat)
    return q_star / tau + hstar - (zeta * dz) / tau - pair / tau


def _qstar_flat(C, d, sig_flat):
    if d == 1:
        return float(sig_flat[0]) ** 2 / (4.0 * C.mu)
    dev = _dev_flat(sig_flat, d)
    tr = sig_flat[:: d + 1].sum()
    return float(dev @ dev) / (4.0 * C.mu) + tr ** 2 / (2.0 * C.kappa * d ** 2)


def verify_dual_optimality(step: StepResult, prev, C, K, V, eps: float,
                           tau: float, *, n_perturbations: int = 50,
                           delta: float = 0.05, tol: float = 1e-8,
                           seed: int = 0) -> OptimalityReport:
    """Probe the dual problem around the accepted stress pair.

    Evaluates (1/tau) Q*(sigma - sigma0) + Heps*(sigma_D, zeta)
    - (1/tau)<zeta, dz> - (1/tau)<sigma, dEw> at the solution and at random
    statically admissible perturbations (constant stress shifts, free zeta),
    checking that no perturbation improves the value beyond roundoff and
    fitting the quadratic growth rate of the increase.
    """
    rng = np.random.default_rng(seed)
    new = step.state_new
    dp, dz = _step_increments(step, prev)
    scales = np.array([1.0, 0.5, 0.25]) * delta
    increases = []
    squares = []
    if isinstance(new, ReducedState):
        mu = C.mu
        h = 1.0 / np.asarray(new.p).size
        sigma1 = 2.0 * mu * float(new.e)
        sigma0 = 2.0 * mu * float(prev.e)
        zeta1 = -np.asarray(V.slope(new.z), dtype=float)
        dw = float(step.load_increment)

        def dual(sig, ze):
            sv = np.full_like(ze, sig)
            pa, pz = K.project_xy(sv, ze)
            hstar = h * float(np.sum(np.hypot(sv - pa, ze - pz) ** 2)) / (2.0 * eps)
            return ((sig - sigma0) ** 2 / (4.0 * mu) / tau + hstar
                    - h * float(ze @ dz) / tau - sig * dw / tau)

        base = dual(sigma1, zeta1)
        for _ in range(n_perturbations):
            ds = rng.standard_normal()
            dze = rng.standard_normal(zeta1.shape)
            nrm = float(np.hypot(ds, np.sqrt(h * float(dze @ dze))))
            ds, dze = ds / nrm, dze / nrm
            for s in scales:
                increases.append(dual(sigma1 + s * ds, zeta1 + s * dze) - base)
                squares.append(s * s)
    else:
        d = _hom_shape(new.xi_e)
        sigma1 = _hom_flat(step.sigma, d)
        sigma0 = (2.0 * C.mu * _hom_flat(prev.xi_e, 1) if d == 1
                  else _hom_flat(apply_elasticity(C, prev.xi_e), d))
        zeta1 = -float(V.slope(new.theta))
        dload = _hom_flat(step.load_increment, d)
        base = _dual_objective_hom(C, K, V, eps, tau, d, sigma1, zeta1,
                                   sigma0, dz, dload)
        for _ in range(n_perturbations):
            if d == 1:
                dsig = rng.standard_normal(1)
            else:
                m = rng.standard_normal((d, d))
                dsig = (0.5 * (m + m.T)).reshape(-1)
            dze = rng.standard_normal()
            nrm = float(np.hypot(np.linalg.norm(dsig), dze))
            dsig, dze = dsig / nrm, dze / nrm
            for s in scales:
                val = _dual_objective_hom(C, K, V, eps, tau, d,
                                          sigma1 + s * dsig, zeta1 + s * dze,
                                          sigma0, dz, dload)
                increases.append(val - base)
                squares.append(s * s)
    increases = np.asarray(increases)
    squares = np.asarray(squares)
    if np.any(squares > 0.0):
        quad = float(np.sum(increases * squares) / np.sum(squares ** 2))
    else:
        quad = 0.0
    min_inc = float(increases.min()) if len(increases) else 0.0
    ok = min_inc >= -tol * (1.0 + abs(base))
    return OptimalityReport(ok=bool(ok), value=float(base),
                            min_increase=min_inc, quad_coefficient=quad,
                            n_perturbations=n_perturbations)


def verify_primal_optimality(step: StepResult, prev, C, K, V, eps: float,
                             tau: float, *, n_perturbations: int = 100,
                             delta: float = 0.05, tol: float = 1e-8,
                             seed: int = 0) -> OptimalityReport:
    """Probe the incremental minimum around the accepted state.

    Evaluates Q(e) + H(dp, dz) + V(z) + (eps/2 tau)(|dp|^2 + |dz|^2) with the
    elastic strain eliminated through the kinematic constraint, at the
    solution and at random admissible perturbations of (p, z).
    """
    rng = np.random.default_rng(seed)
    new = step.state_new
    dp0, dz0 = _step_increments(step, prev)
    increases = []
    squares = []
    scales = np.array([1.0, 0.5, 0.25]) * delta
    if isinstance(new, ReducedState):
        mu = C.mu
        h = 1.0 / np.asarray(new.p).size
        w_new = float(new.e) + h * float(np.asarray(new.p).sum())
        p0 = np.asarray(prev.p, dtype=float)
        z0 = np.asarray(prev.z, dtype=float)

        def primal(dp, dz):
            e = w_new - h * float((p0 + dp).sum())
            diss = h * float(np.sum(K.support_xy(dp, dz)))
            pot = h * float(np.sum(V.value(z0 + dz)))
            visc = (0.5 * eps / tau) * h * float(dp @ dp + dz @ dz)
            return mu * e * e + diss + pot + visc

        base = primal(dp0, dz0)
        for _ in range(n_perturbations):
            ddp = rng.standard_normal(p0.shape)
            ddz = rng.standard_normal(z0.shape)
            nrm = np.sqrt(h * float(ddp @ ddp + ddz @ ddz))
            ddp, ddz = ddp / nrm, ddz / nrm
            for s in scales:
                increases.append(primal(dp0 + s * ddp, dz0 + s * ddz) - base)
                squares.append(s * s)
    else:
        d = _hom_shape(new.xi_e)
        gen = _hom_generator(K, d)
        xe0 = _hom_flat(prev.xi_e, d)
        dload = _hom_flat(step.load_increment, d)
        base_strain = xe0 + dload
        theta0 = float(prev.theta)
        dpf = _hom_flat(dp0, d)

        def primal(dp, dz):
            xe = base_strain - dp
            if d == 1:
                q = C.mu * float(xe[0]) ** 2
                diss = float(gen.support_xy(float(dp[0]), dz))
            else:
                devp = _dev_flat(xe, d)
                tr = xe[:: d + 1].sum()
                q = C.mu * float(devp @ devp) + 0.5 * C.kappa * tr ** 2
                diss = float(gen.support_xy(float(np.linalg.norm(dp)), dz))
            pot = float(V.value(theta0 + dz))
            visc = (0.5 * eps / tau) * (float(dp @ dp) + dz * dz)
            return q + diss + pot + visc

        base = primal(dpf, dz0)
        for _ in range(n_perturbations):
            if d == 1:
                ddp = rng.standard_normal(1)
            else:
                m = rng.standard_normal((d, d))
                sym = 0.5 * (m + m.T)
                sym -= np.trace(sym) / d * np.eye(d)
                ddp = sym.reshape(-1)
            ddz = rng.standard_normal()
            nrm = float(np.hypot(np.linalg.norm(ddp), ddz))
            ddp, ddz = ddp / nrm, ddz / nrm
            for s in scales:
                increases.append(primal(dpf + s * ddp, dz0 + s * ddz) - base)
                squares.append(s * s)
    increases = np.asarray(increases)
    squares = np.asarray(squares)
    quad = float(np.sum(increases * squares) / np.sum(squares ** 2))
    min_inc = float(increases.min())
    ok = min_inc >= -tol * (1.0 + abs(base))
    return OptimalityReport(ok=bool(ok), value=float(base),
                            min_increase=min_inc, quad_coefficient=quad,
                            n_perturbations=n_perturbations)


# --------------------------------------------------------------------------
# discrete energy estimates
# --------------------------------------------------------------------------


def _profile_tv(loading: LoadingProgram, a: float, b: float) -> float:
    """Total variation of the loading profile on [a, b]."""
    if b <= a:
        return 0.0
    pts = np.array([a, *loading.kink_times(a, b), b])
    vals = np.asarray(loading.profile(pts), dtype=float)
    return float(np.sum(np.abs(np.diff(vals))))


def _books(run: IncrementalRun):
    """Knotwise energy ledgers shared by the estimate and the CSV writer.

    Returns (Q, V, diss, visc_p, visc_z, work, dual_e, dual_z, dual_work,
    hstar) where the cumulative arrays are prefix sums from 0 to each knot.
    """
    taus = run.tgrid.taus
    if run.kind == "reduced":
        h = 1.0 / run.ps.shape[1]
        mu = run.C.mu
        gen = run.K
        q = mu * run.es ** 2
        v = h * np.sum(np.asarray(run.V.value(run.zs), dtype=float), axis=1)
        dp = np.diff(run.ps, axis=0)
        dz = np.diff(run.zs, axis=0)
        de2 = np.diff(run.es) ** 2
        diss_steps = h * np.sum(np.asarray(gen.support_xy(dp, dz), dtype=float),
                                axis=1)
        vp_steps = h * np.sum(dp ** 2, axis=1) / taus
        vz_steps = h * np.sum(dz ** 2, axis=1) / taus
        dz2_steps = vz_steps
        work_steps = run.sigmas[:-1] * np.diff(run.loads)
        dual_work_steps = np.diff(run.sigmas) * np.diff(run.loads) / taus
        zetas = -np.asarray(run.V.slope(run.zs), dtype=float)
        sig = np.broadcast_to(run.sigmas[:, None], run.zs.shape)
        pa, pz = gen.project_xy(sig, zetas)
        hstar = h * np.sum(np.hypot(sig - pa, zetas - pz) ** 2, axis=1) / (2.0 * run.eps)
        de2_steps = de2 / taus
    else:
        d = run.d
        es = run.es if d > 1 else run.es[:, None]
        ps = run.ps if d > 1 else run.ps[:, None]
        sigmas = run.sigmas if d > 1 else run.sigmas[:, None]
        loads = run.loads if d > 1 else run.loads[:, None]
        gen = _hom_generator(run.K, d)
        if d == 1:
            q = run.C.mu * es[:, 0] ** 2
        else:
            trs = es[:, :: d + 1].sum(axis=1)
            devs = es - np.multiply.outer(trs / d, np.eye(d).reshape(-1))
            q = run.C.mu * np.sum(devs ** 2, axis=1) + 0.5 * run.C.kappa * trs ** 2
        v = np.asarray(run.V.value(run.zs), dtype=float)
        dp = np.diff(ps, axis=0)
        dz = np.diff(run.zs)
        if d == 1:
            diss_steps = np.asarray(gen.support_xy(dp[:, 0], dz), dtype=float)
        else:
            diss_steps = np.asarray(
                gen.support_xy(np.linalg.norm(dp, axis=1), dz), dtype=float)
        vp_steps = np.sum(dp ** 2, axis=1) / taus
        dz2_steps = dz ** 2 / taus
        vz_steps = dz2_steps
        work_steps = np.sum(sigmas[:-1] * np.diff(loads, axis=0), axis=1)
        dual_work_steps = np.sum(np.diff(sigmas, axis=0)
                                 * np.diff(loads, axis=0), axis=1) / taus
        de2_steps = np.sum(np.diff(es, axis=0) ** 2, axis=1) / taus
        zetas = -np.asarray(run.V.slope(run.zs), dtype=float)
        if d == 1:
            al = sigmas[:, 0]
        else:
            trs = sigmas[:, :: d + 1].sum(axis=1)
            devs = sigmas - np.multiply.outer(trs / d, np.eye(d).reshape(-1))
            al = np.linalg.norm(devs, axis=1)
        pa, pz = gen.project_xy(al, zetas)
        hstar = (np.hypot(al - pa, zetas - pz) ** 2) / (2.0 * run.eps)

    def prefix(steps):
        return np.concatenate(([0.0], np.cumsum(steps)))

    return {"q": q, "v": v, "hstar": hstar,
            "diss": prefix(diss_steps), "visc_p": prefix(vp_steps),
            "visc_z": prefix(vz_steps), "work": prefix(work_steps),
            "dual_e": prefix(de2_steps), "dual_z": prefix(dz2_steps),
            "dual_work": prefix(dual_work_steps)}


def _omega(run: IncrementalRun, T: float) -> tuple[float, float]:
    """Loading modulus (rho, omega) of the energy estimate up to T."""
    beta = elastic_bounds(run.C, run.d if run.kind == "homogeneous" else 1)[1]
    norm = run.loading.norm
    knots = run.tgrid.knots
    jT = int(np.searchsorted(knots, T + 1e-12))
    tvs = [_profile_tv(run.loading, knots[r - 1], knots[r])
           for r in range(1, max(jT, 2))]
    rho = beta * norm * max(tvs, default=0.0)
    omega = rho * norm * _profile_tv(run.loading, 0.0, T)
    return rho, omega


@dataclass(frozen=True)
class EnergyEstimateReport:
    """Both discrete energy estimates over one knot window.

    The primal estimate bounds stored + dissipated + viscous by the initial
    energy plus external work plus the loading modulus omega; the dual
    estimate bounds the elastic rate and the conjugate gap with no modulus.
    Slacks are right side minus left side, nonnegative when the estimate
    holds.
    """

    t1: float
    t2: float
    T: float
    n_steps: int
    omega: float
    rho: float
    primal_lhs: float
    primal_rhs: float
    primal_slack: float
    primal_ok: bool
    dual_lhs: float
    dual_rhs: float
    dual_slack: float
    dual_ok: bool

    @property
    def ok(self) -> bool:
        return self.primal_ok and self.dual_ok


def discrete_energy_estimate(run: IncrementalRun, t1: float = 0.0,
                             t2: float | None = None, T: float | None = None,
                             tol: float = 1e-8) -> EnergyEstimateReport:
    """Evaluate both energy estimates on the floored window [t1, t2]."""
    knots = run.tgrid.knots
    if t2 is None:
        t2 = float(knots[-1])
    if T is None:
        T = float(knots[-1])
    if not 0.0 <= t1 <= t2 <= knots[-1] + 1e-12:
        raise ValueError("domain error: sample time outside the run window")
    i = run.tgrid.floor_index(t1)
    j = run.tgrid.floor_index(t2)
    b = _books(run)
    rho, omega = _omega(run, T)

    eps = run.eps
    primal_lhs = (b["q"][j] + (b["diss"][j] - b["diss"][i]) + b["v"][j]
                  + 0.5 * eps * (b["visc_p"][j] - b["visc_p"][i])
                  + 0.5 * eps * (b["visc_z"][j] - b["visc_z"][i]))
    primal_rhs = (b["q"][i] + b["v"][i] + (b["work"][j] - b["work"][i])
                  + omega)
    alpha = elastic_bounds(run.C, run.d if run.kind == "homogeneous" else 1)[0]
    M = float(run.V.M)
    dual_lhs = (alpha * (b["dual_e"][j] - b["dual_e"][i])
                + b["hstar"][j] - b["hstar"][i])
    dual_rhs = (M * (b["dual_z"][j] - b["dual_z"][i])
                + (b["dual_work"][j] - b["dual_work"][i]))
    p_scale = 1.0 + abs(primal_lhs) + abs(primal_rhs)
    d_scale = 1.0 + abs(dual_lhs) + abs(dual_rhs)
    return EnergyEstimateReport(
        t1=float(knots[i]), t2=float(knots[j]), T=T, n_steps=j - i,
        omega=omega, rho=rho,
        primal_lhs=float(primal_lhs), primal_rhs=float(primal_rhs),
        primal_slack=float(primal_rhs - primal_lhs),
        primal_ok=bool(primal_rhs - primal_lhs >= -tol * p_scale),
        dual_lhs=float(dual_lhs), dual_rhs=float(dual_rhs),
        dual_slack=float(dual_rhs - dual_lhs),
        dual_ok=bool(dual_rhs - dual_lhs >= -tol * d_scale))


# --------------------------------------------------------------------------
# CSV output
# --------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_incremental_csv(run: IncrementalRun, target) -> None:
    """Per-knot CSV of the chain; accepts a path or a text file object.

    The sigma column is the scalar stress in the scalar conventions and the
    signed ray component <sigma, xi0>/|xi0| for matrix runs; the theta column
    is the internal variable itself for homogeneous runs and its grid mean
    for reduced runs.  The energy columns are the two sides of the primal
    estimate cumulated from 0 to the row's time (omega included on the right).
    """
    b = _books(run)
    _, omega = _omega(run, float(run.tgrid.knots[-1]))
    eps = run.eps
    lhs = (b["q"] + b["diss"] + b["v"]
           + 0.5 * eps * b["visc_p"] + 0.5 * eps * b["visc_z"])
    rhs = b["q"][0] + b["v"][0] + b["work"] + omega
    if run.kind == "reduced":
        sig_col = run.sigmas
        th_col = run.zs.mean(axis=1)
    elif run.d == 1:
        sig_col = run.sigmas
        th_col = run.zs
    else:
        xi0 = _hom_flat(run.loading.xi0, run.d)
        sig_col = run.sigmas @ xi0 / np.linalg.norm(xi0)
        th_col = run.zs
    close = False
    if not hasattr(target, "write"):
        target = open(target, "w", newline="")
        close = True
    try:
        target.write(CSV_HEADER + "\n")
        for i, t in enumerate(run.tgrid.knots):
            kkt = 0.0 if i == 0 else float(run.kkt_residuals[i - 1])
            row = [str(i), _fmt(t), _fmt(sig_col[i]), _fmt(th_col[i]),
                   _fmt(kkt), _fmt(lhs[i]), _fmt(rhs[i])]
            target.write(",".join(row) + "\n")
    finally:
        if close:
            target.close()
