"""Spatially homogeneous evolution: regularized runs and their rate-independent limit.

With uniform fields the quasistatic system collapses to an ODE for the pair
(elastic strain, internal variable).  The regularized dynamics is

    (d/dt) xi_e = xi_dot_s(t) - N^eps_1,   (d/dt) theta = N^eps_2,

where N^eps = (x - P_K x)/eps is the viscous flow evaluated at the stress
point x = (C_D (xi_e)_D, -V'(theta)).  Inside K the flow vanishes exactly and
the motion is purely elastic; the first boundary contact happens at the
critical time returned by `critical_time`.

As eps -> 0 the runs converge to a rate-independent evolution that follows
the slow branch B0 theta' = A0 where B0 > 0 and jumps across the unstable
window through the fast transition map.  `quasistatic_assemble` builds that
limit directly from the coefficient decomposition, `verify_eps_convergence`
measures the distance between the two on compact windows, and
`energy_audit_homogeneous` closes the books: an equality for regularized
runs, an equality-or-deficit for the limit, with the deficit after a jump
matching the dissipation of the connecting fast orbit.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .domains import Ball, Radial
from .errors import IntegrationFailure, StiffnessFailure
from .slowfast import (
    SlowFastDecomposition,
    TransitionOrbit,
    decompose,
    fast_transition,
    transition_dissipation,
)
from .softening import SofteningPotential, validate_against_domain
from .tensors import DevMatrix, IsotropicElasticity, SymMatrix, shear_embed

#: column layout of per-run CSV output
CSV_HEADER = "t,theta,psi,sigma_norm,energy_residual"

#: the coefficient decomposition doubles as the public entry point for the
#: slow/fast analysis of one homogeneous parameter set
slow_fast_coefficients = decompose


def critical_time(mu: float, xi0s_norm: float, V: SofteningPotential,
                  theta0: float) -> float:
    """First boundary-contact time sqrt(1 - V'(theta0)^2) / (2 mu |xi0_s|)."""
    if not xi0s_norm > 0.0:
        raise ValueError("invalid loading: xi0s_norm must be positive")
    vp = float(V.slope(theta0))
    if abs(vp) > 1.0:
        raise ValueError(
            "invalid initial state: |V'(theta0)| > 1 has no boundary contact")
    return float(np.sqrt(1.0 - vp ** 2) / (2.0 * mu * xi0s_norm))


@dataclass(frozen=True)
class LoadingProgram:
    """Boundary-strain program xi_s(t) = profile(t) * xi0.

    ``xi0`` is the loading direction: a trace-free DevMatrix for matrix runs,
    a bare real in the scalar convention.  The profile is the identity
    (``kind="linear"``), a rooftop that rises with unit rate and descends
    with unit rate after the turnaround (``kind="triangular"``), or a
    piecewise-linear interpolant of (t, value) knots held constant outside
    their range (``kind="tabulated"``).
    """

    xi0: object
    kind: str = "linear"
    turnaround: float | None = None
    knots: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "triangular", "tabulated"):
            raise ValueError(f"invalid loading: unknown kind {self.kind!r}")
        if self.kind == "triangular" and not (self.turnaround or 0.0) > 0.0:
            raise ValueError("invalid loading: turnaround must be positive")
        if self.kind == "tabulated":
            ts = np.asarray([k[0] for k in self.knots or ()], dtype=float)
            if len(ts) < 2 or not np.all(np.diff(ts) > 0.0):
                raise ValueError(
                    "invalid loading: tabulated profile needs increasing knots")

    @staticmethod
    def linear(xi0) -> "LoadingProgram":
        return LoadingProgram(xi0)

    @staticmethod
    def triangular(xi0, turnaround: float) -> "LoadingProgram":
        return LoadingProgram(xi0, kind="triangular", turnaround=float(turnaround))

    @staticmethod
    def tabulated(xi0, knots) -> "LoadingProgram":
        knots = tuple((float(t), float(v)) for t, v in knots)
        return LoadingProgram(xi0, kind="tabulated", knots=knots)

    @property
    def d(self) -> int:
        return self.xi0.d if isinstance(self.xi0, SymMatrix) else 1

    @property
    def norm(self) -> float:
        return self.xi0.norm if isinstance(self.xi0, SymMatrix) else abs(float(self.xi0))

    def profile(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "linear":
            return t + 0.0
        if self.kind == "triangular":
            return np.where(t <= self.turnaround, t, 2.0 * self.turnaround - t)
        ts = np.array([k[0] for k in self.knots])
        vs = np.array([k[1] for k in self.knots])
        return np.interp(t, ts, vs)

    def rate(self, t):
        """Profile slope; at a kink the right-hand slope is reported."""
        t = np.asarray(t, dtype=float)
        if self.kind == "linear":
            return np.ones_like(t)
        if self.kind == "triangular":
            return np.where(t < self.turnaround, 1.0, -1.0)
        ts = np.array([k[0] for k in self.knots])
        vs = np.array([k[1] for k in self.knots])
        slopes = np.diff(vs) / np.diff(ts)
        idx = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(slopes) - 1)
        out = slopes[idx]
        return np.where((t < ts[0]) | (t >= ts[-1]), 0.0, out)

    def kink_times(self, a: float, b: float) -> tuple[float, ...]:
        """Interior profile kinks in (a, b); integration restarts there."""
        if self.kind == "triangular":
            ks = (self.turnaround,)
        elif self.kind == "tabulated":
            ks = tuple(k[0] for k in self.knots)
        else:
            ks = ()
        return tuple(k for k in ks if a < k < b)


@dataclass(frozen=True)
class HomogeneousState:
    """One snapshot (t, elastic strain, internal variable)."""

    t: float
    xi_e: object  # SymMatrix / DevMatrix, or a bare real in the scalar convention
    theta: float


def _xi_flat(xi, d: int) -> np.ndarray:
    if d == 1:
        return np.array([xi.scalar if isinstance(xi, SymMatrix) else float(xi)])
    if not isinstance(xi, SymMatrix) or xi.d != d:
        raise ValueError("invalid initial state: xi_e does not match the loading")
    return xi.a.reshape(-1).astype(float)


class _Kernel:
    """Flattened-state dynamics shared by the integrator and its diagnostics."""

    def __init__(self, C, K, V, loading):
        self.d = loading.d
        self.mu = C.mu
        self.kappa = C.kappa if self.d >= 2 else 0.0
        self.V = V
        self.loading = loading
        self.S = loading.norm
        if self.d == 1:
            if isinstance(K, Radial):
                raise ValueError(
                    "invalid domain: scalar runs use a planar domain directly")
            self.gen = K
            self.xi0 = float(loading.xi0.scalar if isinstance(loading.xi0, SymMatrix)
                             else loading.xi0)
            self.nd = 1
        else:
            if not isinstance(K, Radial):
                raise ValueError(
                    "invalid domain: matrix runs need a radially lifted domain")
            self.gen = K.generator
            self.xi0 = loading.xi0.a.reshape(-1).astype(float)
            self.nd = self.d * self.d
            self._eye = np.eye(self.d).reshape(-1)

    def stress_ray(self, xe_flat):
        """(signed alpha for d=1 / deviator norm otherwise, deviator flat)."""
        if self.d == 1:
            s = 2.0 * self.mu * xe_flat[..., 0]
            return s, s
        tr = xe_flat[..., :: self.d + 1].sum(axis=-1)
        dev = xe_flat - np.multiply.outer(tr / self.d, self._eye)
        sig = 2.0 * self.mu * dev
        return np.sqrt((sig * sig).sum(axis=-1)), sig

    def rhs(self, t, y, eps):
        th = y[self.nd]
        al, sig = self.stress_ray(y[: self.nd])
        ze = -float(self.V.slope(th))
        pa, pz = self.gen.project_xy(al, ze)
        n1 = (al - float(pa)) / eps
        n2 = (ze - float(pz)) / eps
        rate = float(self.loading.rate(t))
        out = np.empty(self.nd + 4)
        if self.d == 1:
            out[0] = rate * self.xi0 - n1
            wrate = al * rate * self.xi0
        else:
            if al > 0.0:
                nxi = (n1 / al) * sig
            else:
                nxi = np.zeros(self.nd)
            out[: self.nd] = rate * self.xi0 - nxi
            wrate = rate * float(sig @ self.xi0)
        out[self.nd] = n2
        out[self.nd + 1] = float(self.gen.support_xy(n1, n2))
        out[self.nd + 2] = n1 * n1 + n2 * n2
        out[self.nd + 3] = wrate
        return out

    def gauge_at(self, xe_flat, theta):
        al, _ = self.stress_ray(xe_flat)
        return float(self.gen.gauge_xy(al, -float(self.V.slope(theta))))

    def stored_energy(self, xe_flat):
        # the trace part of xi_e is constant along runs (loading and flow are
        # both deviatoric), but keep it in the books anyway
        if self.d == 1:
            return self.mu * float(xe_flat[0]) ** 2
        tr = float(xe_flat[:: self.d + 1].sum())
        dev = xe_flat - (tr / self.d) * self._eye
        return self.mu * float(dev @ dev) + 0.5 * self.kappa * tr * tr


@dataclass(frozen=True)
class EpsRun:
    """Sampled solution of one regularized run.

    Evaluation methods accept scalar or array times inside [t_start, t_end].
    ``t_yield`` is the first boundary-contact time (None when the whole run
    stays elastic); before it the closed-form elastic solution is used, after
    it the dense integrator output.
    """

    C: IsotropicElasticity
    K: object
    V: SofteningPotential
    loading: LoadingProgram
    eps: float
    tol: float
    t_start: float
    t_end: float
    t_yield: float | None
    d: int
    _kern: object
    _xe0: np.ndarray
    _theta0: float
    _phi_start: float
    _segments: tuple

    # --- evaluation --------------------------------------------------------

    def _eval(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        lo, hi = self.t_start - 1e-9, self.t_end + 1e-9
        if np.any(ts < lo) or np.any(ts > hi):
            raise ValueError("domain error: sample time outside the run window")
        nd = self._kern.nd
        out = np.empty((len(ts), nd + 4))
        ty = self.t_end if not self._segments else self.t_yield
        dormant = ts <= ty
        if np.any(dormant):
            td = ts[dormant]
            dphi = np.asarray(self.loading.profile(td), dtype=float) - self._phi_start
            xi0 = np.atleast_1d(self._kern.xi0)
            out[dormant, :nd] = self._xe0 + np.multiply.outer(dphi, xi0)
            out[dormant, nd] = self._theta0
            out[dormant, nd + 1] = 0.0
            out[dormant, nd + 2] = 0.0
            out[dormant, nd + 3] = [self._elastic_work(t) for t in td]
        live = ~dormant
        if np.any(live):
            tl = ts[live]
            rows = np.empty((len(tl), nd + 4))
            bounds = np.array([b for (_, b, _) in self._segments])
            which = np.minimum(np.searchsorted(bounds, tl), len(bounds) - 1)
            for k, (a, b, sol) in enumerate(self._segments):
                sel = which == k
                if np.any(sel):
                    rows[sel] = sol(np.clip(tl[sel], a, b)).T
            out[live] = rows
        return out

    def _elastic_work(self, t) -> float:
        # exact along dormant stretches: the integrand is an affine function
        # of the profile, so the accumulated work is a quadratic in it
        dphi = float(self.loading.profile(t)) - self._phi_start
        al0, sig0 = self._kern.stress_ray(self._xe0)
        if self.d == 1:
            inner = float(sig0) * self._kern.xi0
        else:
            inner = float(sig0 @ self._kern.xi0)
        S = self._kern.S
        return inner * dphi + self._kern.mu * S * S * dphi * dphi

    def states(self, ts) -> list[HomogeneousState]:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        arr = self._eval(ts)
        nd = self._kern.nd
        out = []
        for t, row in zip(ts, arr):
            if self.d == 1:
                xe = float(row[0])
            else:
                xe = SymMatrix(row[:nd].reshape(self.d, self.d))
            out.append(HomogeneousState(float(t), xe, float(row[nd])))
        return out

    def theta(self, ts):
        return self._eval(ts)[:, self._kern.nd]

    def xi_e_flat(self, ts):
        return self._eval(ts)[:, : self._kern.nd]

    def xi_p_flat(self, ts):
        """Plastic strain xi_s(t) - xi_e(t), flattened."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        xs = np.multiply.outer(self.loading.profile(ts),
                               np.atleast_1d(self._kern.xi0))
        return xs - self.xi_e_flat(ts)

    def sigma_norm(self, ts):
        al, _ = self._kern.stress_ray(self._eval(ts)[:, : self._kern.nd])
        return np.abs(al)

    def psi(self, ts):
        """Plastic slip along the loading ray, profile(t) - <xi_e, xi0>/S^2."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        xe = self.xi_e_flat(ts)
        S = self._kern.S
        ray = xe @ np.atleast_1d(self._kern.xi0) / (S * S)
        return self.loading.profile(ts) - ray

    def accumulators(self, ts):
        """(dissipation H, viscous square, external work) up to each time."""
        arr = self._eval(ts)
        nd = self._kern.nd
        return arr[:, nd + 1], arr[:, nd + 2], arr[:, nd + 3]

    def energy_residual(self, ts):
        """Scaled defect of stored + dissipated + viscous - initial - work."""
        arr = self._eval(ts)
        nd = self._kern.nd
        q = np.array([self._kern.stored_energy(row[:nd]) for row in arr])
        v = np.asarray(self.V.value(arr[:, nd]), dtype=float)
        q0 = self._kern.stored_energy(self._xe0)
        v0 = float(self.V.value(self._theta0))
        acc_h, acc_v, acc_w = arr[:, nd + 1], arr[:, nd + 2], arr[:, nd + 3]
        raw = q + v + acc_h + self.eps * acc_v - q0 - v0 - acc_w
        scale = 1.0 + np.abs(q) + np.abs(v) + acc_h + self.eps * acc_v \
            + abs(q0) + abs(v0) + np.abs(acc_w)
        return raw / scale

    def constraint_residual(self, ts, h: float | None = None):
        """How far x - eps * (rates) sits from the yield surface.

        Rates are centered finite differences of the dense solution, so this
        measures whether the integrated path actually satisfies the flow
        equation, not just whether the flow map was applied (rates read off
        the flow field would land on the projection by construction).  The
        default step h = eps/2 keeps the quotient's noise at the tolerance
        scale; jump layers still blur over h, so sample away from them.
        """
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if h is None:
            h = 0.5 * self.eps
        nd = self._kern.nd
        lo = self.t_start + h
        hi = self.t_end - h
        ts = np.clip(ts, lo, hi)
        y_m = self._eval(ts - h)
        y_p = self._eval(ts + h)
        y_0 = self._eval(ts)
        out = np.empty(len(ts))
        for i in range(len(ts)):
            rates = (y_p[i] - y_m[i]) / (2.0 * h)
            al, sig = self._kern.stress_ray(y_0[i][:nd])
            ze = -float(self.V.slope(y_0[i][nd]))
            if self.d == 1:
                pdot = float(self.loading.rate(ts[i])) * self._kern.xi0 - rates[0]
            else:
                xs_rate = float(self.loading.rate(ts[i])) * self._kern.xi0
                pvec = xs_rate - rates[:nd]
                pdot = float(np.sqrt(pvec @ pvec))
                if al > 0.0 and float(pvec @ sig) < 0.0:
                    pdot = -pdot
            back_a = al - self.eps * pdot
            back_z = ze - self.eps * rates[nd]
            out[i] = abs(back_a ** 2 + back_z ** 2 - 1.0)
        return out


def integrate_eps_ode(C: IsotropicElasticity, K, V: SofteningPotential,
                      loading: LoadingProgram, init: HomogeneousState,
                      eps: float, t_end: float, tol: float = 1e-9) -> EpsRun:
    """Run the regularized dynamics from ``init`` up to ``t_end``.

    The elastic stretch before first boundary contact is advanced in closed
    form; from the contact on, an adaptive embedded Runge-Kutta pair with the
    step cap h <= eps/4 integrates the flattened state
    [xi_e, theta, acc_H, acc_visc, acc_work].  Inside K the flow map returns
    exact zeros, so dormant stretches after the first contact (reverse
    loading) are handled by the same loop.
    """
    if not eps > 0.0:
        raise ValueError("invalid parameter: eps must be positive")
    if not tol > 0.0:
        raise ValueError("invalid parameter: tol must be positive")
    if not t_end > init.t:
        raise ValueError("invalid parameter: t_end must exceed the start time")
    compat = validate_against_domain(V, K)
    if not compat.ok:
        raise ValueError(
            f"incompatible potential and domain: {compat.failed}")

    kern = _Kernel(C, K, V, loading)
    xe0 = _xi_flat(init.xi_e, kern.d)
    theta0 = float(init.theta)
    g0 = kern.gauge_at(xe0, theta0)
    if g0 > 1e-8 * (1.0 + float(np.abs(xe0).max())):
        raise ValueError(
            "invalid initial state: stress starts outside the elastic domain")
    phi_start = float(loading.profile(init.t))

    # --- dormant phase: xi_e tracks the loading exactly --------------------
    def gauge_of_t(t):
        dphi = float(loading.profile(t)) - phi_start
        return kern.gauge_at(xe0 + dphi * np.atleast_1d(kern.xi0), theta0)

    t_yield = None
    if g0 >= -1e-14:
        t_yield = float(init.t)
    else:
        grid = np.unique(np.concatenate([
            np.linspace(init.t, t_end, 4097),
            np.asarray(loading.kink_times(init.t, t_end), dtype=float),
        ]))
        gv = np.array([gauge_of_t(t) for t in grid])
        hits = np.nonzero(gv > 0.0)[0]
        if len(hits):
            i = hits[0]
            t_yield = float(brentq(gauge_of_t, grid[i - 1], grid[i],
                                   xtol=1e-14, rtol=8.9e-16))

    run_proto = dict(C=C, K=K, V=V, loading=loading, eps=eps, tol=tol,
                     t_start=float(init.t), t_end=float(t_end), d=kern.d,
                     _kern=kern, _xe0=xe0, _theta0=theta0,
                     _phi_start=phi_start)
    if t_yield is None or t_yield >= t_end:
        return EpsRun(t_yield=None, _segments=(), **run_proto)

    # --- plastic phase: integrate segment-wise between profile kinks -------
    dphi = float(loading.profile(t_yield)) - phi_start
    y0 = np.concatenate([xe0 + dphi * np.atleast_1d(kern.xi0),
                         [theta0, 0.0, 0.0, 0.0]])
    proto = EpsRun(t_yield=t_yield, _segments=(), **run_proto)
    y0[kern.nd + 3] = proto._elastic_work(t_yield)

    S = kern.S
    span = 1.0 + float(np.abs(y0).max()) \
        + S * float(np.max(np.abs(loading.profile(np.linspace(init.t, t_end, 64)))))
    breakpoints = (t_yield,) + loading.kink_times(t_yield, t_end) + (t_end,)
    segments = []
    y = y0
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        sol = solve_ivp(kern.rhs, (a, b), y, method="RK45", args=(eps,),
                        rtol=tol, atol=tol * span, max_step=eps / 4.0,
                        dense_output=True)
        if not sol.success:
            raise StiffnessFailure(
                f"step size underflow near t = {sol.t[-1]:.6g}: "
                "widen eps or loosen tol")
        segments.append((a, b, sol.sol))
        y = sol.y[:, -1]
    return EpsRun(t_yield=t_yield, _segments=tuple(segments), **run_proto)


# --------------------------------------------------------------------------
# quasistatic limit
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _Branch:
    t_nodes: np.ndarray
    th_nodes: np.ndarray
    interp: object

    @property
    def t_lo(self):
        return float(self.t_nodes[0])

    @property
    def t_hi(self):
        return float(self.t_nodes[-1])


def _slow_branch(dec: SlowFastDecomposition, t_start: float, th_start: float,
                 t_end: float, th_stop: float | None = None) -> _Branch:
    """March t(theta) = t_start + integral of B0/A0 along the slow manifold.

    Stops at theta = th_stop when given (pre-jump branch into the window
    edge, where the integrand vanishes), otherwise when t reaches t_end.
    """
    def dens(th):
        return float(dec.b0(th) / dec.a0(th))

    th_nodes = [float(th_start)]
    t_nodes = [float(t_start)]
    while True:
        th = th_nodes[-1]
        if th_stop is not None and th >= th_stop - 1e-15:
            break
        if t_nodes[-1] >= t_end:
            break
        h = 0.002 * (1.0 + 0.3 * th)
        nxt = th + h
        if th_stop is not None:
            nxt = min(nxt, th_stop)
        dt, _ = quad(dens, th, nxt, epsabs=1e-14, epsrel=1e-12)
        th_nodes.append(nxt)
        t_nodes.append(t_nodes[-1] + dt)
        if len(th_nodes) > 400000:
            raise IntegrationFailure("slow branch did not reach the horizon")
    t_arr = np.asarray(t_nodes)
    th_arr = np.asarray(th_nodes)
    if len(t_arr) < 2:
        # degenerate branch (horizon before any motion); keep a flat stub
        t_arr = np.array([t_start, t_end])
        th_arr = np.array([th_start, th_start])
    return _Branch(t_arr, th_arr, PchipInterpolator(t_arr, th_arr))


@dataclass(frozen=True)
class QuasistaticTrajectory:
    """Rate-independent limit evolution with optional single jump.

    ``samples`` lists (t, theta, psi, sigma) rows with sigma a canonical
    shear-embedded DevMatrix of the right norm; at the jump time two rows
    share the same t (departure first).  Evaluation methods are
    left-continuous at the jump.
    """

    mu: float
    xi0s_norm: float
    V: SofteningPotential
    theta0: float
    t_end: float
    case: str
    t0: float
    jump: dict | None
    orbit: TransitionOrbit | None
    samples: tuple
    _branches: tuple

    @property
    def tau(self) -> float | None:
        return None if self.jump is None else self.jump["tau"]

    def theta(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        out = np.full(len(ts), float(self.theta0))
        for br in self._branches:
            sel = ts > br.t_lo
            if br is not self._branches[-1]:
                sel &= ts <= br.t_hi
            if np.any(sel):
                out[sel] = br.interp(np.clip(ts[sel], br.t_lo, br.t_hi))
        return out

    def psi(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        vp = np.asarray(self.V.slope(self.theta(ts)), dtype=float)
        c = 2.0 * self.mu * self.xi0s_norm
        out = ts - np.sqrt(1.0 - vp ** 2) / c
        return np.where(ts <= self.t0, 0.0, out)

    def sigma_norm(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        vp = np.asarray(self.V.slope(self.theta(ts)), dtype=float)
        c = 2.0 * self.mu * self.xi0s_norm
        return np.where(ts <= self.t0, c * ts, np.sqrt(1.0 - vp ** 2))


def quasistatic_assemble(decomp: SlowFastDecomposition, mu: float,
                         xi0s_norm: float, V: SofteningPotential,
                         theta0: float, t_end: float) -> QuasistaticTrajectory:
    """Assemble the limit evolution for one parameter set.

    Case selection: no unstable window (or starting beyond it at
    theta0 >= beta) follows the slow branch throughout; starting inside
    [alpha, beta) jumps immediately at the contact time t0; starting below
    alpha creeps along the slow branch until theta reaches alpha at time tau
    and jumps there.  Jump arrivals come from the fast transition map and
    land strictly beyond beta.
    """
    if abs(decomp.mu - mu) > 1e-12 * (1.0 + mu) or \
            abs(decomp.xi0s_norm - xi0s_norm) > 1e-12 * (1.0 + xi0s_norm):
        raise ValueError("invalid parameter: decomposition built for "
                         "different (mu, xi0s_norm)")
    if not theta0 > 0.0:
        raise ValueError("invalid parameter: theta0 must be positive")
    t0 = critical_time(mu, xi0s_norm, V, theta0)
    if t0 >= t_end:
        raise ValueError("invalid parameter: horizon ends before first contact")

    roots = decomp.roots
    if roots is None or decomp.degenerate or theta0 >= roots[1]:
        case = "a"
    elif theta0 >= roots[0]:
        case = "b"
    else:
        case = "c"

    jump = None
    orbit = None
    branches = []
    if case == "a":
        branches.append(_slow_branch(decomp, t0, theta0, t_end))
    elif case == "b":
        orbit = fast_transition(decomp, theta0)
        jump = {"tau": t0, "theta_minus": float(theta0),
                "theta_plus": float(orbit.phi)}
        branches.append(_slow_branch(decomp, t0, orbit.phi, t_end))
    else:
        alpha = roots[0]
        pre = _slow_branch(decomp, t0, theta0, np.inf, th_stop=alpha)
        tau = pre.t_hi
        if tau >= t_end:
            raise ValueError(
                "invalid parameter: horizon ends before the jump; extend t_end")
        orbit = fast_transition(decomp, alpha)
        jump = {"tau": tau, "theta_minus": float(alpha),
                "theta_plus": float(orbit.phi)}
        branches.append(pre)
        branches.append(_slow_branch(decomp, tau, orbit.phi, t_end))

    traj = QuasistaticTrajectory(
        mu=float(mu), xi0s_norm=float(xi0s_norm), V=V, theta0=float(theta0),
        t_end=float(t_end), case=case, t0=float(t0), jump=jump, orbit=orbit,
        samples=(), _branches=tuple(branches))
    return QuasistaticTrajectory(
        mu=traj.mu, xi0s_norm=traj.xi0s_norm, V=V, theta0=traj.theta0,
        t_end=traj.t_end, case=case, t0=traj.t0, jump=jump, orbit=orbit,
        samples=_build_samples(traj), _branches=traj._branches)


def _build_samples(traj: QuasistaticTrajectory, per_branch: int = 320) -> tuple:
    def row(t, th):
        vp = float(traj.V.slope(th))
        c = 2.0 * traj.mu * traj.xi0s_norm
        if t <= traj.t0:
            sn, ps = c * t, 0.0
        else:
            sn = float(np.sqrt(1.0 - vp ** 2))
            ps = t - sn / c
        return (float(t), float(th), float(ps), shear_embed(sn, 2))

    rows = []
    for t in np.linspace(0.0, traj.t0, 65):
        rows.append(row(t, traj.theta0))
    tau = traj.tau
    for br in traj._branches:
        a, b = br.t_lo, min(br.t_hi, traj.t_end)
        ts = np.linspace(a, b, per_branch)[1:]
        if tau is not None and abs(a - tau) < 1e-14:
            rows.append(row(tau, traj.jump["theta_plus"]))
        for t in ts:
            rows.append(row(t, float(br.interp(t))))
    return tuple(rows)


# --------------------------------------------------------------------------
# convergence and energy reports
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceReport:
    eps: tuple
    windows: tuple
    sup_errors: np.ndarray       # (n_eps, n_windows)
    monotone: bool
    final_max: float
    jump_window_errors: np.ndarray | None
    runs: tuple


def default_windows(traj: QuasistaticTrajectory, delta: float = 0.2,
                    margin: float = 0.1) -> tuple:
    """Compact comparison windows: after contact, clear of the jump layer."""
    lo = traj.t0 + margin
    hi = traj.t_end
    if traj.jump is None:
        return ((lo, hi),)
    tau = traj.jump["tau"]
    wins = []
    if tau - delta > lo:
        wins.append((lo, tau - delta))
    if tau + delta < hi:
        wins.append((tau + delta, hi))
    return tuple(wins)


def verify_eps_convergence(eps_list, quasistatic: QuasistaticTrajectory,
                           windows=None, C=None, K=None, loading=None,
                           init=None, tol: float = 1e-9,
                           points_per_window: int = 200) -> ConvergenceReport:
    """Measure sup |theta_eps - theta| on compact windows for each eps.

    Defaults reconstruct the matrix-valued unit-ball scenario behind the
    quasistatic trajectory; pass explicit (C, K, loading, init) to override.
    The jump window, when present, is tracked separately: the boundary layer
    lives there and its error is expected NOT to vanish.
    """
    eps_list = tuple(float(e) for e in eps_list)
    if len(eps_list) < 2 or not all(a > b for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("invalid parameter: eps_list must be strictly decreasing")
    traj = quasistatic
    if C is None:
        C = IsotropicElasticity(traj.mu, 1.0)
    if K is None:
        K = Radial(Ball(1.0))
    if loading is None:
        loading = LoadingProgram.linear(shear_embed(traj.xi0s_norm, 2))
    if init is None:
        init = HomogeneousState(0.0, DevMatrix(np.zeros((2, 2))), traj.theta0)
    if windows is None:
        windows = default_windows(traj)
    windows = tuple((float(a), float(b)) for a, b in windows)
    for a, b in windows:
        if not b > a:
            raise ValueError("invalid parameter: empty comparison window")

    runs = []
    sup = np.empty((len(eps_list), len(windows)))
    jump_err = [] if traj.jump is not None else None
    for i, eps in enumerate(eps_list):
        run = integrate_eps_ode(C, K, traj.V, loading, init, eps,
                                traj.t_end, tol=tol)
        runs.append(run)
        for j, (a, b) in enumerate(windows):
            ts = np.linspace(a, b, points_per_window)
            sup[i, j] = float(np.max(np.abs(run.theta(ts) - traj.theta(ts))))
        if jump_err is not None:
            tau = traj.jump["tau"]
            ts = np.linspace(max(tau - 0.2, traj.t0), min(tau + 0.2, traj.t_end), 161)
            jump_err.append(float(np.max(np.abs(run.theta(ts) - traj.theta(ts)))))
    monotone = bool(np.all(np.diff(sup, axis=0) < 0.0))
    return ConvergenceReport(
        eps=eps_list, windows=windows, sup_errors=sup, monotone=monotone,
        final_max=float(sup[-1].max()),
        jump_window_errors=None if jump_err is None else np.asarray(jump_err),
        runs=tuple(runs))


@dataclass(frozen=True)
class EnergyReport:
    kind: str                    # "eps" or "quasistatic"
    T: float
    stored: float                # elastic energy at T
    softening: float             # V(theta(T))
    dissipation_h: float
    dissipation_viscous: float   # eps-weighted; zero for quasistatic
    work: float
    residual_raw: float
    residual: float              # scaled by 1 + sum of magnitudes
    jump_deficit: float | None = None
    orbit_excess: float | None = None
    jump_match: float | None = None


def energy_audit_homogeneous(run, C, K, V, loading,
                             T: float | None = None) -> EnergyReport:
    """Close the energy books for a regularized or quasistatic run.

    Regularized runs must balance to quadrature accuracy.  Quasistatic runs
    balance exactly while no jump has occurred; once a jump is in the past
    the books close short by exactly the extra dissipation of the connecting
    fast orbit, and the report carries both numbers side by side.
    """
    if isinstance(run, EpsRun):
        T = run.t_end if T is None else float(T)
        arr = run._eval([T])[0]
        nd = run._kern.nd
        q = run._kern.stored_energy(arr[:nd])
        v = float(V.value(arr[nd]))
        q0 = run._kern.stored_energy(run._xe0)
        v0 = float(V.value(run._theta0))
        acc_h, acc_v, acc_w = arr[nd + 1], arr[nd + 2], arr[nd + 3]
        raw = q + v + acc_h + run.eps * acc_v - q0 - v0 - acc_w
        scale = 1.0 + abs(q) + abs(v) + acc_h + run.eps * acc_v \
            + abs(q0) + abs(v0) + abs(acc_w)
        return EnergyReport(kind="eps", T=T, stored=q, softening=v,
                            dissipation_h=acc_h,
                            dissipation_viscous=run.eps * acc_v, work=acc_w,
                            residual_raw=raw, residual=raw / scale)

    if not isinstance(run, QuasistaticTrajectory):
        raise ValueError("invalid parameter: expected an EpsRun or a "
                         "QuasistaticTrajectory")
    traj = run
    gen = K.generator if isinstance(K, Radial) else K
    if not (isinstance(gen, Ball) and abs(gen.radius - 1.0) < 1e-12):
        raise ValueError("invalid domain: the quasistatic audit covers the "
                         "radial unit-ball scenario")
    if loading.kind != "linear":
        raise ValueError("invalid loading: the quasistatic audit covers "
                         "linear programs")
    T = traj.t_end if T is None else float(T)
    mu, S = traj.mu, traj.xi0s_norm
    dec = decompose(mu, S, traj.V)
    c = 2.0 * mu * S

    def vp(th):
        return float(traj.V.slope(th))

    def dpsi_dth(th):
        v1, v2 = vp(th), float(traj.V.curvature(th))
        return float(dec.b0(th) / dec.a0(th)) + v1 * v2 / (c * np.sqrt(1.0 - v1 ** 2))

    def h_dens(th):
        return float(np.hypot(S * dpsi_dth(th), 1.0))

    def w_dens(th):
        v1 = vp(th)
        return S * float(np.sqrt(1.0 - v1 ** 2)) * float(dec.b0(th) / dec.a0(th))

    th_T = float(traj.theta([T])[0])
    work = mu * S * S * min(T, traj.t0) ** 2
    acc_h = 0.0
    jump_deficit = None
    orbit_excess = None
    jump_match = None
    if T > traj.t0:
        tau = traj.tau
        if tau is None or T <= tau:
            a, b = traj.theta0, th_T
            acc_h += quad(h_dens, a, b, epsabs=1e-13, epsrel=1e-11)[0]
            work += quad(w_dens, a, b, epsabs=1e-13, epsrel=1e-11)[0]
        else:
            gam, phi = traj.jump["theta_minus"], traj.jump["theta_plus"]
            if traj.case == "c":
                acc_h += quad(h_dens, traj.theta0, gam,
                              epsabs=1e-13, epsrel=1e-11)[0]
                work += quad(w_dens, traj.theta0, gam,
                             epsabs=1e-13, epsrel=1e-11)[0]
            dpsi = (np.sqrt(1.0 - vp(gam) ** 2)
                    - np.sqrt(1.0 - vp(phi) ** 2)) / c
            acc_h += float(np.hypot(S * dpsi, phi - gam))
            acc_h += quad(h_dens, phi, th_T, epsabs=1e-13, epsrel=1e-11)[0]
            work += quad(w_dens, phi, th_T, epsabs=1e-13, epsrel=1e-11)[0]
            orbit = traj.orbit if traj.orbit is not None \
                else fast_transition(dec, gam)
            orbit_excess = float(transition_dissipation(dec, orbit).excess)

    sn = float(traj.sigma_norm([T])[0])
    q = sn ** 2 / (4.0 * mu)
    v = float(traj.V.value(th_T))
    v0 = float(traj.V.value(traj.theta0))
    raw = q + v + acc_h - v0 - work
    scale = 1.0 + abs(q) + abs(v) + acc_h + abs(v0) + abs(work)
    if orbit_excess is not None:
        jump_deficit = raw
        jump_match = abs(raw + orbit_excess) / orbit_excess
    return EnergyReport(kind="quasistatic", T=T, stored=q, softening=v,
                        dissipation_h=acc_h, dissipation_viscous=0.0,
                        work=work, residual_raw=raw, residual=raw / scale,
                        jump_deficit=jump_deficit, orbit_excess=orbit_excess,
                        jump_match=jump_match)


# --------------------------------------------------------------------------
# CSV output
# --------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_run_csv(run, target, n_samples: int = 1001) -> None:
    """Write one run as CSV; accepts a path or a text file object.

    Regularized runs are sampled uniformly; quasistatic runs write their
    sample rows (the jump appears as two rows sharing one t) followed by a
    jump metadata block when a jump is present.
    """
    close = False
    if not hasattr(target, "write"):
        target = open(target, "w", newline="")
        close = True
    try:
        target.write(CSV_HEADER + "\n")
        if isinstance(run, EpsRun):
            ts = np.linspace(run.t_start, run.t_end, n_samples)
            th = run.theta(ts)
            ps = run.psi(ts)
            sn = run.sigma_norm(ts)
            er = run.energy_residual(ts)
            for row in zip(ts, th, ps, sn, er):
                target.write(",".join(_fmt(x) for x in row) + "\n")
        elif isinstance(run, QuasistaticTrajectory):
            res = _quasistatic_residual_column(run)
            for (t, th, ps, sig), r in zip(run.samples, res):
                target.write(",".join(
                    (_fmt(t), _fmt(th), _fmt(ps), _fmt(sig.norm), _fmt(r))) + "\n")
            if run.jump is not None:
                target.write("jump_tau,theta_minus,theta_plus\n")
                target.write(",".join(_fmt(run.jump[k]) for k in
                                      ("tau", "theta_minus", "theta_plus")) + "\n")
        else:
            raise ValueError("invalid parameter: expected an EpsRun or a "
                             "QuasistaticTrajectory")
    finally:
        if close:
            target.close()


def _quasistatic_residual_column(traj: QuasistaticTrajectory) -> np.ndarray:
    """Cumulative balance defect at each sample row (trapezoid accuracy).

    Diagnostic only; `energy_audit_homogeneous` is the quadrature-grade
    version.  Zero through the elastic stretch, near zero along slow arcs,
    and stepping down by the fast-orbit excess at the jump.
    """
    mu, S = traj.mu, traj.xi0s_norm
    c = 2.0 * mu * S
    rows = traj.samples
    ts = np.array([r[0] for r in rows])
    th = np.array([r[1] for r in rows])
    ps = np.array([r[2] for r in rows])
    sn = np.array([r[3].norm for r in rows])
    q = sn ** 2 / (4.0 * mu)
    v = np.asarray(traj.V.value(th), dtype=float)
    # work rate <sigma, xi0> dt via trapezoid in t; H via increments of the
    # (S psi, theta) arc length, which also covers the jump chord exactly
    wrate = sn * S
    dwork = np.concatenate([[0.0], np.cumsum(
        0.5 * (wrate[1:] + wrate[:-1]) * np.diff(ts))])
    dh = np.concatenate([[0.0], np.cumsum(
        np.hypot(S * np.diff(ps), np.diff(th)))])
    raw = q + v + dh - q[0] - v[0] - dwork
    scale = 1.0 + np.abs(q) + np.abs(v) + dh + np.abs(dwork) + abs(q[0] + v[0])
    return raw / scale
