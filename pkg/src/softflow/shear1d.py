"""Reduced antiplane problem on the unit slab [-1/2, 1/2].

One scalar elastic strain drives a field of internal variables: the stress is
spatially constant, so the state is (e, z(y), p(y)) with

    e' = phi'(t) - int N1(sigma, -V'(z(y))) dy,
    z'(y) = N2(sigma, -V'(z(y))),      p'(y) = N1(sigma, -V'(z(y))),

sigma = 2 mu e, for a transverse boundary profile w(t, y) = phi(t) y.  The
module also carries the limit diagnostics for the two concentration
scenarios: activation radius and plastic mass, atomic Young-measure
extraction, the measure calculus (barycentre, V-action, dissipation), the
energy books of both the barycentre and the measure formulation, and the
lift back to a d-dimensional simple shear.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .domains import Diamond, PlanarDomain, Radial
from .homogeneous import LoadingProgram, StiffnessFailure
from .softening import SofteningPotential, validate_against_domain
from .tensors import shear_embed

REDUCED_CSV_HEADER = "t,e"
FIELD_CSV_HEADER = "y,p,z"


# --------------------------------------------------------------------------
# grid
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid1D:
    """Uniform midpoint grid on [-1/2, 1/2], symmetric about 0.

    Two styles resolve the conflict between a Dirac at 0 and an odd field:
    ``centered`` refines n to n + 1 cells so y = 0 is a cell center (the
    concentrating cell exists), ``split`` keeps n cells so y = 0 is a cell
    boundary (no node carries the ambiguous sign).
    """

    n: int
    style: str
    nodes: np.ndarray = field(repr=False)
    h: float

    @staticmethod
    def _build(n: int, style: str, cells: int) -> "Grid1D":
        if n <= 0 or n % 2:
            raise ValueError("invalid parameter: n must be even and positive")
        h = 1.0 / cells
        nodes = -0.5 + (np.arange(cells) + 0.5) * h
        return Grid1D(n=n, style=style, nodes=nodes, h=h)

    @classmethod
    def centered(cls, n: int) -> "Grid1D":
        return cls._build(n, "centered", n + 1)

    @classmethod
    def split(cls, n: int) -> "Grid1D":
        return cls._build(n, "split", n)

    def integrate(self, values) -> float:
        return float(np.sum(values) * self.h)


# --------------------------------------------------------------------------
# regularized reduced runs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ReducedState:
    t: float
    e: float
    p: np.ndarray
    z: np.ndarray


@dataclass(frozen=True)
class ReducedTrajectory:
    """Sampled solution of one reduced run.

    Fields are stored on a fixed sample grid; evaluation between samples
    interpolates linearly (the sampling is dense relative to the dynamics).
    """

    K: PlanarDomain
    V: SofteningPotential
    boundary: LoadingProgram
    grid: Grid1D
    z0: np.ndarray
    eps: float
    mu: float
    tol: float
    t_end: float
    t_yield: float | None
    ts: np.ndarray
    es: np.ndarray
    zs: np.ndarray      # (len(ts), nodes)
    ps: np.ndarray

    def _check(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if np.any(ts < -1e-9) or np.any(ts > self.t_end + 1e-9):
            raise ValueError("domain error: sample time outside the run window")
        return ts

    def e(self, ts):
        return np.interp(self._check(ts), self.ts, self.es)

    def sigma(self, ts):
        return 2.0 * self.mu * self.e(ts)

    def _field(self, stack: np.ndarray, t: float) -> np.ndarray:
        t = float(self._check(t)[0])
        i = int(np.searchsorted(self.ts, t))
        if i == 0:
            return stack[0].copy()
        if i >= len(self.ts):
            return stack[-1].copy()
        a, b = self.ts[i - 1], self.ts[i]
        lam = 0.0 if b == a else (t - a) / (b - a)
        return (1.0 - lam) * stack[i - 1] + lam * stack[i]

    def z(self, t) -> np.ndarray:
        return self._field(self.zs, t)

    def p(self, t) -> np.ndarray:
        return self._field(self.ps, t)

    def states(self, ts) -> list[ReducedState]:
        return [ReducedState(t=float(t), e=float(self.e(t)[0]),
                             p=self.p(t), z=self.z(t))
                for t in np.atleast_1d(ts)]

    def mass(self, ts):
        ts = self._check(ts)
        return np.array([self.grid.integrate(self.p(t)) for t in ts])

    def kinematic_residual(self, ts):
        """|e + int p dy - phi(t)|, the discrete slab compatibility."""
        ts = self._check(ts)
        amp = float(self.boundary.xi0)
        span = amp * np.asarray(self.boundary.profile(ts), dtype=float)
        return np.abs(self.e(ts) + self.mass(ts) - span)

    def h_dissipation(self, T: float) -> float:
        """Rate-independent dissipation on [0, T] from sample increments.

        Exact up to integrator error whenever each node's rates keep one
        sign, because the support function is additive along such paths.
        """
        T = float(self._check(T)[0])
        upto = self.ts <= T + 1e-15
        ps = np.vstack([self.ps[upto], self.p(T)[None, :]])
        zs = np.vstack([self.zs[upto], self.z(T)[None, :]])
        dens = np.asarray(self.K.support_xy(np.diff(ps, axis=0),
                                            np.diff(zs, axis=0)), dtype=float)
        return float(np.sum(dens) * self.grid.h)


def integrate_reduced(K_R, V: SofteningPotential, boundary: LoadingProgram,
                      z0, eps: float, t_end: float, grid: Grid1D,
                      tol: float = 1e-9, mu: float = 0.5,
                      n_samples: int = 601) -> ReducedTrajectory:
    """Integrate the reduced slab with adaptive error control.

    ``boundary`` supplies the transverse profile phi with w(t, y) = phi(t) y;
    ``z0`` is an array on the grid or a callable evaluated at its nodes.  The
    elastic stretch before first boundary contact is written in closed form
    (e = phi exactly, z frozen), then the stiff phase runs under the shared
    step policy (error tolerance tol, step cap eps / 4).
    """
    if isinstance(K_R, Radial):
        raise ValueError(
            "invalid domain: the reduced problem uses a planar domain directly")
    if not eps > 0.0:
        raise ValueError("invalid parameter: eps must be positive")
    if not tol > 0.0:
        raise ValueError("invalid parameter: tol must be positive")
    if not t_end > 0.0:
        raise ValueError("invalid parameter: t_end must be positive")
    if getattr(boundary, "d", None) != 1:
        raise ValueError(
            "invalid loading: the reduced problem takes a scalar transverse "
            "profile")
    compat = validate_against_domain(V, K_R)
    if not compat.ok:
        raise ValueError(f"incompatible potential and domain: {compat.failed}")
    z0 = np.asarray(z0(grid.nodes) if callable(z0) else z0, dtype=float)
    if z0.shape != grid.nodes.shape or not np.all(np.isfinite(z0)):
        raise ValueError("invalid initial state: z0 must be finite and match "
                         "the grid")

    zeta0 = -np.asarray(V.slope(z0), dtype=float)
    amp = float(boundary.xi0)
    phi0 = amp * float(boundary.profile(0.0))

    def gauge_margin(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        sig = 2.0 * mu * (amp * np.asarray(boundary.profile(t), dtype=float)
                          - phi0)
        out = np.empty(t.size)
        for a in range(0, t.size, 512):
            b = min(a + 512, t.size)
            g = K_R.gauge_xy(sig[a:b, None], zeta0[None, :])
            out[a:b] = np.max(g, axis=1)
        return out

    scan = np.unique(np.concatenate([
        np.linspace(0.0, t_end, 4097), np.asarray(boundary.kink_times(0.0, t_end))]))
    margins = gauge_margin(scan)
    t_yield = None
    if margins[0] >= 0.0:
        t_yield = 0.0
    else:
        hit = np.nonzero(margins >= 0.0)[0]
        if hit.size:
            i = int(hit[0])
            t_yield = float(brentq(lambda t: float(gauge_margin(t)[0]),
                                   scan[i - 1], scan[i], xtol=1e-14))

    n = z0.size
    samples = np.linspace(0.0, t_end, n_samples)
    if t_yield is not None:
        samples = np.unique(np.concatenate(
            [samples, [t_yield], np.asarray(boundary.kink_times(t_yield, t_end))]))

    es = np.empty(len(samples))
    zs = np.empty((len(samples), n))
    ps = np.zeros((len(samples), n))
    dormant = samples <= (t_end if t_yield is None else t_yield)
    es[dormant] = amp * np.asarray(boundary.profile(samples[dormant]),
                                   dtype=float) - phi0
    zs[dormant] = z0

    proto = dict(K=K_R, V=V, boundary=boundary, grid=grid, z0=z0, eps=eps,
                 mu=mu, tol=tol, t_end=t_end, t_yield=t_yield)
    if t_yield is None:
        return ReducedTrajectory(ts=samples, es=es, zs=zs, ps=ps, **proto)

    def rhs(t, y):
        sig = np.full(n, 2.0 * mu * y[0])
        zeta = -np.asarray(V.slope(y[1:1 + n]), dtype=float)
        f_a, f_z = K_R.flow_xy(sig, zeta, eps)
        out = np.empty(2 * n + 1)
        out[0] = amp * float(boundary.rate(t)) - grid.integrate(f_a)
        out[1:1 + n] = f_z
        out[1 + n:] = f_a
        return out

    y = np.concatenate([[amp * float(boundary.profile(t_yield)) - phi0], z0,
                        np.zeros(n)])
    span = max(abs(es[dormant]).max() if np.any(dormant) else 1.0,
               float(np.max(np.abs(z0))), 1.0)
    breakpoints = np.unique(np.concatenate(
        [[t_yield], np.asarray(boundary.kink_times(t_yield, t_end)), [t_end]]))
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        keep = (samples > a + 1e-15) & (samples <= b)
        sol = solve_ivp(rhs, (a, b), y, method="RK45", rtol=tol,
                        atol=tol * span, max_step=eps / 4.0,
                        t_eval=np.unique(np.concatenate([samples[keep], [b]])))
        if not sol.success:
            raise StiffnessFailure(
                f"step size underflow near t = {sol.t[-1]:.6g}: widen eps or "
                "loosen tol")
        if np.any(keep):
            m = np.count_nonzero(keep)
            es[keep] = sol.y[0, :m]
            zs[keep] = sol.y[1:1 + n, :m].T
            ps[keep] = sol.y[1 + n:, :m].T
        y = sol.y[:, -1]
    return ReducedTrajectory(ts=samples, es=es, zs=zs, ps=ps, **proto)


# --------------------------------------------------------------------------
# scenario diagnostics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LocalizationReport:
    ts: np.ndarray
    a_eps: np.ndarray
    mass: np.ndarray
    e_sup_dev: float        # sup over samples of |e(t) - t /\ 1|
    a_monotone: bool
    tol_act: float
    t_yield: float | None


def localization_diagnostics(trajectory: ReducedTrajectory, z0,
                             eps: float) -> LocalizationReport:
    """Activation radius, elastic-strain deviation and plastic mass.

    The activation radius a(t) is the largest |node| where z has left its
    initial value by more than an absolute margin scaled to |z0|; it is
    nondecreasing because every node's z is monotone in this scenario.
    """
    z0 = np.asarray(z0(trajectory.grid.nodes) if callable(z0) else z0,
                    dtype=float)
    tol_act = 1e-8 * (1.0 + float(np.max(np.abs(z0))))
    ts = trajectory.ts
    ay = np.abs(trajectory.grid.nodes)
    a_eps = np.empty(len(ts))
    for i, _ in enumerate(ts):
        active = trajectory.zs[i] > z0 + tol_act
        a_eps[i] = float(ay[active].max()) if np.any(active) else 0.0
    mass = np.array([trajectory.grid.integrate(row) for row in trajectory.ps])
    dev = np.max(np.abs(trajectory.es - np.minimum(ts, 1.0)))
    return LocalizationReport(
        ts=ts, a_eps=a_eps, mass=mass, e_sup_dev=float(dev),
        a_monotone=bool(np.all(np.diff(a_eps) >= 0.0)), tol_act=tol_act,
        t_yield=trajectory.t_yield)


@dataclass(frozen=True)
class SymmetryReport:
    e_dev: float            # max |e - e_mirror|
    p_mirror_dev: float     # max |p - p_mirror|
    p_even_dev: float       # max |p(y) - p(-y)| for the mirrored run
    z_odd_dev: float        # max |z - sign(y) z_mirror|
    n_samples: int


def oscillation_symmetry_check(trajectory: ReducedTrajectory,
                               mirrored: ReducedTrajectory) -> SymmetryReport:
    """Compare an odd-data run against its even-reflection companion.

    The discretized slab commutes with the reflection, so the identities
    (equal elastic strains, even and shared plastic field, odd internal
    field) hold up to integrator noise.
    """
    if trajectory.ts.shape != mirrored.ts.shape or \
            np.max(np.abs(trajectory.ts - mirrored.ts)) > 1e-12:
        raise ValueError("invalid parameter: the two runs must share the "
                         "sample grid")
    nodes = trajectory.grid.nodes
    sgn = np.sign(nodes)
    # z_bar evaluated at |y|: reflect the rows on the negative half
    zbar_abs = np.where(nodes[None, :] > 0.0, mirrored.zs,
                        mirrored.zs[:, ::-1])
    e_dev = float(np.max(np.abs(trajectory.es - mirrored.es)))
    p_dev = float(np.max(np.abs(trajectory.ps - mirrored.ps)))
    p_even = float(np.max(np.abs(mirrored.ps - mirrored.ps[:, ::-1])))
    z_dev = float(np.max(np.abs(trajectory.zs - sgn[None, :] * zbar_abs)))
    return SymmetryReport(e_dev=e_dev, p_mirror_dev=p_dev, p_even_dev=p_even,
                          z_odd_dev=z_dev, n_samples=len(trajectory.ts))


# --------------------------------------------------------------------------
# measures
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GridMeasure:
    """Absolutely continuous density on a grid plus point atoms."""

    grid: Grid1D
    density: np.ndarray
    atoms: tuple = ()

    def __post_init__(self):
        d = np.asarray(self.density, dtype=float)
        if d.shape != self.grid.nodes.shape:
            raise ValueError("invalid measure: density must live on the grid")
        object.__setattr__(self, "density", d)
        object.__setattr__(self, "atoms",
                           tuple((float(a), float(m)) for a, m in self.atoms))

    @property
    def total_variation(self) -> float:
        return self.grid.integrate(np.abs(self.density)) + \
            sum(abs(m) for _, m in self.atoms)

    def mass(self) -> float:
        return self.grid.integrate(self.density) + \
            sum(m for _, m in self.atoms)

    def atom_map(self) -> dict:
        out: dict = {}
        for a, m in self.atoms:
            key = round(a, 9)
            out[key] = out.get(key, 0.0) + m
        return out


@dataclass(frozen=True)
class AtomicYoungMeasure:
    """Finite convex combination of (p, z) measure pairs."""

    atoms: tuple   # of (weight, GridMeasure, GridMeasure)

    def __post_init__(self):
        atoms = tuple(self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if not atoms:
            raise ValueError("invalid measure: needs at least one atom")
        ws = [w for w, _, _ in atoms]
        if min(ws) <= 0.0 or abs(sum(ws) - 1.0) > 1e-9:
            raise ValueError(
                "invalid measure: weights must be positive and sum to 1")


def young_barycentre(mu: AtomicYoungMeasure) -> tuple[GridMeasure, GridMeasure]:
    """Weighted componentwise sum; opposite atoms at one location cancel."""
    out = []
    for comp in (1, 2):
        grid = mu.atoms[0][comp].grid
        dens = np.zeros_like(mu.atoms[0][comp].density)
        atom_acc: dict = {}
        for entry in mu.atoms:
            w, gm = entry[0], entry[comp]
            dens = dens + w * gm.density
            for key, m in gm.atom_map().items():
                atom_acc[key] = atom_acc.get(key, 0.0) + w * m
        atoms = tuple((a, m) for a, m in sorted(atom_acc.items())
                      if abs(m) > 1e-14)
        out.append(GridMeasure(grid=grid, density=dens, atoms=atoms))
    return out[0], out[1]


def young_V_action(mu: AtomicYoungMeasure, V: SofteningPotential) -> float:
    """Sum of w_j [ int V(density) dy + sum_atoms V_inf(mass) ].

    Dirac atoms enter through the recession slope (positively 1-homogeneous),
    the diffuse part through V itself.
    """
    total = 0.0
    for w, _, zm in mu.atoms:
        part = zm.grid.integrate(np.asarray(V.value(zm.density), dtype=float))
        part += sum(float(V.recession(m)) for _, m in zm.atoms)
        total += w * part
    return float(total)


def _pair_support(K: PlanarDomain, dp: GridMeasure, dz: GridMeasure) -> float:
    # H of a measure pair: density part by quadrature, atoms by the
    # 1-homogeneous support evaluated on matched point masses
    val = dp.grid.integrate(np.asarray(
        K.support_xy(dp.density, dz.density), dtype=float))
    pa, za = dp.atom_map(), dz.atom_map()
    for key in sorted(set(pa) | set(za)):
        val += float(K.support_xy(pa.get(key, 0.0), za.get(key, 0.0)))
    return val


def _measure_delta(a: GridMeasure, b: GridMeasure) -> GridMeasure:
    am, bm = a.atom_map(), b.atom_map()
    atoms = tuple((key, bm.get(key, 0.0) - am.get(key, 0.0))
                  for key in sorted(set(am) | set(bm)))
    return GridMeasure(grid=a.grid, density=b.density - a.density, atoms=atoms)


def young_dissipation(mus, correlation=None, K: PlanarDomain | None = None) -> float:
    """Dissipation of a time-indexed family of atomic measures.

    ``correlation`` lists, per interval, (previous index, next index, mass)
    triples realizing the two-time joint measure; its marginals must match
    the atom weights on both sides.  None means the identity coupling, which
    requires equal atom counts and weights.  K defaults to the antiplane
    diamond.
    """
    mus = list(mus)
    if len(mus) < 2:
        return 0.0
    if K is None:
        K = Diamond(2.0)
    if correlation is not None and len(correlation) != len(mus) - 1:
        raise ValueError("invalid correlation: one coupling per interval")
    total = 0.0
    for i in range(1, len(mus)):
        prev, cur = mus[i - 1], mus[i]
        if correlation is None:
            if len(prev.atoms) != len(cur.atoms):
                raise ValueError(
                    "invalid correlation: mismatched atom counts need an "
                    "explicit matching")
            triples = [(j, j, cur.atoms[j][0]) for j in range(len(cur.atoms))]
        else:
            triples = [(int(a), int(b), float(w))
                       for a, b, w in correlation[i - 1]]
        send = np.zeros(len(prev.atoms))
        recv = np.zeros(len(cur.atoms))
        for ja, jb, w in triples:
            _, pa, za = prev.atoms[ja]
            _, pb, zb = cur.atoms[jb]
            send[ja] += w
            recv[jb] += w
            total += w * _pair_support(K, _measure_delta(pa, pb),
                                       _measure_delta(za, zb))
        if np.max(np.abs(send - [a[0] for a in prev.atoms])) > 1e-6 or \
                np.max(np.abs(recv - [a[0] for a in cur.atoms])) > 1e-6:
            raise ValueError(
                "invalid correlation: marginals must match the atom weights")
    return float(total)


# --------------------------------------------------------------------------
# limit extraction
# --------------------------------------------------------------------------


class ExtractionInconclusive(RuntimeError):
    """Raised when the mass sequence does not settle across the eps family."""

    def __init__(self, message, masses):
        super().__init__(message)
        self.masses = tuple(masses)


def _fit_limit(masses: np.ndarray) -> float:
    # Richardson step from the last three entries when the decrements shrink
    # geometrically with one sign; otherwise the finest value stands
    d1, d2 = masses[-2] - masses[-3], masses[-1] - masses[-2]
    if d1 * d2 > 0.0 and abs(d2) < abs(d1):
        q = abs(d1) / abs(d2)
        return float(masses[-1] + d2 / (q - 1.0))
    return float(masses[-1])


def extract_limit_measure(family, t: float,
                          atom_floor: float = 1e-6) -> AtomicYoungMeasure:
    """Fit the atomic limit measure at time t from an eps family of runs.

    Needs at least three runs at strictly decreasing eps on one grid.  The
    total plastic mass is extrapolated across the family; the point part is
    localized in the three cells around the p-density argmax of the finest
    run, and the sign split of z - z0 there decides between one atom and a
    symmetric pair.
    """
    family = list(family)
    if len(family) < 3:
        raise ValueError("invalid parameter: need at least three eps values")
    epss = [run.eps for run in family]
    if not all(a > b for a, b in zip(epss, epss[1:])):
        raise ValueError("invalid parameter: eps values must be strictly "
                         "decreasing")
    grid = family[0].grid
    masses = np.array([run.grid.integrate(run.p(t)) for run in family])
    d1, d2 = masses[-2] - masses[-3], masses[-1] - masses[-2]
    scale = max(float(np.max(np.abs(masses))), atom_floor)
    flips = d1 * d2 < 0.0 and min(abs(d1), abs(d2)) > 0.1 * scale
    grows = abs(d2) > abs(d1) and abs(d2) > 0.1 * scale
    if flips or grows:
        raise ExtractionInconclusive(
            "mass sequence oscillates across the eps family", masses)

    fine = family[-1]
    p = fine.p(t)
    z = fine.z(t)
    z0 = fine.z0
    m_fit = _fit_limit(masses)
    zero = np.zeros_like(p)

    if m_fit < atom_floor:
        return AtomicYoungMeasure(atoms=(
            (1.0, GridMeasure(grid=grid, density=zero),
             GridMeasure(grid=grid, density=z0.copy())),))

    # the plastic peak and its two neighbours locate the atom; the signed
    # split of (z - z0) over the whole active region decides its structure
    # (the pre-limit spread is too wide for a local split to see the halves)
    k = int(np.argmax(p))
    window = np.arange(max(k - 1, 0), min(k + 2, p.size))
    wp = p[window]
    loc = float(np.sum(grid.nodes[window] * wp) / np.sum(wp)) \
        if np.sum(wp) > 0.0 else float(grid.nodes[k])
    loc = 0.0 if abs(loc) < grid.h else loc

    p_meas = GridMeasure(grid=grid, density=zero, atoms=((loc, m_fit),))
    dz = (z - z0) * p
    pos = float(np.sum(dz[dz > 0.0]))
    neg = float(-np.sum(dz[dz < 0.0]))
    if min(pos, neg) > 0.1 * max(pos, neg):
        w_plus = pos / (pos + neg)
        z_plus = GridMeasure(grid=grid, density=z0.copy(),
                             atoms=((loc, m_fit),))
        z_minus = GridMeasure(grid=grid, density=z0.copy(),
                              atoms=((loc, -m_fit),))
        return AtomicYoungMeasure(atoms=((w_plus, p_meas, z_plus),
                                         (1.0 - w_plus, p_meas, z_minus)))
    sign = 1.0 if pos >= neg else -1.0
    z_meas = GridMeasure(grid=grid, density=z0.copy(),
                         atoms=((loc, sign * m_fit),))
    return AtomicYoungMeasure(atoms=((1.0, p_meas, z_meas),))


# --------------------------------------------------------------------------
# energy books of the limit
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GapReport:
    T: float
    t_star: float
    stored: float
    work: float
    bar_dissipation: float
    bar_lhs: float
    bar_rhs: float
    bar_gap: float
    expected_gap: float
    meas_dissipation: float
    meas_V_T: float
    meas_lhs: float
    meas_rhs: float
    meas_residual: float
    e_T_dev: float
    fitted_mass: float


def energy_gap_report(family, V: SofteningPotential, T: float) -> GapReport:
    """Both energy books of the extracted limit at horizon T.

    Built from the measure fitted across an eps family under a monotone
    ramp.  The measure route pays dissipation and recession on every branch
    and balances; the barycentre route collapses a symmetric pair first,
    loses the recession term, and its inequality is violated by the band
    opening.  When the fit gives a single atom the two routes coincide and
    both books balance.
    """
    family = list(family)
    mu_T = extract_limit_measure(family, T)
    base = family[-1]
    grid, z0, mu = base.grid, base.z0, base.mu
    amp = float(base.boundary.xi0)

    def phi(t):
        return amp * float(base.boundary.profile(t))

    t_star = base.t_yield if base.t_yield is not None else T
    t_star = min(float(t_star), float(T))
    phi_star, phi_T = phi(t_star), phi(T)
    e_lim = phi_star
    stored = mu * e_lim * e_lim
    work = mu * phi_star ** 2 + 2.0 * mu * e_lim * (phi_T - phi_star)
    cal_v0 = grid.integrate(np.asarray(V.value(z0), dtype=float))

    zero = GridMeasure(grid=grid, density=np.zeros_like(z0))
    mu_0 = AtomicYoungMeasure(atoms=(
        (1.0, zero, GridMeasure(grid=grid, density=z0.copy())),))
    corr = [[(0, j, mu_T.atoms[j][0]) for j in range(len(mu_T.atoms))]]
    meas_d = young_dissipation([mu_0, mu_T], correlation=corr, K=base.K)
    meas_v = young_V_action(mu_T, V)
    meas_lhs = stored + meas_d + meas_v
    meas_rhs = cal_v0 + work

    bar_p0, bar_z0 = young_barycentre(mu_0)
    bar_pT, bar_zT = young_barycentre(mu_T)
    bar_d = _pair_support(base.K, _measure_delta(bar_p0, bar_pT),
                          _measure_delta(bar_z0, bar_zT))
    bar_vT = grid.integrate(np.asarray(V.value(bar_zT.density), dtype=float)) \
        + sum(float(V.recession(mm)) for _, mm in bar_zT.atoms)
    bar_lhs = stored + bar_d + bar_vT

    mass_fit = sum(m for _, m in mu_T.atoms[0][1].atoms)
    expected = phi_T - phi_star if len(mu_T.atoms) == 2 else 0.0

    return GapReport(
        T=float(T), t_star=float(t_star), stored=float(stored),
        work=float(work), bar_dissipation=float(bar_d),
        bar_lhs=float(bar_lhs), bar_rhs=float(meas_rhs),
        bar_gap=float(bar_lhs - meas_rhs), expected_gap=float(expected),
        meas_dissipation=float(meas_d), meas_V_T=float(meas_v),
        meas_lhs=float(meas_lhs), meas_rhs=float(meas_rhs),
        meas_residual=float(meas_lhs - meas_rhs),
        e_T_dev=float(abs(base.e(T)[0] - e_lim)),
        fitted_mass=float(mass_fit))


# --------------------------------------------------------------------------
# lift to simple shear
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LiftedShear:
    """d-dimensional simple-shear fields built from a reduced run.

    The scalar amounts map through the isometric embedding that puts a pure
    shear of amount a at off-diagonal entries a / sqrt(2); displacements
    point along the second basis vector with transverse profile sqrt(2) u(y).
    """

    run: ReducedTrajectory
    d: int

    def e_matrix(self, t):
        return shear_embed(float(self.run.e(t)[0]), self.d)

    def p_matrix(self, t) -> list:
        return [shear_embed(float(v), self.d) for v in self.run.p(t)]

    def z(self, t) -> np.ndarray:
        return self.run.z(t)

    def u_profile(self, t) -> np.ndarray:
        """sqrt(2)-scaled transverse displacement at the grid nodes."""
        run = self.run
        e = float(run.e(t)[0])
        p = run.p(t)
        base = -0.5 * float(run.boundary.xi0) * float(run.boundary.profile(t))
        bulk = e * (run.grid.nodes + 0.5)
        plastic = run.grid.h * (np.cumsum(p) - 0.5 * p)
        return np.sqrt(2.0) * (base + bulk + plastic)


def lift_to_shear(run: ReducedTrajectory, d: int) -> LiftedShear:
    if int(d) < 2:
        raise ValueError("invalid parameter: the lift targets dimension >= 2")
    if not getattr(run.K, "symmetric_in_alpha", False):
        raise ValueError(
            "unsupported domain: the shear lift needs a generator symmetric "
            "in the stress component")
    return LiftedShear(run=run, d=int(d))


# --------------------------------------------------------------------------
# CSV output
# --------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _with_target(target, body) -> None:
    close = False
    if not hasattr(target, "write"):
        target = open(target, "w", newline="")
        close = True
    try:
        body(target)
    finally:
        if close:
            target.close()


def write_reduced_csv(run: ReducedTrajectory, target) -> None:
    """The elastic-strain series at the stored sample times."""
    def body(f):
        f.write(REDUCED_CSV_HEADER + "\n")
        for t, e in zip(run.ts, run.es):
            f.write(_fmt(t) + "," + _fmt(e) + "\n")
    _with_target(target, body)


def write_field_csv(run: ReducedTrajectory, t: float, target) -> None:
    """One field snapshot: node, plastic and internal values."""
    p, z = run.p(t), run.z(t)

    def body(f):
        f.write(FIELD_CSV_HEADER + "\n")
        for row in zip(run.grid.nodes, p, z):
            f.write(",".join(_fmt(x) for x in row) + "\n")
    _with_target(target, body)


def write_diagnostics(report, target) -> None:
    """Flat key=value dump of any report dataclass (arrays as last values)."""
    def body(f):
        for key, val in vars(report).items():
            if isinstance(val, np.ndarray):
                f.write(f"{key}_final={_fmt(val[-1])}\n")
            elif isinstance(val, (bool, int)):
                f.write(f"{key}={val}\n")
            elif val is None:
                f.write(f"{key}=\n")
            else:
                f.write(f"{key}={_fmt(val)}\n")
    _with_target(target, body)
