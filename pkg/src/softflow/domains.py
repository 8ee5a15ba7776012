"""Compact convex elastic domains in the (stress, internal-force) plane.

A domain K lives in deviatoric-stress x R. Planar domains work on scalar
pairs (alpha, zeta) and double as generators: `Radial` lifts a symmetric
planar domain to matrix arguments through the rotation-invariant rule
``(sigma, zeta) in K  iff  (|sigma|, zeta) in K_planar``.

Every domain provides the calculus the flow rule needs:

- ``support(dir)``: H(dir) = sup over K of the pairing
- ``project(x)``: Euclidean projection P_K x
- ``visco_flow(x, eps)``: (x - P_K x)/eps, the regularized normal cone map
- ``hepsilon_conjugate(x, eps)``: dist(x, K)^2 / (2 eps)
- ``subgradient_test(x, dir, tol)``: dir in the subdifferential of H... at x,
  checked as membership plus the Fenchel alignment identity
- ``gauge(x)``: continuous function negative inside K, positive outside
  (used as an event function; not a distance)

The vectorized ``*_xy`` kernels on planar domains take numpy arrays and are
what the time integrators call in hot loops.
"""

from dataclasses import dataclass

import numpy as np

from .tensors import DevMatrix, SymMatrix

#: relative membership tolerance: x counts as inside when
#: dist(x, K) <= MEMBERSHIP_TOL * (1 + |x|)
MEMBERSHIP_TOL = 1e-10


def _scal(s) -> float:
    if isinstance(s, SymMatrix):
        return s.scalar
    return float(s)


@dataclass(frozen=True)
class StressPoint:
    """A point (sigma, zeta); sigma is a scalar (planar) or a DevMatrix."""

    sigma: object
    zeta: float

    @property
    def sigma_norm(self) -> float:
        if isinstance(self.sigma, SymMatrix):
            return self.sigma.norm
        return abs(float(self.sigma))

    @property
    def norm(self) -> float:
        return float(np.hypot(self.sigma_norm, self.zeta))


@dataclass(frozen=True)
class FlowDirection:
    """A rate direction (xi, theta); xi is a scalar (planar) or a DevMatrix."""

    xi: object
    theta: float

    @property
    def xi_norm(self) -> float:
        if isinstance(self.xi, SymMatrix):
            return self.xi.norm
        return abs(float(self.xi))

    @property
    def norm(self) -> float:
        return float(np.hypot(self.xi_norm, self.theta))


class PlanarDomain:
    """Base for compact convex subsets of the (alpha, zeta) plane.

    Subclasses implement the array kernels ``support_xy``, ``project_xy`` and
    ``gauge_xy``; everything else is derived. Construction validates that the
    origin is strictly interior and that the zeta-section property holds:
    whenever (alpha, zeta) is in K, so is (0, zeta).
    """

    symmetric_in_alpha = False

    def _validate(self):
        if not self.inner_radius > 0.0:
            raise ValueError("invalid parameter: origin must be strictly interior")
        a_k, b_k = self.zeta_bounds()
        for z in (b_k, -a_k):
            if not self.contains(StressPoint(0.0, z)):
                raise ValueError(
                    "invalid parameter: the zeta section of the domain must "
                    "contain (0, zeta) for every attained zeta"
                )

    # --- array kernels (subclass responsibility) ---------------------------

    def support_xy(self, xi, theta):
        raise NotImplementedError

    def project_xy(self, alpha, zeta):
        raise NotImplementedError

    def gauge_xy(self, alpha, zeta):
        raise NotImplementedError

    def flow_xy(self, alpha, zeta, eps):
        """(x - P x)/eps on arrays; the regularized flow kernel."""
        if not eps > 0.0:
            raise ValueError("invalid parameter: eps must be positive")
        pa, pz = self.project_xy(alpha, zeta)
        return (np.asarray(alpha) - pa) / eps, (np.asarray(zeta) - pz) / eps

    # --- scalar object API -------------------------------------------------

    @property
    def inner_radius(self) -> float:
        raise NotImplementedError

    @property
    def outer_radius(self) -> float:
        raise NotImplementedError

    def zeta_bounds(self) -> tuple[float, float]:
        """(a_K, b_K) with the zeta-projection of K equal to [-a_K, b_K]."""
        return float(self.support_xy(0.0, -1.0)), float(self.support_xy(0.0, 1.0))

    def support(self, direction: FlowDirection) -> float:
        return float(self.support_xy(_scal(direction.xi), direction.theta))

    def project(self, x: StressPoint) -> StressPoint:
        pa, pz = self.project_xy(_scal(x.sigma), x.zeta)
        return StressPoint(float(pa), float(pz))

    def visco_flow(self, x: StressPoint, eps: float) -> FlowDirection:
        n1, n2 = self.flow_xy(_scal(x.sigma), x.zeta, eps)
        return FlowDirection(float(n1), float(n2))

    def hepsilon_conjugate(self, x: StressPoint, eps: float) -> float:
        """Conjugate of H + (eps/2)|.|^2, i.e. dist(x, K)^2 / (2 eps)."""
        if not eps > 0.0:
            raise ValueError("invalid parameter: eps must be positive")
        return self.distance(x) ** 2 / (2.0 * eps)

    def distance(self, x: StressPoint) -> float:
        p = self.project(x)
        return float(np.hypot(_scal(x.sigma) - _scal(p.sigma), x.zeta - p.zeta))

    def contains(self, x: StressPoint, tol: float | None = None) -> bool:
        if tol is None:
            tol = MEMBERSHIP_TOL
        return self.distance(x) <= tol * (1.0 + x.norm)

    def gauge(self, x: StressPoint) -> float:
        return float(self.gauge_xy(_scal(x.sigma), x.zeta))

    def subgradient_test(self, x: StressPoint, direction: FlowDirection,
                         tol: float = 1e-8) -> bool:
        """Is ``x`` a subgradient witness for ``direction``?

        True iff x is in K (within tol, relative) and the pairing attains the
        support value: |<x, dir> - H(dir)| <= tol (1 + H(dir)). With dir = 0
        this degenerates to the membership test.
        """
        if not self.contains(x, tol=tol):
            return False
        h = self.support(direction)
        pair = _pairing(x, direction)
        return abs(pair - h) <= tol * (1.0 + abs(h))


def _pairing(x: StressPoint, direction: FlowDirection) -> float:
    if isinstance(x.sigma, SymMatrix) or isinstance(direction.xi, SymMatrix):
        return x.sigma.dot(direction.xi) + x.zeta * direction.theta
    return _scal(x.sigma) * _scal(direction.xi) + x.zeta * direction.theta


class Ball(PlanarDomain):
    """Disk of given radius centred at the origin."""

    symmetric_in_alpha = True

    def __init__(self, radius: float):
        if not (radius > 0.0 and np.isfinite(radius)):
            raise ValueError("invalid parameter: radius must be positive")
        self.radius = float(radius)
        self._validate()

    def support_xy(self, xi, theta):
        return self.radius * np.hypot(xi, theta)

    def project_xy(self, alpha, zeta):
        alpha = np.asarray(alpha, dtype=float)
        zeta = np.asarray(zeta, dtype=float)
        # normalize by the max component first so the radial pullback stays
        # finite even when hypot(alpha, zeta) itself would overflow
        m = np.maximum(np.abs(alpha), np.abs(zeta))
        safe = np.where(m > 0.0, m, 1.0)
        ua, uz = alpha / safe, zeta / safe
        ru = np.hypot(ua, uz)
        # the unselected where-branch still evaluates 0/0 at the origin
        with np.errstate(over="ignore", invalid="ignore"):
            outside = m * ru > self.radius
            pa = np.where(outside, self.radius * ua / ru, alpha)
            pz = np.where(outside, self.radius * uz / ru, zeta)
        return pa, pz

    def gauge_xy(self, alpha, zeta):
        return np.hypot(alpha, zeta) - self.radius

    @property
    def inner_radius(self):
        return self.radius

    @property
    def outer_radius(self):
        return self.radius

    def __repr__(self):
        return f"Ball({self.radius!r})"


class Diamond(PlanarDomain):
    """The l1 ball {|alpha| + |zeta| <= c}."""

    symmetric_in_alpha = True

    def __init__(self, c: float):
        if not (c > 0.0 and np.isfinite(c)):
            raise ValueError("invalid parameter: c must be positive")
        self.c = float(c)
        self._validate()

    def support_xy(self, xi, theta):
        return self.c * np.maximum(np.abs(xi), np.abs(theta))

    def project_xy(self, alpha, zeta):
        alpha = np.asarray(alpha, dtype=float)
        zeta = np.asarray(zeta, dtype=float)
        u, v = np.abs(alpha), np.abs(zeta)
        outside = u + v > self.c
        # projection onto the first-quadrant face u + v = c, then clamp to
        # its endpoints; signs restored afterwards
        t = np.clip(0.5 * (u - v + self.c), 0.0, self.c)
        pu = np.where(outside, t, u)
        pv = np.where(outside, self.c - t, v)
        return np.copysign(pu, alpha), np.copysign(pv, zeta)

    def gauge_xy(self, alpha, zeta):
        return np.abs(alpha) + np.abs(zeta) - self.c

    @property
    def inner_radius(self):
        return self.c / np.sqrt(2.0)

    @property
    def outer_radius(self):
        return self.c

    def __repr__(self):
        return f"Diamond({self.c!r})"


class Polygon(PlanarDomain):
    """Convex polygon given by its vertices in counterclockwise order.

    Vertices must be strictly convex (no three collinear) and enclose the
    origin. Projection ties on the boundary resolve to the lowest edge index.
    """

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("invalid parameter: need at least 3 planar vertices")
        if not np.all(np.isfinite(v)):
            raise ValueError("invalid parameter: vertices must be finite")
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if np.any(cross <= 0.0):
            raise ValueError(
                "invalid parameter: vertices must be strictly convex and "
                "counterclockwise"
            )
        self.vertices = v
        self._edges = e
        n = np.stack([e[:, 1], -e[:, 0]], axis=1)  # outward for CCW
        n /= np.linalg.norm(n, axis=1)[:, None]
        self._normals = n
        self._offsets = np.einsum("ij,ij->i", n, v)
        self._validate()

    def support_xy(self, xi, theta):
        xi = np.asarray(xi, dtype=float)
        theta = np.asarray(theta, dtype=float)
        vals = (np.multiply.outer(xi, self.vertices[:, 0])
                + np.multiply.outer(theta, self.vertices[:, 1]))
        return vals.max(axis=-1)

    def gauge_xy(self, alpha, zeta):
        alpha = np.asarray(alpha, dtype=float)
        zeta = np.asarray(zeta, dtype=float)
        vals = (np.multiply.outer(alpha, self._normals[:, 0])
                + np.multiply.outer(zeta, self._normals[:, 1]) - self._offsets)
        return vals.max(axis=-1)

    def project_xy(self, alpha, zeta):
        scalar_input = np.ndim(alpha) == 0 and np.ndim(zeta) == 0
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
        shape = np.broadcast(alpha, zeta).shape
        a = np.broadcast_to(alpha, shape).ravel()
        z = np.broadcast_to(zeta, shape).ravel()
        pts = np.stack([a, z], axis=1)  # (N, 2)

        v0 = self.vertices  # (m, 2)
        e = self._edges
        ee = np.einsum("ij,ij->i", e, e)
        # segment parameter of the foot point, clamped to the edge
        t = (np.einsum("nk,mk->nm", pts, e) - np.einsum("mk,mk->m", v0, e)) / ee
        t = np.clip(t, 0.0, 1.0)
        cand = v0[None, :, :] + t[:, :, None] * e[None, :, :]
        d2 = ((pts[:, None, :] - cand) ** 2).sum(axis=2)
        best = d2.argmin(axis=1)  # first minimum: lowest edge index on ties
        proj = cand[np.arange(len(a)), best]

        inside = self.gauge_xy(a, z) <= 0.0
        out_a = np.where(inside, a, proj[:, 0]).reshape(shape)
        out_z = np.where(inside, z, proj[:, 1]).reshape(shape)
        if scalar_input:
            return out_a.item(0), out_z.item(0)
        return out_a, out_z

    @property
    def inner_radius(self):
        return float(self._offsets.min())

    @property
    def outer_radius(self):
        return float(np.linalg.norm(self.vertices, axis=1).max())

    def __repr__(self):
        return f"Polygon({self.vertices.tolist()!r})"


class Radial:
    """Rotation-invariant lift of a symmetric planar domain to matrices.

    ``(sigma, zeta) in K  iff  (|sigma|, zeta) in generator``. The generator
    must be symmetric under alpha -> -alpha, otherwise the lifted set is not
    convex.
    """

    def __init__(self, generator: PlanarDomain):
        if not isinstance(generator, PlanarDomain):
            raise ValueError("invalid parameter: generator must be planar")
        if not generator.symmetric_in_alpha:
            # dense check for polygons and other custom generators
            th = np.linspace(0.0, 2 * np.pi, 181)
            h1 = generator.support_xy(np.cos(th), np.sin(th))
            h2 = generator.support_xy(-np.cos(th), np.sin(th))
            if not np.allclose(h1, h2, rtol=0.0, atol=1e-12 * (1 + np.max(np.abs(h1)))):
                raise ValueError(
                    "invalid parameter: radial lift needs a generator symmetric "
                    "in its first argument"
                )
        self.generator = generator

    @property
    def inner_radius(self):
        return self.generator.inner_radius

    @property
    def outer_radius(self):
        return self.generator.outer_radius

    def zeta_bounds(self):
        return self.generator.zeta_bounds()

    def support(self, direction: FlowDirection) -> float:
        return float(self.generator.support_xy(direction.xi_norm, direction.theta))

    def project(self, x: StressPoint) -> StressPoint:
        n = x.sigma_norm
        pn, pz = self.generator.project_xy(n, x.zeta)
        pn, pz = float(pn), float(pz)
        if n > 0.0:
            sig = DevMatrix(x.sigma.a * (pn / n))
        else:
            sig = DevMatrix(np.zeros_like(x.sigma.a))
        return StressPoint(sig, pz)

    def visco_flow(self, x: StressPoint, eps: float) -> FlowDirection:
        if not eps > 0.0:
            raise ValueError("invalid parameter: eps must be positive")
        p = self.project(x)
        xi = DevMatrix((x.sigma.a - p.sigma.a) / eps)
        return FlowDirection(xi, (x.zeta - p.zeta) / eps)

    def distance(self, x: StressPoint) -> float:
        p = self.project(x)
        return float(np.hypot(np.linalg.norm(x.sigma.a - p.sigma.a), x.zeta - p.zeta))

    def hepsilon_conjugate(self, x: StressPoint, eps: float) -> float:
        if not eps > 0.0:
            raise ValueError("invalid parameter: eps must be positive")
        return self.distance(x) ** 2 / (2.0 * eps)

    def contains(self, x: StressPoint, tol: float | None = None) -> bool:
        if tol is None:
            tol = MEMBERSHIP_TOL
        return self.distance(x) <= tol * (1.0 + x.norm)

    def gauge(self, x: StressPoint) -> float:
        return float(self.generator.gauge_xy(x.sigma_norm, x.zeta))

    def subgradient_test(self, x: StressPoint, direction: FlowDirection,
                         tol: float = 1e-8) -> bool:
        if not self.contains(x, tol=tol):
            return False
        h = self.support(direction)
        pair = _pairing(x, direction)
        return abs(pair - h) <= tol * (1.0 + abs(h))

    def __repr__(self):
        return f"Radial({self.generator!r})"


#: Remark-style hexagonal domain used by the stress-path scenario
HEXAGON_VERTICES = (
    (1.5, 0.5),
    (0.0, 2.0),
    (-1.25, 0.75),
    (-1.5, -0.5),
    (0.0, -2.0),
    (1.25, -0.75),
)


def hexagon_domain() -> Polygon:
    """The built-in asymmetric hexagon {|a+z| <= 2, |a-z| <= 2, |5a-z| <= 7}."""
    return Polygon(HEXAGON_VERTICES)
