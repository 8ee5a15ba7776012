"""Symmetric matrix algebra, deviators, and isotropic elasticity.

Dimension convention: d in {1, 2, 3}. For d >= 2 a deviator is a symmetric
trace-free matrix and ``xi = dev(xi) + (tr xi / d) I`` is an orthogonal
decomposition. For d = 1 the deviatoric space is declared to be all of R and
the deviator map is the identity: no trace is removed, the reconstruction
identity does NOT hold, and the elastic law collapses to ``C xi = 2 mu xi``
(so the stored energy is ``mu xi^2``, not ``mu xi^2 + kappa xi^2 / 2``).
Every function below follows that convention; callers in 1D get the scalar
theory they expect and should not mix it with the d >= 2 formulas.
"""

from dataclasses import dataclass

import numpy as np

#: relative tolerance for symmetry / tracelessness checks at construction
STRUCT_TOL = 1e-12


def _coerce_square(entries):
    a = np.asarray(entries, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


class SymMatrix:
    """Immutable symmetric d x d matrix.

    Parameters
    ----------
    entries : array_like
        Square matrix, symmetric to within ``STRUCT_TOL`` relative to its
        Frobenius norm. A bare scalar is accepted as a 1 x 1 matrix.
    """

    __slots__ = ("a",)

    def __init__(self, entries):
        a = _coerce_square(entries)
        scale = 1.0 + float(np.linalg.norm(a))
        if float(np.linalg.norm(a - a.T)) > STRUCT_TOL * scale:
            raise ValueError("matrix is not symmetric")
        a = 0.5 * (a + a.T)
        a.flags.writeable = False
        object.__setattr__(self, "a", a)

    def __setattr__(self, name, value):
        raise AttributeError("SymMatrix is immutable")

    @property
    def d(self) -> int:
        return self.a.shape[0]

    @property
    def tr(self) -> float:
        return float(np.trace(self.a))

    @property
    def norm(self) -> float:
        """Frobenius norm."""
        return float(np.linalg.norm(self.a))

    @property
    def scalar(self) -> float:
        """The single entry, for d = 1 matrices."""
        if self.d != 1:
            raise ValueError("scalar view requires d = 1")
        return float(self.a[0, 0])

    def dot(self, other: "SymMatrix") -> float:
        """Frobenius inner product ``A : B``."""
        return float(np.tensordot(self.a, other.a))

    def __add__(self, other):
        return type(self)(self.a + other.a)

    def __sub__(self, other):
        return type(self)(self.a - other.a)

    def __mul__(self, c: float):
        return type(self)(float(c) * self.a)

    __rmul__ = __mul__

    def __neg__(self):
        return type(self)(-self.a)

    def __repr__(self):
        return f"{type(self).__name__}({self.a.tolist()!r})"


class DevMatrix(SymMatrix):
    """Symmetric trace-free matrix for d >= 2; a bare real for d = 1.

    In d = 1 no trace condition is imposed (the deviator map is the
    identity there), so ``DevMatrix(0.7)`` is legal and ``.scalar`` reads it
    back.
    """

    __slots__ = ()

    def __init__(self, entries):
        super().__init__(entries)
        if self.d >= 2:
            scale = 1.0 + self.norm
            if abs(self.tr) > STRUCT_TOL * scale:
                raise ValueError("matrix is not trace-free")


def identity(d: int) -> SymMatrix:
    return SymMatrix(np.eye(d))


def deviator_split(xi: SymMatrix) -> tuple[DevMatrix, float]:
    """Split ``xi`` into its deviator and trace.

    For d >= 2 this is the orthogonal decomposition
    ``xi = dev + (tr/d) I``.  For d = 1 the deviator is ``xi`` itself and the
    trace is the same number; the reconstruction identity does not apply.
    """
    t = xi.tr
    if xi.d == 1:
        return DevMatrix(xi.a), t
    return DevMatrix(xi.a - (t / xi.d) * np.eye(xi.d)), t


def shear_embed(alpha: float, d: int) -> DevMatrix:
    """Embed a scalar shear amplitude as the symmetric matrix M(alpha).

    M(alpha) has ``alpha/sqrt(2)`` in the (0,1) and (1,0) slots and zeros
    elsewhere, so that ``|M(alpha)| = |alpha|`` (isometry) and
    ``M(alpha) : M(beta) = alpha beta``.  Requires d >= 2.
    """
    if d < 2:
        raise ValueError("invalid dimension: shear embedding requires d >= 2")
    if d not in (2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    a = np.zeros((d, d))
    a[0, 1] = a[1, 0] = float(alpha) / np.sqrt(2.0)
    return DevMatrix(a)


@dataclass(frozen=True)
class IsotropicElasticity:
    """Isotropic elastic law ``C xi = 2 mu dev(xi) + kappa (tr xi) I``.

    kappa is ignored in d = 1, where the convention is ``C xi = 2 mu xi``.
    """

    mu: float
    kappa: float = 1.0

    def __post_init__(self):
        if not (self.mu > 0.0 and np.isfinite(self.mu)):
            raise ValueError("invalid parameter: mu must be positive")
        if not (self.kappa > 0.0 and np.isfinite(self.kappa)):
            raise ValueError("invalid parameter: kappa must be positive")


def apply_elasticity(C: IsotropicElasticity, xi: SymMatrix) -> SymMatrix:
    if xi.d == 1:
        return SymMatrix(2.0 * C.mu * xi.a)
    dev, t = deviator_split(xi)
    return SymMatrix(2.0 * C.mu * dev.a + C.kappa * t * np.eye(xi.d))


def elastic_energy(C: IsotropicElasticity, xi: SymMatrix) -> float:
    """Stored energy ``Q(xi) = (1/2) C xi : xi``."""
    if xi.d == 1:
        return C.mu * xi.scalar ** 2
    dev, t = deviator_split(xi)
    return C.mu * dev.norm ** 2 + 0.5 * C.kappa * t ** 2


def elastic_conjugate(C: IsotropicElasticity, sigma: SymMatrix) -> float:
    """Conjugate energy ``Q*(sigma) = (1/2) sigma : C^{-1} sigma``.

    Satisfies ``Q*(C xi) = Q(xi)`` exactly.
    """
    if sigma.d == 1:
        return sigma.scalar ** 2 / (4.0 * C.mu)
    dev, t = deviator_split(sigma)
    return dev.norm ** 2 / (4.0 * C.mu) + t ** 2 / (2.0 * C.kappa * sigma.d ** 2)


def elastic_bounds(C: IsotropicElasticity, d: int) -> tuple[float, float]:
    """Constants (alpha_C, beta_C) with ``alpha_C |xi|^2 <= Q <= beta_C |xi|^2``.

    From ``|xi|^2 = |dev xi|^2 + (tr xi)^2 / d`` these are min/max of
    ``mu`` and ``kappa d / 2``; in d = 1 both equal ``mu``.
    """
    if d == 1:
        return C.mu, C.mu
    lo = min(C.mu, 0.5 * C.kappa * d)
    hi = max(C.mu, 0.5 * C.kappa * d)
    return lo, hi
