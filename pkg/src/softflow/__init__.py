"""Viscosity-regularized quasistatic evolution for softening elastoplasticity.

Subpackages by role:

- ``tensors``: symmetric/deviatoric algebra and isotropic elasticity
- ``domains``: compact convex elastic domains and their support/projection/
  viscous flow calculus
- ``softening``: concave softening potentials and their recession data
- ``slowfast``: slow/fast decomposition of the homogeneous dynamics and the
  fast transition map
- ``homogeneous``: regularized ODE runs, quasistatic assembly, energy audits
- ``shear1d``: one-dimensional shear band / oscillation simulations and
  Young measure diagnostics
- ``incremental``: implicit incremental (time-discrete) solver and its
  optimality/energy verifications
- ``scenarios`` / ``cli``: runnable scenario configs, CSV/SVG artifacts
"""

from . import (  # noqa: F401
    domains,
    homogeneous,
    incremental,
    shear1d,
    slowfast,
    softening,
    tensors,
)

__version__ = "0.1.0"
