"""Failure types raised by the numerical layers."""


class StepFailure(RuntimeError):
    """An implicit time step did not converge (after bracket widening)."""


class StiffnessFailure(RuntimeError):
    """The adaptive integrator could not meet its tolerance budget."""


class IntegrationFailure(RuntimeError):
    """An ODE run ended before reaching its final time."""
