"""Exception hierarchy."""


class VridynError(Exception):
    """Base class for all package errors."""


class SingularSystemError(VridynError):
    """The coefficient system for A, B, C has no unique solution."""


class VRINotBracketedError(VridynError):
    """No sign change of the transverse curvature on the saddle-to-saddle segment."""


class NewtonConvergenceError(VridynError):
    def __init__(self, seed, iterations, grad_norm):
        self.seed = seed
        self.iterations = iterations
        self.grad_norm = grad_norm
        super().__init__(
            f"Newton iteration seeded at {tuple(seed)} did not converge after "
            f"{iterations} iterations (|grad V| = {grad_norm:.3e})"
        )


class DomainError(VridynError, ValueError):
    """An argument lies outside the domain of the operation."""


class ValidationError(VridynError, ValueError):
    """A parameter set violates one of its invariants."""


class IntegrationStalled(VridynError):
    """Adaptive step size underflowed; carries the last accepted state."""

    def __init__(self, state, traj_id=None):
        self.state = state
        self.traj_id = traj_id
        where = "" if traj_id is None else f" (trajectory {traj_id})"
        super().__init__(f"integration stalled{where} at state {state}")


class ConfigError(VridynError, ValueError):
    """Malformed or invalid run configuration."""
