"""Exception types shared across the package."""


class ProxnetError(Exception):
    """Base class for all errors raised by this package."""


class InvalidTopologyError(ProxnetError):
    """Graph violates a topology precondition (size, symmetry, connectivity)."""


class WeightingError(ProxnetError):
    """A mixing-matrix construction rule does not apply to the given graph."""


class NotPositiveSemidefiniteError(ProxnetError):
    """Matrix square root requested for a matrix with negative eigenvalues."""


class NumericError(ProxnetError):
    """A dense linear-algebra routine failed to converge."""


class InvalidDomainError(ProxnetError):
    """Regularizer parameters describe an empty or malformed domain."""


class InvalidOracleError(ProxnetError):
    """Objective construction or evaluation received inconsistent inputs."""


class ParameterError(ProxnetError):
    """Algorithm parameter outside its admissible range."""


class StateError(ProxnetError):
    """Swarm state inconsistent with the requested update."""


class DivergedError(ProxnetError):
    """An iterate became non-finite during a run."""

    def __init__(self, iteration: int, message: str | None = None):
        self.iteration = iteration
        super().__init__(message or f"iterates diverged (NaN/Inf) at iteration {iteration}")


class DataFormatError(ProxnetError):
    """Binary dataset file violates the expected layout."""


class DataError(ProxnetError):
    """Dataset content cannot support the requested operation."""


class ConfigError(ProxnetError):
    """Experiment configuration failed validation."""


class AggregationError(ProxnetError):
    """Run records cannot be averaged together."""
