"""Exception types shared across the package."""


class ChaosReplicaError(Exception):
    """Base class for all package errors."""


class DomainError(ChaosReplicaError):
    """State or hyper-parameter outside the valid range of a map."""


class SchemaError(ChaosReplicaError):
    """A serialized file does not match the expected schema or version."""


class EmbeddingError(ChaosReplicaError):
    """Degenerate encoder output that cannot be embedded as a site vector."""


class TrainingError(ChaosReplicaError):
    """Non-finite loss or gradient encountered during optimization."""


class UndefinedFitError(ChaosReplicaError):
    """Curve contains no usable growth window for an exponential fit."""
