"""Exception types shared across the package."""


class TaskHGError(Exception):
    """Base class for package-specific errors."""


class ConstructionError(TaskHGError, ValueError):
    """A hypergraph or task could not be built from its inputs."""


class DataError(TaskHGError):
    """Malformed input files, manifests, or dataset contents."""


class CheckpointError(DataError):
    """Base class for checkpoint (de)serialization failures."""


class CheckpointFormatError(CheckpointError):
    """Magic bytes or header layout do not match the expected format."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written by an unsupported format version."""


class CheckpointTruncatedError(CheckpointError):
    """Checkpoint body length disagrees with its header."""


class DivergenceError(TaskHGError):
    """Training produced a non-finite loss or gradient."""
