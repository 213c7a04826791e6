"""Exception types shared across the package."""


class EmpcLabError(Exception):
    """Base class for all package-specific errors."""


class DegenerateSpeedError(EmpcLabError, ValueError):
    """Longitudinal speed fell below the floor where slip angles are defined."""


class NonFiniteStateError(EmpcLabError, FloatingPointError):
    """An integration or update step produced NaN/inf values."""


class LengthMismatchError(EmpcLabError, ValueError):
    """A state/control sequence does not match the configured horizon."""


class InfeasibleBoundsError(EmpcLabError, ValueError):
    """Configured bounds admit no feasible point."""


class EpisodeDoneError(EmpcLabError, RuntimeError):
    """step() was called on an environment whose episode already ended."""


class EmptyTraceError(EmpcLabError, ValueError):
    """Metrics were requested for an empty trace."""


class CheckpointError(EmpcLabError, RuntimeError):
    """Base class for checkpoint read/write failures."""


class CorruptCheckpointError(CheckpointError):
    """Checkpoint file is truncated or fails structural validation."""


class TopologyMismatchError(CheckpointError):
    """Checkpoint topology does not match the target network/agent."""
