"""Exception hierarchy shared across the package."""


class LatentCondError(Exception):
    """Base class for all package errors."""


class ShapeError(LatentCondError, ValueError):
    pass


class NonFiniteError(LatentCondError, FloatingPointError):
    """A NaN or infinity appeared while evaluating `op`."""

    def __init__(self, op, detail=""):
        self.op = op
        msg = f"non-finite value produced by '{op}'"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DegenerateInputError(LatentCondError, ValueError):
    pass


class DivergenceError(LatentCondError, FloatingPointError):
    pass


class TrainingError(LatentCondError, RuntimeError):
    pass


class GridTooSmallError(LatentCondError, ValueError):
    pass


class ConfigError(LatentCondError, ValueError):
    pass


class CheckpointError(LatentCondError, IOError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class ChecksumMismatchError(CheckpointError):
    pass


class MalformedCheckpointError(CheckpointError):
    pass
