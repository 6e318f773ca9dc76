"""Exception types shared across the package."""


class PemvError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(PemvError):
    """Invalid configuration value, unknown key, or malformed config text."""


class ShapeError(PemvError):
    """Tensor shape does not match the documented contract."""


class DataError(PemvError):
    """Dataset file missing, unreadable, or malformed."""


class CheckpointError(PemvError):
    """Checkpoint archive is incompatible, corrupt, or incomplete."""


class PrototypeNotReadyError(PemvError):
    """Prototype retrieval requested before the bank holds both classes."""


class TrainingDivergedError(PemvError):
    """Training aborted on a non-finite loss; carries a diagnostic dump."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
