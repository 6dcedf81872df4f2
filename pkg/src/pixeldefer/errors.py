"""Package-level error taxonomy shared by the CLI and service."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class DataError(ValueError):
    """Dataset generation or loading failure."""


class TrainAbortError(RuntimeError):
    """Training aborted (non-finite loss); carries a diagnostic snapshot."""

    def __init__(self, message: str, snapshot: dict | None = None):
        super().__init__(message)
        self.snapshot = snapshot or {}
