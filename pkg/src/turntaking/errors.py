"""Exception types shared across the package."""


class TurntakingError(Exception):
    """Base class for all package errors."""


class ConfigError(TurntakingError):
    """Invalid configuration: bad file, unknown key, incompatible settings."""


class DataError(TurntakingError):
    """Malformed or inconsistent corpus data."""


class DataWarning(UserWarning):
    """Recoverable data irregularity: truncation, padding, collisions."""


class TrainingDiverged(TurntakingError):
    """Non-finite values encountered during training."""

    def __init__(self, block: str, detail: str = ""):
        self.block = block
        self.detail = detail
        msg = f"non-finite gradient or parameter in block '{block}'"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
