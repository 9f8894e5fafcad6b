"""Exception types shared across the toolkit."""


class PerfcastError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(PerfcastError):
    """A model/layout/cluster/grid config is malformed or inconsistent."""


class InfeasiblePartition(PerfcastError):
    """The requested pipeline partition cannot be realized."""


class SchemaError(PerfcastError):
    """A benchmark CSV header does not match the documented schema."""


class RowError(PerfcastError):
    """A benchmark CSV row is invalid. Carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicateError(PerfcastError):
    """Two benchmark rows share (op, direction, feats, replicate)."""


class InsufficientData(PerfcastError):
    """Too few samples to fit/select a regressor."""


class OpMismatch(PerfcastError):
    """A prediction was requested for a vector the model was not fit on."""


class FormatError(PerfcastError):
    """A serialized model file is corrupt. Carries an approximate byte offset."""

    def __init__(self, offset: int, message: str):
        super().__init__(f"byte {offset}: {message}")
        self.offset = offset


class MissingRegressor(PerfcastError):
    """The regressor bank lacks an (op, direction) the inventory demands."""
