class CollectorError(Exception):
    """Base error for the benchmark harness."""


class OperatorUnavailable(CollectorError):
    """The requested operator cannot be constructed in isolation on the
    requested device (communication collectives need a multi-process
    launcher; the optimizer step needs a full parameter set)."""
