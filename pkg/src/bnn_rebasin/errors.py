"""Package-level error types, mapped to CLI exit codes by the harness."""


class DataFormatError(Exception):
    """Malformed or truncated input file (IDX data, checkpoint)."""


class NumericalError(RuntimeError):
    """Numerical failure: training divergence, persistent HMC rejection."""
