"""Shared exception types."""


class DataError(ValueError):
    """Malformed or non-finite input data (bad file row, NaN sample, ...).

    Distinct from plain ValueError so callers can map data problems and API
    misuse to different exit codes.
    """
