"""
Exception types raised by the clustering core.
"""


class AFCLError(Exception):
    """Base class for every error the engine raises on purpose."""


class DataLoadError(AFCLError):
    pass


class PartitionError(AFCLError):
    pass


class SeedingError(AFCLError):
    pass


class AggregationError(AFCLError):
    pass


class UndefinedIndexError(AFCLError):
    """A validity index is not defined for the given labelling."""


class SeedDivergenceError(AFCLError):
    """Seeds became non-finite or left the sanity box."""


class ConfigError(AFCLError):
    pass
