"""Semantic exception hierarchy.

Every failure mode callers are expected to branch on gets its own class;
all of them derive from :class:`SpatialDRError` so library consumers can
catch the package's errors wholesale.
"""


class SpatialDRError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(SpatialDRError):
    """A required column or field is missing from an input file."""


class ParseError(SpatialDRError):
    """A cell could not be converted to the expected type."""


class ConsistencyError(SpatialDRError):
    """Record-level invariant violated (e.g. labeled row without outcome)."""


class ParameterError(SpatialDRError, ValueError):
    """An argument is outside its documented domain."""


class PartitionError(SpatialDRError):
    """A fold partition is malformed (empty fold, bad labels)."""


class InsufficientDataError(SpatialDRError):
    """Too few observations for the requested computation."""


class InsufficientLabelsError(SpatialDRError):
    """Too few labeled units for the requested computation."""


class NuisanceStarvationError(SpatialDRError):
    """A fold's training set has no labeled units to fit the outcome model."""


class ZeroVarianceError(SpatialDRError):
    """A statistic is undefined because its input has zero variance."""


class RankError(SpatialDRError):
    """Normal equations are singular and no ridge penalty was requested."""


class InfeasibleTargetError(SpatialDRError):
    """A calibration target lies outside the attainable range."""


class SolverError(SpatialDRError):
    """An iterative solver failed to bracket or converge."""
