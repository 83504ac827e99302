"""Exception hierarchy shared by all qoidesign modules."""


class QoIDesignError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(QoIDesignError, ValueError):
    pass


class InvalidDomainError(InvalidArgumentError):
    """A parameter box with a degenerate or inverted dimension."""


class IllConditionedNeighborhoodError(QoIDesignError):
    """Neighbors of a Jacobian site are (nearly) affinely dependent."""

    def __init__(self, message, sample_index=None):
        super().__init__(message)
        self.sample_index = sample_index


class NonGDSampleError(QoIDesignError):
    """A Jacobian is rank deficient, so the map is not geometrically distinct there."""


class NoValidSitesError(QoIDesignError):
    """Too many (or all) Jacobian sites were rank deficient to form an average."""


class TooManyCandidatesError(QoIDesignError):
    pass


class EmptySupportError(QoIDesignError):
    """No sample landed in any cell of the output partition."""


class NumericalFailureError(QoIDesignError):
    pass


class ConfigError(QoIDesignError):
    """Experiment configuration failed validation; ``field`` names the culprit."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class CoverageWarning(UserWarning):
    """Some output cells captured no samples and their probability is lost."""
