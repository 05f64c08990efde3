"""Exception hierarchy shared by every solver module."""


class FisherMarketError(Exception):
    """Base class; ``code`` is the machine-readable name the CLI reports."""

    code = "error"


class InvalidInstance(FisherMarketError):
    code = "invalid_instance"


class DegenerateMatrix(InvalidInstance):
    code = "degenerate_matrix"


class NonpositiveBudget(InvalidInstance):
    code = "nonpositive_budget"


class DimensionMismatch(InvalidInstance):
    code = "dimension_mismatch"


class EpsilonOutOfRange(FisherMarketError):
    code = "epsilon_out_of_range"


class NonFiniteIterate(FisherMarketError):
    code = "non_finite_iterate"


class MissingGood(FisherMarketError):
    code = "missing_good"


class NotCertified(FisherMarketError):
    code = "not_certified"
