"""Exception types raised across the toolkit."""


class MeasKnowError(Exception):
    """Base class for every error raised by measknow."""


class DimensionMismatch(MeasKnowError, ValueError):
    pass


class NotHermitian(MeasKnowError, ValueError):
    pass


class InvalidState(MeasKnowError, ValueError):
    """A matrix failed the density-operator contract (PSD, unit trace)."""


class NotUnitary(MeasKnowError, ValueError):
    pass


class InvalidMeasurement(MeasKnowError, ValueError):
    """Malformed POVM or instrument (labels, shapes, positivity)."""


class IncompleteMeasurement(InvalidMeasurement):
    """Effects or Kraus operators do not sum to the identity."""


class OutcomeProbabilityZero(MeasKnowError, ValueError):
    pass


class NonCommutingPair(MeasKnowError, ValueError):
    pass


class DisturbanceNotZero(MeasKnowError, ValueError):
    pass


class NoiseNotZero(MeasKnowError, ValueError):
    pass


class NotUncorrelated(MeasKnowError, ValueError):
    pass


class ConsistencyError(MeasKnowError, ArithmeticError):
    """Two independent computations of the same quantity disagree."""


class DegenerateDenominatorWarning(UserWarning):
    """The WAY bound denominator vanished while its numerator did not."""


class InvalidMatrix(MeasKnowError, ValueError):
    """Wrong rank, non-finite entries or a malformed matrix encoding."""


class NotConserving(MeasKnowError, ValueError):
    """A unitary fails to commute with the total conserved charge."""
