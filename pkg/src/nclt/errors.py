"""Exception taxonomy shared by all modules."""


class NcltError(Exception):
    """Base class for all library errors."""


class InvalidMeasure(NcltError):
    """Measure data violates an invariant (negative weight, bad grid, ...)."""


class NotProbability(NcltError):
    """An operation requiring probability measures received something else."""


class OutOfHalfPlane(NcltError):
    """Evaluation point is not in the open upper half-plane."""


class NumericalDomain(NcltError):
    """A transform evaluation hit a value outside its numerical domain."""


class NonconvergentDerivativeAtInfinity(NcltError):
    """The linear coefficient at infinity did not stabilize on the probe grid."""


class NotP2(NcltError):
    """The function has no finite angular residue at infinity."""


class OutOfCone(NcltError):
    """Inversion iterate left the upper half-plane or failed to converge."""


class WindowTooSmall(NcltError):
    """Recovered mass leaks out of the requested inversion window."""


class MassLeak(NcltError):
    """Exact atom extraction failed to account for the full mass."""


class FixedPointStall(NcltError):
    """Subordination fixed point did not converge within the iteration budget."""


class TooLarge(NcltError):
    """Requested order exceeds the brute-force oracle cap."""


class AmbiguousSlope(NcltError):
    """Time parameter sits on a grid node where one-sided slopes differ."""


class StepUnderflow(NcltError):
    """Adaptive step size underflowed near the real axis."""


class OutsideContinuationDomain(NcltError):
    """Point violates |z| > 3R for Picard continuation."""


class NoExactFormula(NcltError):
    """No closed-form capacity is available for this hull variant."""


class WalkTimeout(NcltError):
    """A Monte Carlo walk exhausted its step budget without exiting."""


class TooFewPoints(NcltError):
    """Not enough distinct points for the requested diameter order."""


class SolverInconsistent(NcltError):
    """Chain analysis disagrees with the exact integral; tolerances are off."""


class DegenerateMeasure(UserWarning):
    """Flag raised when statistics are requested from a zero-mass measure."""
