"""Exception types raised by the library.

Every error derives from ``DelaySteerError`` so callers (and the CLI) can
separate domain failures from bad input, which raises ``InputError``.
"""


class DelaySteerError(Exception):
    """Base class for domain errors."""


class InputError(DelaySteerError, ValueError):
    """Malformed system, state or argument."""


class KernelEmpty(DelaySteerError):
    """Delta(lambda)^* has no numerically null direction."""


class NotSpectrallyControllableAt(DelaySteerError):
    def __init__(self, lam, message=None):
        self.lam = complex(lam)
        super().__init__(message or f"<b, y> vanishes at lambda = {self.lam:.12g}")


class NonConvergence(DelaySteerError):
    pass


class CollidingSeeds(DelaySteerError):
    pass


class BoundaryZero(DelaySteerError):
    def __init__(self, point, message=None):
        self.point = complex(point)
        super().__init__(message or f"characteristic determinant vanishes near contour point {self.point:.6g}")


class NotControllablePair(DelaySteerError):
    pass


class PlacementIllConditioned(DelaySteerError):
    pass


class SingularPairSystem(DelaySteerError):
    pass


class IllConditioned(DelaySteerError):
    def __init__(self, message, effective_rank=None):
        self.effective_rank = effective_rank
        super().__init__(message)


class HorizonTooShort(DelaySteerError):
    pass


class TruncationDiverging(DelaySteerError):
    pass


class SimpleSpectrumViolated(DelaySteerError):
    def __init__(self, clusters, message=None):
        self.clusters = list(clusters)
        super().__init__(message or f"multiple eigenvalues at {self.clusters}")


class MultipleEigenvalue(DelaySteerError):
    pass


class RealnessViolated(DelaySteerError):
    pass


class NeutralNotSupported(DelaySteerError):
    pass


class IncompatibleGrid(DelaySteerError):
    pass


class NonSmoothHistory(DelaySteerError):
    pass


class HorizonShort(DelaySteerError):
    pass
