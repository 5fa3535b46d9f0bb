"""Exception types raised across the package."""


class WsmpcError(Exception):
    """Base class for all package errors."""


class ConstantChannel(WsmpcError, ValueError):
    pass


class ParseError(WsmpcError, ValueError):
    pass


class NonUniformGrid(WsmpcError, ValueError):
    pass


class DimensionMismatch(WsmpcError, ValueError):
    pass


class NonFiniteOutput(WsmpcError, ArithmeticError):
    pass


class Diverged(NonFiniteOutput):
    """Integration produced a state with magnitude above the blow-up threshold.

    ``partial`` optionally carries the trajectory computed before the blow-up.
    """

    def __init__(self, message="", partial=None):
        super().__init__(message)
        self.partial = partial


class InvalidSupport(WsmpcError, ValueError):
    pass


class TooFewSamples(WsmpcError, ValueError):
    pass


class RankDeficient(WsmpcError, ArithmeticError):
    pass


class EmptyReducedLibrary(WsmpcError, ValueError):
    pass


class ZeroQuaternion(WsmpcError, ValueError):
    pass


class InfeasibleBounds(WsmpcError, ValueError):
    pass


class GridMismatch(WsmpcError, ValueError):
    pass


class ZeroReference(WsmpcError, ValueError):
    pass


class EmptyMask(WsmpcError, ValueError):
    pass


class ConfigError(WsmpcError, ValueError):
    pass


class AllEmptyWarning(UserWarning):
    """Every threshold in the grid removed every library term."""
