"""Exception types raised by the library.

Mathematical infeasibility (no information, no finite threshold, a failed
side condition) derives from :class:`Infeasible` so the CLI can map the whole
family to one exit code.
"""


class SupportBoundsError(Exception):
    pass


class ConfigError(SupportBoundsError, ValueError):
    """Invalid parameters or incompatible model/distribution/prior choices."""


class EnumerationCapExceeded(SupportBoundsError):
    pass


class QuadratureError(SupportBoundsError, ArithmeticError):
    """Gauss-Hermite order doubling did not converge."""


class ConfigMismatch(SupportBoundsError, ValueError):
    pass


class Infeasible(SupportBoundsError, ArithmeticError):
    pass


class ZeroInformation(Infeasible):
    """Worst-case mutual information is zero, so the sufficiency bound is vacuous."""


class InfiniteThreshold(Infeasible):
    """A necessity denominator is zero: recovery is impossible at any T."""


class NoFiniteThreshold(Infeasible):
    """A self-consistent threshold in T has no finite solution (SNR too low)."""


class SideConditionFailed(Infeasible):
    pass
