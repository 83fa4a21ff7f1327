"""Exception hierarchy shared by all mixlab modules."""


class MixlabError(Exception):
    """Base class for every error raised by mixlab."""


class GrazingCollision(MixlabError):
    """Outgoing billiard ray is tangent to the boundary."""


class CornerHit(MixlabError):
    """Billiard trajectory lands on a non-smooth corner of the table."""


class Overflow(MixlabError):
    """No entry into the inducing set within the iteration cap."""


class EmptySeries(MixlabError):
    pass


class InsufficientSamples(MixlabError):
    pass


class DegenerateFit(MixlabError):
    pass


class DegenerateVariance(MixlabError):
    pass


class ZeroMeanProduct(MixlabError):
    pass


class LengthMismatch(MixlabError):
    pass


class EmptyRange(MixlabError):
    """Truncation removed every admissible target index of a kernel row."""


class NoConvergence(MixlabError):
    pass


class InvalidBand(MixlabError):
    pass


class ConfigError(MixlabError):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
