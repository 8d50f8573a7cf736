"""Exception types raised across the package."""


class SymlabError(Exception):
    """Base class for all package errors."""


class OutsideDomain(SymlabError):
    pass


class DivergentTail(SymlabError):
    pass


class FormatError(SymlabError):
    pass


class ResolutionTooCoarse(SymlabError):
    pass


class NonConvergent(SymlabError):
    pass


class NegativeKappa(SymlabError):
    pass


class DegenerateDenominator(SymlabError):
    pass


class SingularOrigin(SymlabError):
    pass


class NoGroundState(SymlabError):
    pass


class NewtonDiverged(SymlabError):
    pass


class NegativeSolution(SymlabError):
    pass


class NeverSymmetric(SymlabError):
    pass


class InsufficientData(SymlabError):
    pass


class ConvexityViolation(SymlabError):
    pass
