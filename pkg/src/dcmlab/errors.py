"""Exception hierarchy.

``InputError`` covers bad parameters and degenerate geometry the caller can
fix; ``NumericError`` covers failures of an iterative or linear-algebra step.
The CLI maps the first to exit code 1 and the second to exit code 2.
"""


class DcmError(Exception):
    pass


class InputError(DcmError, ValueError):
    pass


class NumericError(DcmError, ArithmeticError):
    pass


class ZeroImage(InputError):
    pass


class DegenerateEdge(InputError):
    pass


class DegenerateInput(InputError):
    pass


class BadCrossRatio(InputError):
    pass


class ZeroLambda(InputError):
    pass


class SeedEqualsBase(InputError):
    pass


class BadParams(InputError):
    pass


class PoleAtInfinityPoint(InputError):
    pass


class NoSolution(InputError):
    pass


class UnsupportedNodeCount(InputError):
    pass


class MissingLatticeGenerators(InputError):
    pass


class InfiniteSite(InputError):
    pass


class ZeroEdge(InputError):
    pass


class ExcludedLambda(InputError):
    pass


class EmptyLattice(InputError):
    pass


class NotPositiveDefinite(InputError):
    pass


class NoConvergence(NumericError):
    pass


class EigenlineCollision(NumericError):
    pass


class RadiusTooSmall(NumericError):
    pass


class PathInconsistency(NumericError):
    pass


class NotInBigCell(NumericError):
    pass


class BigCellFailure(NumericError):
    pass


class NonGeneric(NumericError):
    pass


class AuditFailed(NumericError):
    pass
