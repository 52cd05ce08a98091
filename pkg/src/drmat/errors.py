"""Exception hierarchy shared by every drmat module."""


class DrmatError(Exception):
    """Base class for all library errors."""


class NotFiniteType(DrmatError):
    pass


class UnsupportedRank(DrmatError):
    pass


class AlgebraMismatch(DrmatError):
    pass


class NonOrthonormalBasis(DrmatError):
    pass


class BadSlot(DrmatError):
    pass


class NotBijective(DrmatError):
    pass


class NotIsometric(DrmatError):
    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class DegenerateTriple(DrmatError):
    pass


class OutsideDomain(DrmatError):
    pass


class NearPole(DrmatError):
    pass


class MethodDisagreement(DrmatError):
    pass


class CapExceeded(DrmatError):
    pass


class ShapovalovSingular(DrmatError):
    def __init__(self, message, degree=None):
        super().__init__(message)
        self.degree = degree


class WeightConstraintViolated(DrmatError):
    pass


class NuNotPerp(DrmatError):
    pass


class TruncationTooSmall(DrmatError):
    pass


class NearLatticeZero(DrmatError):
    pass


class NotAutomorphism(DrmatError):
    pass


class CutoffTooSmall(DrmatError):
    pass


class UsageError(DrmatError):
    pass


class BadTripleFile(UsageError):
    pass
