"""Exception hierarchy shared by every module in the package."""


class RKMVError(Exception):
    """Base class for all package errors."""


class NonFiniteInput(RKMVError, ValueError):
    pass


class AllRowsIdentical(RKMVError, ValueError):
    pass


class InvalidDimension(RKMVError, ValueError):
    pass


class DimensionMismatch(RKMVError, ValueError):
    pass


class GroupMismatch(RKMVError, ValueError):
    pass


class NonFiniteObjective(RKMVError, FloatingPointError):
    pass


class BacktrackingFailed(RKMVError, RuntimeError):
    pass


class EmptyClass(RKMVError, ValueError):
    pass


class SingleClass(RKMVError, ValueError):
    pass


class SingularSystem(RKMVError, ValueError):
    pass


class RankDeficient(RKMVError, ValueError):
    pass


class UnfittedModel(RKMVError, RuntimeError):
    pass


class FormatVersionMismatch(RKMVError, ValueError):
    pass


class InvalidSpec(RKMVError, ValueError):
    pass


class RowCountMismatch(RKMVError, ValueError):
    pass


class ParseError(RKMVError, ValueError):
    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class OverlappingGroups(RKMVError, ValueError):
    pass


class IncompleteGroups(RKMVError, ValueError):
    pass
