"""Exception types raised across the package."""


class SPNetError(ValueError):
    """Base class for all validation and format errors."""


# tensor / SPTN
class ShapeMismatch(SPNetError):
    pass


class EmptyShape(SPNetError):
    pass


class BadMagic(SPNetError):
    pass


class UnknownDtype(SPNetError):
    pass


class TruncatedPayload(SPNetError):
    pass


class DimOverflow(SPNetError):
    pass


class IoFailure(SPNetError, OSError):
    pass


# geometry
class SingularCalib(SPNetError):
    pass


# kitti
class MisalignedBuffer(SPNetError):
    pass


class MalformedLine(SPNetError):
    def __init__(self, line_no, reason=""):
        self.line_no = line_no
        msg = f"line {line_no}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class MissingKey(SPNetError):
    pass


class BadFloatCount(SPNetError):
    pass


# painting
class ClassOutOfRange(SPNetError):
    pass


# bevgrid
class GridDegenerate(SPNetError):
    pass


class RankMismatch(SPNetError):
    pass


# passing
class MaskNotComplementary(SPNetError):
    pass


class ClassCountMismatch(SPNetError):
    pass
