"""Exception types shared across the toolkit."""


class ValidationError(ValueError):
    """A parameter or data invariant was violated."""


class GridMismatchError(ValidationError):
    """Two volumes do not live on the same voxel grid."""


class DataRangeError(ValidationError):
    """Values cannot be represented in the requested output datatype."""


class NiftiError(Exception):
    """Base class for NIfTI file-format problems."""


class NiftiFormatError(NiftiError):
    """Header bytes do not form a readable NIfTI-1 file."""


class UnsupportedDatatypeError(NiftiError):
    """The file uses a datatype code this reader does not handle."""

    def __init__(self, code: int):
        super().__init__(f"unsupported NIfTI datatype code {code}")
        self.code = code


class TruncatedFileError(NiftiError):
    """The file ends before the header-declared payload is complete."""


class ShapeError(NiftiError):
    """The header declares a shape other than a single 3-D volume."""


class EndiannessError(NiftiError):
    """The file appears to be big-endian, which is not supported."""
