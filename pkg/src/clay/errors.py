"""Exception taxonomy shared by every clay module."""


class ClayError(Exception):
    """Base class for all errors raised by this package."""


# --- geometry ---------------------------------------------------------------

class ZeroVector(ClayError):
    """Input vector has (near-)zero norm and cannot be normalized."""


class DegenerateMean(ClayError):
    """Row sum cancels out; the spherical mean is undefined."""


class AntipodalPoint(ClayError):
    """Point is antipodal to the tangent-space reference; log map undefined."""


class AntipodalMeans(ClayError):
    """Source and target means are antipodal; alignment rotation undefined."""


class DimensionMismatch(ClayError):
    """Operands have incompatible dimensions."""


# --- subspace ---------------------------------------------------------------

class RankZero(ClayError):
    """Tangent-mapped prompt matrix has no usable singular direction."""


class BaseMismatch(ClayError):
    """Tangent vector is anchored at a different reference point."""


class IndexOutOfRange(ClayError):
    """Spectrum index outside the valid range."""


class EmptyInput(ClayError):
    """Operation requires at least one element."""


# --- conditioning -----------------------------------------------------------

class ZeroProjection(ClayError):
    """Modulated vector has zero norm under the Error policy."""


# --- index ------------------------------------------------------------------

class DuplicateId(ClayError):
    """Database ids must be unique."""


class LabelCoverage(ClayError):
    """A labeled attribute does not cover every database id."""


# --- evaluation -------------------------------------------------------------

class TooFewItems(ClayError):
    """Not enough items to produce a non-empty query/database split."""


class MissingLabel(ClayError):
    """Requested attribute is not labeled on an item."""


class EmptyGroup(ClayError):
    """A group has queries but no database items to rank."""


# --- synthbench -------------------------------------------------------------

class InsufficientDimension(ClayError):
    """Embedding dimension too small for the requested attribute layout."""


# --- storage ----------------------------------------------------------------

class StorageError(ClayError):
    """Base class for file-format errors."""


class BadMagic(StorageError):
    """File does not start with the expected magic bytes."""


class TruncatedFile(StorageError):
    """File payload does not match the length promised by the header."""


class DimensionOverflow(StorageError):
    """Header count/dim fields out of the representable or sane range."""


class OrthonormalityViolation(StorageError):
    """Deserialized subspace basis failed the orthonormality check."""
