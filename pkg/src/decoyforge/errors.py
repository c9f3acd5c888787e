"""Exception hierarchy shared across the toolkit."""


class DecoyForgeError(Exception):
    """Base class for all toolkit errors."""


# --- structure parsing ---------------------------------------------------


class MalformedRecord(DecoyForgeError):
    """A fixed-width record could not be parsed."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class EmptyStructure(DecoyForgeError):
    """No atoms were found in the input."""


# --- curation -------------------------------------------------------------


class UnknownElement(DecoyForgeError):
    """An element code is missing from the mass/radius tables."""


# --- decoys ---------------------------------------------------------------


class LengthMismatch(DecoyForgeError):
    """Coordinate sets of unequal length were compared."""


class AtomNameMismatch(DecoyForgeError):
    """Pose atoms could not be matched to the native ligand by name."""


class AmbiguousAtomNames(DecoyForgeError):
    """Duplicate atom names prevent an unambiguous pose remap."""


class NoValidPose(DecoyForgeError):
    """Every candidate pose was rejected (clash or box violation)."""


# --- graphs ---------------------------------------------------------------


class EmptyPocket(DecoyForgeError):
    """No protein atom lies within the cutoff of the ligand."""


# --- autodiff -------------------------------------------------------------


class ShapeMismatch(DecoyForgeError):
    """Operands have incompatible shapes."""


class IndexOutOfRange(DecoyForgeError):
    """A gather/scatter index exceeds the target dimension."""


class NotAScalar(DecoyForgeError):
    """backward() was started from a non-scalar tensor."""


# --- objective ------------------------------------------------------------


class ZeroVector(DecoyForgeError):
    """Cosine similarity is undefined for a zero-norm embedding."""


class NoNegatives(DecoyForgeError):
    """An InfoNCE term has an empty denominator."""


class NoPositivePairsInBatch(DecoyForgeError):
    """No anchor in the batch has a positive decoy."""


class DmaxUnavailable(DecoyForgeError):
    """Decoy-weight normalization requested on a dataset without decoys."""


# --- encoder / training ----------------------------------------------------


class NonFiniteActivation(DecoyForgeError):
    """The encoder produced NaN/inf activations."""


class NonFiniteScore(DecoyForgeError):
    """The score model produced NaN/inf values."""


class DivergedLoss(DecoyForgeError):
    """Training loss became non-finite."""


class EmptySplit(DecoyForgeError):
    """A train/validation/test split has no samples."""


class InsufficientDecoys(DecoyForgeError):
    """A complex has fewer decoys than the batch composition requires."""


# --- dataset store ----------------------------------------------------------


class DatasetFormatError(DecoyForgeError):
    """A dataset file is missing, truncated, or has the wrong version."""
