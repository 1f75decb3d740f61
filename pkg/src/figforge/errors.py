"""Exception types shared across the pipeline.

Filesystem problems reuse the builtin OSError family (NotADirectoryError
for bad archive roots); everything domain-specific derives from
FigforgeError so callers can catch the whole family at the CLI boundary.
"""


class FigforgeError(Exception):
    """Base class for all figforge-specific errors."""


class MalformedManifest(FigforgeError):
    """A package manifest exists but cannot be parsed against the schema."""


class EmptyKeywordList(FigforgeError):
    """A keyword file contained no usable terms."""


class MissingMedicalCategory(FigforgeError):
    """Classifier scores do not include the 'Medical' category."""


class EmptyInput(FigforgeError):
    """An operation that requires at least one element got none."""


class OutOfBounds(FigforgeError):
    """A box escaped its image; indicates an upstream bug."""


class InvertedRange(FigforgeError):
    """Label range runs backwards, e.g. 'c-a'."""


class MixedAlphabet(FigforgeError):
    """Label range mixes letter/digit/roman alphabets, e.g. 'a-iii'."""


class EmptyMatrix(FigforgeError):
    """Similarity matrix with zero rows or columns."""


class ZeroNormRow(FigforgeError):
    """An embedding row has zero L2 norm and cannot be normalized."""


class EmptyMask(FigforgeError):
    """MLM loss requested on a sequence with no masked positions."""


class NonNormalizedDistribution(FigforgeError):
    """A predicted token distribution does not sum to 1 within tolerance."""


class NoGroundTruth(FigforgeError):
    """Average precision requested against an empty ground-truth set."""


class KOutOfRange(FigforgeError):
    """Recall@K called with K < 1."""


class GoldMismatch(FigforgeError):
    """Gold alignment annotations do not cover every predicted subfigure."""


class ConfigError(FigforgeError):
    """Pipeline configuration is invalid; message names the offending field."""


class InferenceClientError(FigforgeError):
    """The inference sidecar rejected a request or was unreachable."""
