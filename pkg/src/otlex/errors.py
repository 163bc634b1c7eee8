"""Exception hierarchy for otlex."""


class OtlexError(Exception):
    """Base class for every error raised by otlex."""


class EmbeddingFormatError(OtlexError, ValueError):
    """Embedding file is malformed or violates the space invariants."""


class LexiconFormatError(OtlexError, ValueError):
    """Lexicon file line cannot be parsed."""


class DimensionMismatchError(OtlexError, ValueError):
    """Two arrays or spaces disagree on a dimension."""


class ConfigError(OtlexError, ValueError):
    """Configuration is invalid or internally inconsistent."""


class SinkhornError(OtlexError, ArithmeticError):
    """Sinkhorn scalings became non-finite."""


class DivergenceError(OtlexError, ArithmeticError):
    """A trainer produced a non-finite map."""


class MapFormatError(OtlexError, ValueError):
    """Binary map file has a bad header, version or size."""
