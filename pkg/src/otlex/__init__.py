"""Semi-supervised bilingual lexicon induction with prior optimal transport."""

__version__ = "0.1.0"
