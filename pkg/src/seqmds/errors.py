"""Exception hierarchy shared across the package.

The split between :class:`DataError` and :class:`NumericalError` mirrors the
CLI exit codes: data/validation problems exit with 2, numerical failures
with 3.
"""


class SeqmdsError(Exception):
    """Base class for all errors raised by this package."""


class DataError(SeqmdsError):
    """Invalid input data or inconsistent arguments."""


class CorpusFormatError(DataError):
    """A corpus, alphabet, or sidecar file failed to parse or validate."""


class AlphabetMismatchError(DataError):
    """Two sequences (or a sequence and a corpus) use different alphabets."""


class NumericalError(SeqmdsError):
    """A numerical procedure failed (divergence, singularity, budget)."""


class DivergenceError(NumericalError):
    """Optimization produced non-finite values or failed to descend."""


class SingularDesignError(NumericalError):
    """A linear system is singular; a positive l2 penalty would fix it."""


class FitWarning(UserWarning):
    """Non-fatal fitting issue, e.g. iteration cap hit under separation."""
