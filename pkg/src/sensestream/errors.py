"""Exception hierarchy shared by every module in the package."""


class SenseStreamError(Exception):
    """Base class for all package errors."""


class ZeroMassError(SenseStreamError, ValueError):
    pass


class NonPositiveThresholdError(SenseStreamError, ValueError):
    pass


class NegativeWeightError(SenseStreamError, ValueError):
    pass


class DimensionMismatchError(SenseStreamError, ValueError):
    pass


class MissingAnnotationError(SenseStreamError, KeyError):
    pass


class SegmentCountMismatchError(SenseStreamError, ValueError):
    pass


class NonFiniteLossError(SenseStreamError, ValueError):
    pass


class EmptyCorpusError(SenseStreamError, ValueError):
    pass


class DivergedLossError(SenseStreamError, ArithmeticError):
    pass


class OracleFailureError(SenseStreamError, RuntimeError):
    pass


class EmptyUtteranceError(SenseStreamError, ValueError):
    pass


class EmptyHypothesisError(SenseStreamError, ValueError):
    pass


class NoDecisionsError(SenseStreamError, ValueError):
    pass


class ZeroAudioError(SenseStreamError, ValueError):
    pass


class LengthMismatchError(SenseStreamError, ValueError):
    pass


class InvalidRangeError(SenseStreamError, ValueError):
    pass


class PolicySpecError(SenseStreamError, ValueError):
    pass


class ManifestError(SenseStreamError):
    pass


class ParseError(ManifestError):
    """Malformed manifest content; carries the 1-based line (and column when known)."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class VersionMismatchError(ManifestError):
    pass
