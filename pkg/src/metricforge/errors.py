"""Exception hierarchy shared by all metricforge modules.

The CLI maps these onto process exit codes: usage errors exit 1,
:class:`DataError` exits 2, :class:`ExtractionError` exits 3 and
:class:`NumericError` exits 4.
"""


class MetricForgeError(Exception):
    """Base class for all errors raised by this package."""


class DataError(MetricForgeError):
    """Malformed or contract-violating input data."""


class ParseError(DataError):
    """A file could not be parsed; message carries line/column context."""


class FormatError(DataError):
    """A file-level format problem (bad header, wrong version)."""


class IngestionError(DataError):
    """Inconsistent corpus content (duplicates, mismatched references)."""


class SplitError(DataError):
    """A train/test split request that cannot be satisfied."""


class JoinError(DataError):
    """A cross-file join failed (dangling identifier)."""


class FeatureValidationError(DataError):
    """A feature vector violated its invariants."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid feature vector: " + "; ".join(self.violations))


class ExtractionError(MetricForgeError):
    """Feature acquisition failed."""


class TransportError(ExtractionError):
    """The extractor endpoint could not be reached after retries."""


class ProtocolError(ExtractionError):
    """The extractor returned a payload violating the wire contract."""


class CacheMissError(ExtractionError):
    """Offline mode was requested but some pairs are not cached."""

    def __init__(self, digests: list[str]):
        self.digests = list(digests)
        super().__init__(
            f"{len(self.digests)} pair(s) missing from cache: "
            + ", ".join(self.digests[:5])
            + ("..." if len(self.digests) > 5 else "")
        )


class CacheVersionError(ExtractionError):
    """Cache extractor_version does not match the active extractor."""


class NumericError(MetricForgeError):
    """A numeric computation could not be carried out."""


class DegenerateInputError(NumericError):
    """Input admits no well-defined statistic (constant data, empty set)."""


class ShapeError(NumericError):
    """Dimension mismatch between arrays/vectors."""


class SingularSystemError(NumericError):
    """A linear system stayed singular even after ridge rescue."""


class DivergenceError(NumericError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"non-finite training loss at epoch {epoch}")


class MissingScoreError(NumericError):
    """A ranked pair has no metric score attached."""
