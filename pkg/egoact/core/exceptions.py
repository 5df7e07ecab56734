"""Custom exceptions for photo-stream pipelines"""

from contextlib import contextmanager
from typing import Optional


class EgoActError(Exception):
    """Base exception for data and invariant failures"""

    def __init__(self, message: str):
        self.message = message
        self.context: list[str] = []
        super().__init__(message)

    def __str__(self) -> str:
        if not self.context:
            return self.message
        return f"{' > '.join(self.context)}: {self.message}"


class UsageError(EgoActError):
    """Command line used incorrectly"""
    pass


class ConfigurationError(EgoActError):
    """Configuration values are invalid or inconsistent"""
    pass


class ManifestError(EgoActError):
    """Manifest failed to parse or violates an invariant"""

    def __init__(self, message: str, line: Optional[int] = None, record: Optional[str] = None):
        self.line = line
        self.record = record
        where = []
        if line is not None:
            where.append(f"line {line}")
        if record is not None:
            where.append(f"record {record!r}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(f"{message}{suffix}")


class FeatureError(EgoActError):
    """Feature file or matrix is malformed"""
    pass


class DimensionMismatchError(FeatureError):
    """Vector or matrix width disagrees with the declared dimension"""

    def __init__(self, expected: int, actual: int, where: str = ""):
        self.expected = expected
        self.actual = actual
        location = f" in {where}" if where else ""
        super().__init__(f"Dimension mismatch{location}: expected {expected}, got {actual}")


class NormalizationError(FeatureError):
    """Probability-like row does not sum to one"""

    def __init__(self, frame_id: str, total: float, detail: str = "row sum"):
        self.frame_id = frame_id
        self.total = total
        super().__init__(f"Frame {frame_id!r} fails normalization: {detail} = {total:.9g}")


class MissingFrameError(FeatureError):
    """A requested frame has no row or no prediction"""

    def __init__(self, frame_id: str, where: str = ""):
        self.frame_id = frame_id
        location = f" in {where}" if where else ""
        super().__init__(f"Frame {frame_id!r} missing{location}")


class SplitError(EgoActError):
    """Dataset partitioning cannot satisfy its constraints"""
    pass


class ModelFormatError(EgoActError):
    """Serialized model is unreadable or inconsistent"""
    pass


@contextmanager
def error_context(label: str):
    """Prefix a pipeline stage to any EgoActError raised inside the block"""
    try:
        yield
    except EgoActError as e:
        e.context.insert(0, label)
        raise
