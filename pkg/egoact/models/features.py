"""Per-frame feature matrices tagged by role"""

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable

import numpy as np

from egoact.core.exceptions import DimensionMismatchError, MissingFrameError

COLOR_BINS = 10
COLOR_CHANNELS = 3
DATETIME_DIM = 9


class FeatureRole(str, Enum):
    """What a feature matrix stands in for"""
    EMBEDDING = "embedding"  # FC1/FC2/GAP/AP layer outputs
    SCORE = "score"  # softmax probabilities
    COLOR_HISTOGRAM = "color_histogram"
    DATETIME = "datetime"


@dataclass(frozen=True)
class FeatureMatrix:
    """Rows of equal width keyed by frame_id.

    ``signature`` lists the (role, dim) parts a fused matrix was built from,
    in concatenation order; a plain matrix has a single part.
    """
    role: FeatureRole
    frame_ids: tuple[str, ...]
    values: np.ndarray = field(repr=False, compare=False)
    signature: tuple[tuple[FeatureRole, int], ...] = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("Feature values must be a 2-D array")
        if values.shape[0] != len(self.frame_ids):
            raise DimensionMismatchError(len(self.frame_ids), values.shape[0], "feature row count")
        if values.shape[1] < 1:
            raise DimensionMismatchError(1, values.shape[1], "feature dimension")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "frame_ids", tuple(self.frame_ids))
        if not self.signature:
            object.__setattr__(self, "signature", ((self.role, values.shape[1]),))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @cached_property
    def index(self) -> dict[str, int]:
        return {fid: position for position, fid in enumerate(self.frame_ids)}

    def __contains__(self, frame_id: str) -> bool:
        return frame_id in self.index

    def __len__(self) -> int:
        return len(self.frame_ids)

    def rows(self, frame_ids: Iterable[str]) -> np.ndarray:
        """Stack rows for frame_ids, in the given order"""
        positions = []
        for fid in frame_ids:
            position = self.index.get(fid)
            if position is None:
                raise MissingFrameError(fid, f"{self.role.value} features")
            positions.append(position)
        return self.values[np.asarray(positions, dtype=np.int64)].reshape(len(positions), self.dim)

    def equals(self, other: "FeatureMatrix") -> bool:
        return (
            self.role == other.role
            and self.frame_ids == other.frame_ids
            and self.signature == other.signature
            and np.array_equal(self.values, other.values)
        )
