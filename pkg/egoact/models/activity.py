"""Activity taxonomy, frames, day segments and dataset manifests"""

from collections import defaultdict
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Iterable

import numpy as np

from egoact.core.exceptions import ManifestError

# Canonical order of the results tables; index <-> name is fixed for every run
CATEGORY_NAMES: tuple[str, ...] = (
    "Public Transport",
    "Driving",
    "Walking outdoor",
    "Walking indoor",
    "Biking",
    "Drinking together",
    "Drinking/eating alone",
    "Eating together",
    "Socializing",
    "Attending a seminar",
    "Meeting",
    "Reading",
    "TV",
    "Cleaning and chores",
    "Working",
    "Cooking",
    "Shopping",
    "Talking",
    "Resting",
    "Mobile",
    "Plane",
)

N_CATEGORIES = len(CATEGORY_NAMES)
MINUTES_PER_DAY = 1440

_NAME_TO_INDEX = {name: index for index, name in enumerate(CATEGORY_NAMES)}


class ActivityCategory(IntEnum):
    """The 21 daily-activity categories"""

    PUBLIC_TRANSPORT = 0
    DRIVING = 1
    WALKING_OUTDOOR = 2
    WALKING_INDOOR = 3
    BIKING = 4
    DRINKING_TOGETHER = 5
    DRINKING_EATING_ALONE = 6
    EATING_TOGETHER = 7
    SOCIALIZING = 8
    ATTENDING_A_SEMINAR = 9
    MEETING = 10
    READING = 11
    TV = 12
    CLEANING_AND_CHORES = 13
    WORKING = 14
    COOKING = 15
    SHOPPING = 16
    TALKING = 17
    RESTING = 18
    MOBILE = 19
    PLANE = 20

    @property
    def label(self) -> str:
        """Canonical display name"""
        return CATEGORY_NAMES[self.value]

    @classmethod
    def from_label(cls, name: str) -> "ActivityCategory":
        try:
            return cls(_NAME_TO_INDEX[name])
        except KeyError:
            raise ValueError(f"Unknown activity category {name!r}") from None


@dataclass(frozen=True)
class FrameRecord:
    """A timestamped, labeled photo-stream frame"""
    frame_id: str
    user_id: str
    day_id: str
    seq_index: int
    timestamp: int  # minutes since midnight
    weekday: int  # 0=Monday
    label: ActivityCategory

    def __post_init__(self):
        if not self.frame_id:
            raise ManifestError("Empty frame_id")
        if self.seq_index < 0:
            raise ManifestError(f"Negative seq_index {self.seq_index}", record=self.frame_id)
        if not 0 <= self.timestamp < MINUTES_PER_DAY:
            raise ManifestError(f"Timestamp {self.timestamp} outside 0..1439", record=self.frame_id)
        if not 0 <= self.weekday <= 6:
            raise ManifestError(f"Weekday {self.weekday} outside 0..6", record=self.frame_id)

    @property
    def day_key(self) -> tuple[str, str]:
        return (self.user_id, self.day_id)


@dataclass(frozen=True)
class DaySegment:
    """Ordered frames of one user on one day"""
    user_id: str
    day_id: str
    frames: tuple[FrameRecord, ...]

    def __post_init__(self):
        if not self.frames:
            raise ManifestError(f"Empty day segment {self.user_id}/{self.day_id}")

        previous = None
        for position, frame in enumerate(self.frames):
            if frame.day_key != self.key:
                raise ManifestError(
                    f"Frame belongs to {frame.user_id}/{frame.day_id}, not {self.user_id}/{self.day_id}",
                    record=frame.frame_id,
                )
            if frame.seq_index != position:
                reason = "duplicate" if previous and frame.seq_index == previous.seq_index else "gap in"
                raise ManifestError(
                    f"{reason} seq_index at index {position} of day {self.user_id}/{self.day_id}",
                    record=frame.frame_id,
                )
            if previous is not None and frame.timestamp <= previous.timestamp:
                raise ManifestError(
                    f"Timestamps not strictly increasing ({previous.timestamp} then {frame.timestamp})",
                    record=frame.frame_id,
                )
            previous = frame

    @property
    def key(self) -> tuple[str, str]:
        return (self.user_id, self.day_id)

    @property
    def frame_ids(self) -> list[str]:
        return [frame.frame_id for frame in self.frames]

    @property
    def labels(self) -> np.ndarray:
        return np.array([int(frame.label) for frame in self.frames], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class DatasetManifest:
    """Validated collection of frames grouped into day segments.

    Frames are held in canonical order: segments sorted by (user_id, day_id),
    frames within a segment by seq_index. Build instances with ``from_frames``.
    """
    frames: tuple[FrameRecord, ...]
    categories: tuple[ActivityCategory, ...] = field(default=tuple(ActivityCategory))

    @classmethod
    def from_frames(
        cls,
        frames: Iterable[FrameRecord],
        categories: Iterable[ActivityCategory] = tuple(ActivityCategory),
    ) -> "DatasetManifest":
        frames = list(frames)
        categories = tuple(categories)
        if not frames:
            raise ManifestError("empty manifest")

        declared = set(categories)
        seen: set[str] = set()
        grouped: dict[tuple[str, str], list[FrameRecord]] = defaultdict(list)
        for frame in frames:
            if frame.frame_id in seen:
                raise ManifestError("Duplicate frame_id", record=frame.frame_id)
            seen.add(frame.frame_id)
            if frame.label not in declared:
                raise ManifestError(f"Label {frame.label.label!r} not declared", record=frame.frame_id)
            grouped[frame.day_key].append(frame)

        ordered: list[FrameRecord] = []
        for key in sorted(grouped):
            day_frames = sorted(grouped[key], key=lambda f: f.seq_index)
            # DaySegment validates gaps, duplicates and timestamp order
            DaySegment(key[0], key[1], tuple(day_frames))
            ordered.extend(day_frames)

        return cls(frames=tuple(ordered), categories=categories)

    @cached_property
    def segments(self) -> tuple[DaySegment, ...]:
        grouped: dict[tuple[str, str], list[FrameRecord]] = defaultdict(list)
        for frame in self.frames:
            grouped[frame.day_key].append(frame)
        return tuple(DaySegment(key[0], key[1], tuple(grouped[key])) for key in sorted(grouped))

    @cached_property
    def index(self) -> dict[str, int]:
        """frame_id -> position in canonical order"""
        return {frame.frame_id: position for position, frame in enumerate(self.frames)}

    @cached_property
    def label_map(self) -> dict[str, ActivityCategory]:
        return {frame.frame_id: frame.label for frame in self.frames}

    @property
    def frame_ids(self) -> list[str]:
        return [frame.frame_id for frame in self.frames]

    @property
    def labels(self) -> np.ndarray:
        return np.array([int(frame.label) for frame in self.frames], dtype=np.int64)

    @property
    def day_keys(self) -> list[tuple[str, str]]:
        return [segment.key for segment in self.segments]

    @property
    def users(self) -> list[str]:
        return sorted({frame.user_id for frame in self.frames})

    def label_of(self, frame_id: str) -> ActivityCategory:
        return self.label_map[frame_id]

    def labels_for(self, frame_ids: Iterable[str]) -> np.ndarray:
        return np.array([int(self.label_map[fid]) for fid in frame_ids], dtype=np.int64)

    def ordered(self, frame_ids: Iterable[str]) -> list[str]:
        """Sort arbitrary frame ids into canonical order"""
        return sorted(frame_ids, key=self.index.__getitem__)

    def __len__(self) -> int:
        return len(self.frames)
