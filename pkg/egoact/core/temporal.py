"""Sliding windows within day segments and per-frame aggregation"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from egoact.core.exceptions import DimensionMismatchError, MissingFrameError
from egoact.models.activity import ActivityCategory, DaySegment
from egoact.models.features import FeatureMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Window:
    """T consecutive frames of one day; a short day is prefix-padded with its first frame"""
    user_id: str
    day_id: str
    start: int  # seq_index of the first real frame
    timestep: int
    frame_ids: tuple[str, ...]

    def __post_init__(self):
        if len(self.frame_ids) != self.timestep:
            raise DimensionMismatchError(self.timestep, len(self.frame_ids), "window length")

    @property
    def last_frame(self) -> str:
        return self.frame_ids[-1]


def window_ending_at(segment: DaySegment, end: int, timestep: int) -> Window:
    """Window whose last frame is ``end``; positions before the day start repeat frame 0"""
    if not 0 <= end < len(segment):
        raise IndexError(f"Frame position {end} outside day of {len(segment)} frames")
    ids = segment.frame_ids
    positions = [max(0, p) for p in range(end - timestep + 1, end + 1)]
    return Window(
        user_id=segment.user_id,
        day_id=segment.day_id,
        start=positions[0],
        timestep=timestep,
        frame_ids=tuple(ids[p] for p in positions),
    )


def sliding_windows(segment: DaySegment, timestep: int, stride: int = 1) -> list[Window]:
    """
    Windows starting at 0, stride, 2*stride, ... while start + T <= N.

    A day shorter than T yields a single padded window ending at its last frame.
    """
    if timestep < 1 or stride < 1:
        raise ValueError(f"timestep and stride must be >= 1 (got {timestep}, {stride})")
    n = len(segment)
    if n < timestep:
        return [window_ending_at(segment, n - 1, timestep)]
    ids = segment.frame_ids
    return [
        Window(segment.user_id, segment.day_id, start, timestep, tuple(ids[start:start + timestep]))
        for start in range(0, n - timestep + 1, stride)
    ]


def windows_ending_at_each_frame(segment: DaySegment, timestep: int) -> list[Window]:
    """One window per frame, ending at it; the first T-1 are padded"""
    return [window_ending_at(segment, end, timestep) for end in range(len(segment))]


def concat_window_features(window: Window, features: FeatureMatrix) -> np.ndarray:
    """Window rows concatenated in temporal order, length T * dim"""
    return features.rows(window.frame_ids).reshape(-1)


def window_feature_matrix(windows: Sequence[Window], features: FeatureMatrix) -> np.ndarray:
    """(len(windows), T * dim) design matrix"""
    if not windows:
        return np.zeros((0, 0))
    return np.stack([concat_window_features(window, features) for window in windows])


def window_sequences(windows: Sequence[Window], features: FeatureMatrix) -> np.ndarray:
    """(len(windows), T, dim) stack of per-step inputs"""
    return np.stack([features.rows(window.frame_ids) for window in windows])


def many_to_one_label(window: Window, labels: Mapping[str, ActivityCategory]) -> ActivityCategory:
    """The label of the window's last frame"""
    try:
        return labels[window.last_frame]
    except KeyError:
        raise MissingFrameError(window.last_frame, "labels") from None


def many_to_many_labels(window: Window, labels: Mapping[str, ActivityCategory]) -> np.ndarray:
    try:
        return np.array([int(labels[fid]) for fid in window.frame_ids], dtype=np.int64)
    except KeyError as e:
        raise MissingFrameError(e.args[0], "labels") from None


def aggregate_per_frame(
    window_predictions: Iterable[tuple[Window, np.ndarray]],
    mode: str = "mean",
    frame_ids: Iterable[str] = (),
) -> dict[str, np.ndarray]:
    """
    Combine per-step predictions of overlapping windows into one vector per frame.

    ``mean`` averages every vector emitted for a frame. ``last`` keeps only the
    prediction at each window's final step, which pairs with windows ending at
    every frame. A padded window contributes once per distinct frame, at the
    last position holding it. Frames listed in ``frame_ids`` must be covered.
    """
    if mode not in ("mean", "last"):
        raise ValueError(f"aggregate mode must be 'mean' or 'last', got {mode!r}")

    emitted: dict[str, list[tuple[tuple, np.ndarray]]] = defaultdict(list)
    for window, predictions in window_predictions:
        predictions = np.asarray(predictions, dtype=np.float64)
        if predictions.shape[0] != window.timestep:
            raise DimensionMismatchError(window.timestep, predictions.shape[0], "window predictions")
        order_key = (window.user_id, window.day_id, window.start, window.frame_ids)
        if mode == "last":
            emitted[window.last_frame].append((order_key, predictions[-1]))
            continue
        # repeated padding positions collapse onto their final occurrence
        final_position = {fid: position for position, fid in enumerate(window.frame_ids)}
        for fid, position in final_position.items():
            emitted[fid].append((order_key, predictions[position]))

    for fid in frame_ids:
        if fid not in emitted:
            raise MissingFrameError(fid, "window coverage")

    # summing in window-key order keeps the result bit-identical under any input order
    aggregated = {}
    for fid in sorted(emitted):
        vectors = [vector for _, vector in sorted(emitted[fid], key=lambda item: item[0])]
        aggregated[fid] = np.sum(vectors, axis=0) / len(vectors)
    return aggregated


def coverage_counts(windows: Iterable[Window]) -> dict[str, int]:
    """Number of windows holding each frame (padding counted once per window)"""
    counts: dict[str, int] = defaultdict(int)
    for window in windows:
        for fid in set(window.frame_ids):
            counts[fid] += 1
    return dict(counts)
