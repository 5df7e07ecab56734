"""Manifest reading, writing and label statistics"""

import logging
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from egoact.core.exceptions import ManifestError
from egoact.models.activity import (
    N_CATEGORIES,
    ActivityCategory,
    DatasetManifest,
    FrameRecord,
)

logger = logging.getLogger(__name__)

MANIFEST_FIELDS = ("frame_id", "user_id", "day_id", "seq_index", "timestamp", "weekday", "label_name")
MANIFEST_HEADER = "\t".join(MANIFEST_FIELDS)


def load_manifest(path: Union[str, Path]) -> DatasetManifest:
    """
    Parse a tab-separated manifest file.

    The first non-comment line must be the header; lines starting with ``#``
    and blank lines are skipped.

    Raises:
        ManifestError: on malformed lines (with line number) or invariant violations
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ManifestError(f"Manifest not found: {path}") from None
    except UnicodeDecodeError as e:
        raise ManifestError(f"Manifest is not valid UTF-8: {e}") from None

    frames: list[FrameRecord] = []
    header_seen = False

    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue

        if not header_seen:
            if tuple(line.split("\t")) != MANIFEST_FIELDS:
                raise ManifestError(f"Expected header {MANIFEST_HEADER!r}", line=line_number)
            header_seen = True
            continue

        frames.append(_parse_record(line, line_number))

    if not header_seen:
        raise ManifestError("Missing header line")

    manifest = DatasetManifest.from_frames(frames)
    logger.info(
        f"Loaded manifest {path}: {len(manifest)} frames, "
        f"{len(manifest.segments)} days, {len(manifest.users)} users"
    )
    return manifest


def _parse_record(line: str, line_number: int) -> FrameRecord:
    fields = line.split("\t")
    if len(fields) != len(MANIFEST_FIELDS):
        raise ManifestError(
            f"Expected {len(MANIFEST_FIELDS)} tab-separated fields, found {len(fields)}",
            line=line_number,
        )

    frame_id, user_id, day_id, seq_index, timestamp, weekday, label_name = fields
    try:
        label = ActivityCategory.from_label(label_name)
    except ValueError as e:
        raise ManifestError(str(e), line=line_number, record=frame_id) from None

    try:
        return FrameRecord(
            frame_id=frame_id,
            user_id=user_id,
            day_id=day_id,
            seq_index=int(seq_index),
            timestamp=int(timestamp),
            weekday=int(weekday),
            label=label,
        )
    except ValueError as e:
        raise ManifestError(f"Malformed integer field: {e}", line=line_number, record=frame_id) from None
    except ManifestError as e:
        raise ManifestError(e.message, line=line_number) from None


def write_manifest(manifest: DatasetManifest, path: Union[str, Path]) -> None:
    """Write a manifest in canonical frame order"""
    lines = [MANIFEST_HEADER]
    for frame in manifest.frames:
        lines.append("\t".join([
            frame.frame_id,
            frame.user_id,
            frame.day_id,
            str(frame.seq_index),
            str(frame.timestamp),
            str(frame.weekday),
            frame.label.label,
        ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Wrote manifest {path} ({len(manifest)} frames)")


def counts_from_labels(labels: np.ndarray) -> np.ndarray:
    """Per-category counts of integer labels"""
    labels = np.asarray(labels, dtype=np.int64)
    return np.bincount(labels, minlength=N_CATEGORIES)[:N_CATEGORIES]


def label_counts(frames: Iterable[FrameRecord]) -> np.ndarray:
    return counts_from_labels(np.array([int(frame.label) for frame in frames], dtype=np.int64))


def label_distribution(frames: Iterable[FrameRecord]) -> np.ndarray:
    """Normalized label histogram over the 21 categories"""
    counts = label_counts(frames)
    total = counts.sum()
    if total == 0:
        raise ManifestError("Cannot compute a label distribution of no frames")
    return counts / total
