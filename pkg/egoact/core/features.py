"""Feature providers: precomputed files, date/time context, fusion"""

import logging
import math
import struct
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from egoact.core.exceptions import (
    ConfigurationError,
    DimensionMismatchError,
    FeatureError,
    MissingFrameError,
    NormalizationError,
)
from egoact.models.activity import MINUTES_PER_DAY, DatasetManifest, FrameRecord
from egoact.models.features import (
    COLOR_BINS,
    COLOR_CHANNELS,
    DATETIME_DIM,
    FeatureMatrix,
    FeatureRole,
)

logger = logging.getLogger(__name__)

BINARY_MAGIC = b"TFFM"
NORMALIZATION_TOLERANCE = 1e-6

# Named fusion orders
FUSION_RECIPES: dict[str, tuple[FeatureRole, ...]] = {
    "lfe": (FeatureRole.EMBEDDING, FeatureRole.SCORE),
    "castro": (FeatureRole.SCORE, FeatureRole.DATETIME, FeatureRole.COLOR_HISTOGRAM),
    "lfe-datetime": (FeatureRole.EMBEDDING, FeatureRole.SCORE, FeatureRole.DATETIME),
}


def resolve_recipe(name: str) -> tuple[FeatureRole, ...]:
    try:
        return FUSION_RECIPES[name]
    except KeyError:
        known = ", ".join(sorted(FUSION_RECIPES))
        raise ConfigurationError(f"Unknown fusion recipe {name!r} (known: {known})") from None


def validate_rows(role: FeatureRole, frame_ids: Sequence[str], values: np.ndarray) -> None:
    """Check the per-role row invariants"""
    if role == FeatureRole.SCORE:
        for fid, row in zip(frame_ids, values):
            if np.any(row < 0):
                raise NormalizationError(fid, float(row.min()), "minimum entry")
            total = float(row.sum())
            if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
                raise NormalizationError(fid, total)

    elif role == FeatureRole.COLOR_HISTOGRAM:
        expected = COLOR_BINS * COLOR_CHANNELS
        if values.shape[1] != expected:
            raise DimensionMismatchError(expected, values.shape[1], "color histogram")
        blocks = values.reshape(len(frame_ids), COLOR_CHANNELS, COLOR_BINS)
        for fid, channels in zip(frame_ids, blocks):
            if np.any(channels < 0):
                raise NormalizationError(fid, float(channels.min()), "minimum entry")
            for channel, total in enumerate(channels.sum(axis=1)):
                if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
                    raise NormalizationError(fid, float(total), f"channel {channel} sum")

    elif role == FeatureRole.DATETIME:
        if values.shape[1] != DATETIME_DIM:
            raise DimensionMismatchError(DATETIME_DIM, values.shape[1], "date/time features")


def load_features(path: Union[str, Path], role: Optional[FeatureRole] = None) -> FeatureMatrix:
    """
    Load a feature file in text or binary (TFFM) form.

    The text header carries the role; when ``role`` is given it must agree.
    Binary files carry no role, so ``role`` is required for them.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise FeatureError(f"Feature file not found: {path}") from None

    if data[:4] == BINARY_MAGIC:
        if role is None:
            raise FeatureError(f"{path}: binary feature files need an explicit role")
        frame_ids, values = _decode_binary(data, path)
    else:
        header_role, frame_ids, values = _decode_text(data, path)
        if role is not None and header_role != role:
            raise FeatureError(f"{path}: file role {header_role.value!r} but {role.value!r} requested")
        role = header_role

    if len(set(frame_ids)) != len(frame_ids):
        raise FeatureError(f"{path}: duplicate frame_id rows")

    validate_rows(role, frame_ids, values)
    matrix = FeatureMatrix(role=role, frame_ids=tuple(frame_ids), values=values)
    logger.info(f"Loaded {role.value} features {path}: {len(matrix)} rows, dim {matrix.dim}")
    return matrix


def _decode_text(data: bytes, path: Path) -> tuple[FeatureRole, list[str], np.ndarray]:
    lines = data.decode("utf-8").splitlines()
    if not lines:
        raise FeatureError(f"{path}: empty feature file")

    header = dict(token.split("=", 1) for token in lines[0].split() if "=" in token)
    try:
        dim = int(header["dim"])
        role = FeatureRole(header["role"])
    except (KeyError, ValueError):
        raise FeatureError(f"{path}: header must be 'dim=<D> role=<ROLE>', got {lines[0]!r}") from None
    if dim < 1:
        raise FeatureError(f"{path}: dim must be positive")

    frame_ids: list[str] = []
    rows: list[list[float]] = []
    for line_number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) - 1 != dim:
            raise DimensionMismatchError(dim, len(fields) - 1, f"{path} line {line_number} ({fields[0]!r})")
        try:
            rows.append([float(v) for v in fields[1:]])
        except ValueError:
            raise FeatureError(f"{path} line {line_number}: non-numeric value") from None
        frame_ids.append(fields[0])

    values = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    return role, frame_ids, values


def _decode_binary(data: bytes, path: Path) -> tuple[list[str], np.ndarray]:
    try:
        dim, count = struct.unpack_from("<II", data, 4)
        offset = 12
        frame_ids: list[str] = []
        values = np.empty((count, dim), dtype=np.float64)
        for i in range(count):
            (length,) = struct.unpack_from("<I", data, offset)
            offset += 4
            frame_ids.append(data[offset:offset + length].decode("utf-8"))
            offset += length
            values[i] = np.frombuffer(data, dtype="<f8", count=dim, offset=offset)
            offset += 8 * dim
    except (struct.error, ValueError) as e:
        raise FeatureError(f"{path}: truncated or corrupt binary feature file ({e})") from None
    if offset != len(data):
        raise FeatureError(f"{path}: {len(data) - offset} trailing bytes")
    return frame_ids, values


def write_features(matrix: FeatureMatrix, path: Union[str, Path], binary: bool = False) -> None:
    """Write a feature matrix; reals use the shortest round-tripping repr"""
    path = Path(path)
    if binary:
        chunks = [BINARY_MAGIC, struct.pack("<II", matrix.dim, len(matrix))]
        for fid, row in zip(matrix.frame_ids, matrix.values):
            encoded = fid.encode("utf-8")
            chunks.append(struct.pack("<I", len(encoded)))
            chunks.append(encoded)
            chunks.append(np.ascontiguousarray(row, dtype="<f8").tobytes())
        path.write_bytes(b"".join(chunks))
    else:
        lines = [f"dim={matrix.dim} role={matrix.role.value}"]
        for fid, row in zip(matrix.frame_ids, matrix.values):
            lines.append("\t".join([fid, *(repr(float(v)) for v in row)]))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Wrote {matrix.role.value} features {path} ({len(matrix)} rows)")


def datetime_features(frame: FrameRecord) -> np.ndarray:
    """One-hot weekday followed by a cyclic time-of-day encoding"""
    vector = np.zeros(DATETIME_DIM, dtype=np.float64)
    vector[frame.weekday] = 1.0
    angle = 2.0 * math.pi * frame.timestamp / MINUTES_PER_DAY
    vector[7] = math.sin(angle)
    vector[8] = math.cos(angle)
    # sin(pi) and cos(pi/2) are not exactly zero in floating point
    vector[7:] = np.where(np.abs(vector[7:]) < 1e-15, 0.0, vector[7:])
    return vector


def datetime_matrix(manifest: DatasetManifest) -> FeatureMatrix:
    values = np.stack([datetime_features(frame) for frame in manifest.frames])
    return FeatureMatrix(role=FeatureRole.DATETIME, frame_ids=tuple(manifest.frame_ids), values=values)


def fuse(parts: Sequence[FeatureMatrix], frame_ids: Iterable[str]) -> FeatureMatrix:
    """
    Concatenate part rows per frame, in part order.

    The fused signature is the concatenation of the parts' signatures, so
    fusing a fused matrix is the same as fusing its parts directly.
    """
    if not parts:
        raise FeatureError("Nothing to fuse")
    frame_ids = list(frame_ids)

    blocks = []
    for part in parts:
        missing = next((fid for fid in frame_ids if fid not in part), None)
        if missing is not None:
            raise MissingFrameError(missing, f"{part.role.value} features (dim {part.dim})")
        blocks.append(part.rows(frame_ids))

    signature = tuple(entry for part in parts for entry in part.signature)
    role = parts[0].role if len(parts) == 1 else FeatureRole.EMBEDDING
    return FeatureMatrix(
        role=role,
        frame_ids=tuple(frame_ids),
        values=np.concatenate(blocks, axis=1),
        signature=signature,
    )
