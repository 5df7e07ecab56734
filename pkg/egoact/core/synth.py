"""Synthetic Markov photo-streams with noisy embedding and score emissions"""

import logging
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, field_validator, model_validator
from scipy.special import softmax

from egoact.core.exceptions import ManifestError
from egoact.models.activity import MINUTES_PER_DAY, N_CATEGORIES, ActivityCategory, DatasetManifest, FrameRecord
from egoact.models.features import COLOR_BINS, COLOR_CHANNELS, FeatureMatrix, FeatureRole

logger = logging.getLogger(__name__)

# extra generator streams, kept apart from the per-day (seed, user, day) streams
_MEANS_STREAM = (0x6D65616E,)
_COLOR_PROFILE_STREAM = (0x636F6C72,)
_COLOR_CONCENTRATION = 50.0


class StreamSpec(BaseModel):
    """Shape and noise of a synthetic photo-stream"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_users: PositiveInt = 3
    days_per_user: PositiveInt = 5
    frames_per_day: PositiveInt = 300
    persistence: float = Field(default=0.95, gt=0.0, le=1.0)
    embedding_dim: int = Field(default=N_CATEGORIES, ge=2)
    noise: float = Field(default=0.5, ge=0.0)
    separation: float = Field(default=1.0, gt=0.0)
    score_temperature: float = Field(default=1.0, gt=0.0)
    label_bias: Optional[tuple[float, ...]] = None
    start_minute: int = Field(default=420, ge=0, lt=MINUTES_PER_DAY)
    minutes_per_frame: PositiveInt = 1
    rng_seed: int = Field(default=0, ge=0, lt=2**64)

    @field_validator("label_bias")
    @classmethod
    def _check_bias(cls, value):
        if value is None:
            return value
        if len(value) != N_CATEGORIES:
            raise ValueError(f"label_bias needs {N_CATEGORIES} weights, got {len(value)}")
        if any(w < 0 for w in value) or sum(value) <= 0:
            raise ValueError("label_bias weights must be non-negative with a positive sum")
        return value

    @model_validator(mode="after")
    def _day_fits(self):
        last = self.start_minute + (self.frames_per_day - 1) * self.minutes_per_frame
        if last >= MINUTES_PER_DAY:
            raise ValueError(
                f"{self.frames_per_day} frames every {self.minutes_per_frame} min from minute "
                f"{self.start_minute} run past midnight"
            )
        return self

    @property
    def stationary_weights(self) -> np.ndarray:
        weights = np.ones(N_CATEGORIES) if self.label_bias is None else np.asarray(self.label_bias, dtype=np.float64)
        return weights / weights.sum()


def transition_matrix(spec: StreamSpec) -> np.ndarray:
    """Persistence on the diagonal, the rest spread over other categories by bias weight"""
    weights = spec.stationary_weights
    matrix = np.zeros((N_CATEGORIES, N_CATEGORIES))
    for i in range(N_CATEGORIES):
        others = weights.copy()
        others[i] = 0.0
        if others.sum() > 0:
            matrix[i] = (1.0 - spec.persistence) * others / others.sum()
            matrix[i, i] = spec.persistence
        else:
            matrix[i, i] = 1.0
    return matrix


def category_means(spec: StreamSpec) -> np.ndarray:
    """(21, D) emission means: scaled one-hots when D >= 21, seeded Gaussians otherwise"""
    if spec.embedding_dim >= N_CATEGORIES:
        means = np.zeros((N_CATEGORIES, spec.embedding_dim))
        means[np.arange(N_CATEGORIES), np.arange(N_CATEGORIES)] = spec.separation
        return means
    rng = np.random.default_rng([spec.rng_seed, *_MEANS_STREAM])
    return spec.separation * rng.normal(size=(N_CATEGORIES, spec.embedding_dim))


def _day_rng(spec: StreamSpec, user: int, day: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng([spec.rng_seed, user, day, stream])


def _day_labels(spec: StreamSpec, matrix: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    labels = np.empty(spec.frames_per_day, dtype=np.int64)
    labels[0] = rng.choice(N_CATEGORIES, p=spec.stationary_weights)
    for t in range(1, spec.frames_per_day):
        labels[t] = rng.choice(N_CATEGORIES, p=matrix[labels[t - 1]])
    return labels


def generate(spec: StreamSpec) -> tuple[DatasetManifest, FeatureMatrix, FeatureMatrix]:
    """
    Labels follow the Markov chain within each day, restarting from the
    stationary weights every day. Embedding rows are the category mean plus
    N(0, noise^2); score rows are softmax((onehot + noise * eps) / temperature).
    """
    matrix = transition_matrix(spec)
    means = category_means(spec)

    frames: list[FrameRecord] = []
    embedding_rows = []
    score_rows = []
    for user in range(spec.n_users):
        for day in range(spec.days_per_user):
            rng = _day_rng(spec, user, day)
            labels = _day_labels(spec, matrix, rng)
            embedding_rows.append(means[labels] + spec.noise * rng.normal(size=(labels.size, spec.embedding_dim)))
            logits = np.eye(N_CATEGORIES)[labels] + spec.noise * rng.normal(size=(labels.size, N_CATEGORIES))
            score_rows.append(softmax(logits / spec.score_temperature, axis=1))
            for seq, label in enumerate(labels):
                frames.append(FrameRecord(
                    frame_id=f"u{user:02d}_d{day:02d}_{seq:04d}",
                    user_id=f"user{user:02d}",
                    day_id=f"day{day:02d}",
                    seq_index=seq,
                    timestamp=spec.start_minute + seq * spec.minutes_per_frame,
                    weekday=day % 7,
                    label=ActivityCategory(int(label)),
                ))

    manifest = DatasetManifest.from_frames(frames)
    frame_ids = tuple(frame.frame_id for frame in frames)
    embedding = FeatureMatrix(FeatureRole.EMBEDDING, frame_ids, np.concatenate(embedding_rows))
    score = FeatureMatrix(FeatureRole.SCORE, frame_ids, np.concatenate(score_rows))
    logger.info(
        f"Generated {len(manifest)} frames ({spec.n_users} users x {spec.days_per_user} days x "
        f"{spec.frames_per_day}), persistence={spec.persistence}, noise={spec.noise}"
    )
    return manifest, embedding, score


def generate_color(spec: StreamSpec, manifest: DatasetManifest) -> FeatureMatrix:
    """Per-channel 10-bin histograms drawn around a per-category profile"""
    profile_rng = np.random.default_rng([spec.rng_seed, *_COLOR_PROFILE_STREAM])
    profiles = profile_rng.dirichlet(np.ones(COLOR_BINS), size=(N_CATEGORIES, COLOR_CHANNELS))

    user_index = {user: i for i, user in enumerate(manifest.users)}
    rows = []
    for segment in manifest.segments:
        day = int(segment.day_id.removeprefix("day")) if segment.day_id.startswith("day") else 0
        rng = _day_rng(spec, user_index[segment.user_id], day, stream=1)
        for label in segment.labels:
            channels = [
                rng.dirichlet(_COLOR_CONCENTRATION * profiles[label, channel] + 1e-3)
                for channel in range(COLOR_CHANNELS)
            ]
            rows.append(np.concatenate(channels))
    return FeatureMatrix(FeatureRole.COLOR_HISTOGRAM, tuple(manifest.frame_ids), np.stack(rows))


def empirical_transition_matrix(manifest: DatasetManifest) -> tuple[np.ndarray, np.ndarray]:
    """Maximum-likelihood transitions from within-day consecutive pairs, plus empty-row flags"""
    counts = np.zeros((N_CATEGORIES, N_CATEGORIES), dtype=np.float64)
    for segment in manifest.segments:
        labels = segment.labels
        np.add.at(counts, (labels[:-1], labels[1:]), 1.0)
    if counts.sum() == 0:
        raise ManifestError("No consecutive frame pairs within any day")
    row_sums = counts.sum(axis=1, keepdims=True)
    matrix = np.divide(counts, row_sums, out=np.zeros_like(counts), where=row_sums > 0)
    return matrix, row_sums[:, 0] == 0
