"""Shared fixtures: small hand-built manifests and synthetic streams"""

from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import pytest

from egoact.core.features import write_features
from egoact.core.manifest import write_manifest
from egoact.core.synth import StreamSpec, generate
from egoact.models.activity import ActivityCategory, DatasetManifest, FrameRecord
from egoact.models.features import FeatureMatrix, FeatureRole

DayLabels = Mapping[tuple[str, str], Sequence[int]]


def build_manifest(days: DayLabels, weekday: int = 0) -> DatasetManifest:
    """One frame per minute from 08:00, frame ids ``<user>_<day>_<seq>``"""
    frames = []
    for (user, day), labels in days.items():
        for seq, label in enumerate(labels):
            frames.append(FrameRecord(
                frame_id=f"{user}_{day}_{seq:04d}",
                user_id=user,
                day_id=day,
                seq_index=seq,
                timestamp=480 + seq,
                weekday=weekday,
                label=ActivityCategory(label),
            ))
    return DatasetManifest.from_frames(frames)


def random_embedding(manifest: DatasetManifest, dim: int, seed: int = 0) -> FeatureMatrix:
    rng = np.random.default_rng(seed)
    return FeatureMatrix(
        role=FeatureRole.EMBEDDING,
        frame_ids=tuple(manifest.frame_ids),
        values=rng.normal(size=(len(manifest), dim)),
    )


@pytest.fixture
def manifest_factory() -> Callable[..., DatasetManifest]:
    return build_manifest


@pytest.fixture
def small_manifest() -> DatasetManifest:
    return build_manifest({
        ("u1", "d1"): [0, 0, 2, 2, 2, 14],
        ("u1", "d2"): [14, 14, 3, 3],
        ("u2", "d1"): [7, 7, 0, 0, 0],
    })


@pytest.fixture(scope="session")
def synthetic_stream():
    """A small separable stream: 2 users x 3 days x 60 frames"""
    spec = StreamSpec(
        n_users=2,
        days_per_user=3,
        frames_per_day=60,
        persistence=0.9,
        embedding_dim=8,
        noise=0.3,
        separation=1.0,
        rng_seed=11,
    )
    manifest, embedding, score = generate(spec)
    return spec, manifest, embedding, score


@pytest.fixture
def stream_files(tmp_path: Path, synthetic_stream):
    """The synthetic stream written to disk as manifest and feature files"""
    _, manifest, embedding, score = synthetic_stream
    paths = {
        "manifest": tmp_path / "manifest.tsv",
        "embedding": tmp_path / "embedding.tsv",
        "score": tmp_path / "score.tsv",
    }
    write_manifest(manifest, paths["manifest"])
    write_features(embedding, paths["embedding"])
    write_features(score, paths["score"])
    return paths


@pytest.fixture
def embedding_factory() -> Callable[..., FeatureMatrix]:
    return random_embedding
