"""Phase 2: temporal models over sliding windows within days"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from egoact.config import PipelineConfig, dump_pipeline_config, flatten_config, settings
from egoact.core.codecs import save_forest, save_recurrent
from egoact.core.exceptions import ConfigurationError, error_context
from egoact.core.forest import ForestModel, train_forest
from egoact.core.manifest import counts_from_labels
from egoact.core.metrics import MetricsReport, class_weights, evaluate
from egoact.core.recurrent import RecurrentModel, predict_windows, train, write_training_log
from egoact.core.temporal import (
    Window,
    aggregate_per_frame,
    coverage_counts,
    many_to_many_labels,
    many_to_one_label,
    sliding_windows,
    window_feature_matrix,
    window_sequences,
    windows_ending_at_each_frame,
)
from egoact.models.activity import DaySegment
from egoact.models.features import FeatureMatrix
from egoact.services.dataset_service import DatasetService
from egoact.services.report_service import fmt, write_report

logger = logging.getLogger(__name__)

MODES = ("many_to_one_forest", "recurrent")


@dataclass
class TemporalResult:
    mode: str
    model: Union[ForestModel, RecurrentModel]
    report: MetricsReport
    n_train_windows: int
    predictions: dict[str, np.ndarray]


class TemporalService:
    """Builds windows from a day-level split and trains one temporal model"""

    def __init__(self, config: PipelineConfig, n_jobs: Optional[int] = None):
        self.config = config
        self.n_jobs = n_jobs or settings.N_JOBS
        self.data = DatasetService(config)

    @property
    def timestep(self) -> int:
        return self.config.temporal.timestep

    def training_windows(self, segments: list[DaySegment]) -> list[Window]:
        """Sliding windows per training day; without padding, short days are skipped"""
        temporal = self.config.temporal
        n_frames = sum(len(segment) for segment in segments)
        if not temporal.pad:
            longest = max(len(segment) for segment in segments)
            if self.timestep > longest:
                raise ConfigurationError(
                    f"timestep {self.timestep} exceeds the longest training day ({longest} frames) with padding disabled"
                )
            segments = [segment for segment in segments if len(segment) >= self.timestep]
        windows = [w for segment in segments for w in sliding_windows(segment, self.timestep, temporal.stride)]
        covered = coverage_counts(windows)
        logger.info(
            f"{len(windows)} training windows (T={self.timestep}, stride={temporal.stride}) "
            f"covering {len(covered)} of {n_frames} frames"
        )
        return windows

    def _day_split(self) -> tuple[list[DaySegment], list[DaySegment], list[str]]:
        splits = self.data.splits()
        if len(splits) != 1:
            raise ConfigurationError("Temporal training needs a single train/test split; pick one fold")
        split = splits[0]
        train_segments = self.data.whole_day_segments(split.train, "train")
        test_segments = self.data.whole_day_segments(split.test, "test")
        return train_segments, test_segments, split.test

    def run(self, mode: str) -> TemporalResult:
        if mode not in MODES:
            raise ConfigurationError(f"Unknown temporal mode {mode!r} (expected one of {', '.join(MODES)})")
        out_dir = Path(self.config.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "effective-config.ini").write_text(dump_pipeline_config(self.config), encoding="utf-8")

        train_segments, test_segments, test_ids = self._day_split()
        if mode == "many_to_one_forest":
            result = self._many_to_one(train_segments, test_segments, test_ids)
            save_forest(result.model, out_dir / "model.bin")
        else:
            result = self._recurrent(train_segments, test_segments, test_ids)
            save_recurrent(result.model, out_dir / "model.bin")
            write_training_log(result.model.history, out_dir / "training-log.tsv")
        write_report(result.report, out_dir, f"{mode} T={self.timestep}", self.config)
        return result

    def _many_to_one(
        self,
        train_segments: list[DaySegment],
        test_segments: list[DaySegment],
        test_ids: list[str],
    ) -> TemporalResult:
        manifest = self.data.manifest
        features = self.data.features
        windows = self.training_windows(train_segments)
        X = window_feature_matrix(windows, features)
        y = np.array([int(many_to_one_label(w, manifest.label_map)) for w in windows], dtype=np.int64)

        with error_context("forest"):
            model = train_forest(
                X,
                y,
                self.config.forest,
                n_jobs=self.n_jobs,
                timestep=self.timestep,
                fusion_signature=features.signature,
            )

        predictions = predict_frames_many_to_one(model, features, test_segments)
        report = self._evaluate(predictions, test_ids, len(windows))
        return TemporalResult("many_to_one_forest", model, report, len(windows), predictions)

    def _recurrent(
        self,
        train_segments: list[DaySegment],
        test_segments: list[DaySegment],
        test_ids: list[str],
    ) -> TemporalResult:
        manifest = self.data.manifest
        scores = self.data.scores
        windows = self.training_windows(train_segments)
        inputs = window_sequences(windows, scores)
        targets = [many_to_many_labels(w, manifest.label_map) for w in windows]

        weights = None
        if self.config.recurrent.class_weighting:
            weights = class_weights(counts_from_labels(np.concatenate(targets)))

        with error_context("recurrent"):
            model = train(list(zip(inputs, targets)), self.config.recurrent, class_weights=weights)

        predictions = predict_frames_recurrent(
            model, scores, test_segments, self.timestep, self.config.temporal.aggregate
        )
        report = self._evaluate(predictions, test_ids, len(windows))
        baseline = evaluate(
            manifest.labels_for(test_ids),
            np.argmax(scores.rows(test_ids), axis=1),
            active_only=self.config.active_only,
        )
        report.notes.append(("per_frame_score_accuracy", fmt(baseline.accuracy)))
        if model.history:
            report.notes.append(("final_train_loss", fmt(model.history[-1].mean_loss)))
        return TemporalResult("recurrent", model, report, len(windows), predictions)

    def _evaluate(self, predictions: dict[str, np.ndarray], test_ids: list[str], n_windows: int) -> MetricsReport:
        manifest = self.data.manifest
        predicted = np.array([int(np.argmax(predictions[fid])) for fid in test_ids], dtype=np.int64)
        report = evaluate(
            manifest.labels_for(test_ids),
            predicted,
            active_only=self.config.active_only,
            config=flatten_config(self.config),
        )
        report.notes.extend([
            ("timestep", str(self.timestep)),
            ("train_windows", str(n_windows)),
            ("test_frames", str(len(test_ids))),
        ])
        return report


def predict_frames_many_to_one(
    model: ForestModel,
    features: FeatureMatrix,
    segments: list[DaySegment],
) -> dict[str, np.ndarray]:
    """Each frame is scored by the (padded) window ending at it"""
    windows = [w for segment in segments for w in windows_ending_at_each_frame(segment, model.timestep)]
    proba = model.predict_proba(window_feature_matrix(windows, features))
    return {window.last_frame: row for window, row in zip(windows, proba)}


def predict_frames_recurrent(
    model: RecurrentModel,
    scores: FeatureMatrix,
    segments: list[DaySegment],
    timestep: int,
    aggregate: str = "mean",
) -> dict[str, np.ndarray]:
    """
    Per-frame distributions from overlapping windows.

    ``mean`` uses stride-1 windows so every frame is covered; ``last`` uses
    the window ending at each frame and keeps its final step.
    """
    predictions: dict[str, np.ndarray] = {}
    for segment in segments:
        if aggregate == "last":
            windows = windows_ending_at_each_frame(segment, timestep)
        else:
            windows = sliding_windows(segment, timestep, 1)
        outputs = predict_windows(model, window_sequences(windows, scores))
        predictions.update(aggregate_per_frame(zip(windows, outputs), aggregate, segment.frame_ids))
    return predictions
