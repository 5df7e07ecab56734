"""Phase 1: per-frame random forest over fused features"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from egoact.config import PipelineConfig, dump_pipeline_config, flatten_config, settings
from egoact.core.codecs import save_forest
from egoact.core.exceptions import error_context
from egoact.core.features import write_features
from egoact.core.forest import ForestModel, train_forest
from egoact.core.metrics import MetricsReport, evaluate, mean_reports
from egoact.models.features import FeatureMatrix, FeatureRole
from egoact.services.dataset_service import DatasetService, SplitView
from egoact.services.report_service import fmt, write_report

logger = logging.getLogger(__name__)


@dataclass
class EnsembleRun:
    """Outcome of one split"""
    split: SplitView
    model: ForestModel
    report: MetricsReport
    scores: FeatureMatrix


@dataclass
class EnsembleResult:
    runs: list[EnsembleRun] = field(default_factory=list)
    summary: dict[str, float] = field(default_factory=dict)


class EnsembleService:
    """Trains and evaluates the per-frame ensemble and caches its scores"""

    def __init__(self, config: PipelineConfig, n_jobs: Optional[int] = None):
        self.config = config
        self.n_jobs = n_jobs or settings.N_JOBS
        self.data = DatasetService(config)

    def train_split(self, split: SplitView) -> EnsembleRun:
        manifest = self.data.manifest
        features = self.data.features
        labels = manifest.labels_for(split.train)

        with error_context("forest"):
            model = train_forest(
                features.rows(split.train),
                labels,
                self.config.forest,
                compute_oob=self.config.train_scores == "oob",
                n_jobs=self.n_jobs,
                fusion_signature=features.signature,
            )

        test_proba = model.predict_proba(features.rows(split.test))
        report = evaluate(
            manifest.labels_for(split.test),
            np.argmax(test_proba, axis=1),
            active_only=self.config.active_only,
            config=flatten_config(self.config),
        )
        report.notes.extend([
            ("split", split.name),
            ("train_frames", str(len(split.train))),
            ("test_frames", str(len(split.test))),
            ("max_depth_realized", str(model.max_depth_realized)),
            ("train_scores", self.config.train_scores),
        ])
        return EnsembleRun(split, model, report, self._score_cache(model, split))

    def _score_cache(self, model: ForestModel, split: SplitView) -> FeatureMatrix:
        """Scores for every frame: out-of-bag (or in-sample) for training rows, predictions elsewhere"""
        features = self.data.features
        frame_ids = self.data.manifest.frame_ids
        values = model.predict_proba(features.values)
        positions = [self.data.manifest.index[fid] for fid in split.train]
        if model.oob_proba is not None:
            values[positions] = model.oob_proba
        return FeatureMatrix(FeatureRole.SCORE, tuple(frame_ids), values)

    def run(self, fold: Optional[int] = None) -> EnsembleResult:
        """Train on each split, writing model.bin, scores.tsv and report.txt per split"""
        out_dir = Path(self.config.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "effective-config.ini").write_text(dump_pipeline_config(self.config), encoding="utf-8")

        splits = self.data.splits(fold)
        result = EnsembleResult()
        for split in splits:
            run_dir = out_dir if len(splits) == 1 else out_dir / split.name
            logger.info(f"Training ensemble on {split.name}: {len(split.train)} train / {len(split.test)} test frames")
            run = self.train_split(split)
            run_dir.mkdir(parents=True, exist_ok=True)
            save_forest(run.model, run_dir / "model.bin")
            write_features(run.scores, run_dir / "scores.tsv")
            write_report(run.report, run_dir, f"ensemble {split.name}", self.config)
            result.runs.append(run)

        result.summary = mean_reports([run.report for run in result.runs])
        if len(splits) > 1:
            lines = [f"# egoact cross-validation summary: {len(splits)} folds", "[mean]"]
            lines += [f"{key}={fmt(value)}" for key, value in result.summary.items()]
            lines += ["", "[folds]", "fold\taccuracy\tmacro_f1"]
            lines += [f"{run.split.name}\t{fmt(run.report.accuracy)}\t{fmt(run.report.macro_f1)}" for run in result.runs]
            (out_dir / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
            logger.info(f"Cross-validated accuracy {result.summary['accuracy']:.4f} over {len(splits)} folds")
        return result
