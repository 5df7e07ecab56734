"""Validation accuracy as a function of the number of trees"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from egoact.config import PipelineConfig, dump_pipeline_config, settings
from egoact.core.exceptions import ConfigurationError, SplitError, error_context
from egoact.core.forest import train_forest
from egoact.services.dataset_service import DatasetService
from egoact.services.report_service import fmt, render

logger = logging.getLogger(__name__)


@dataclass
class SweepRow:
    n_estimators: int
    mean_accuracy: float
    fold_accuracy: list[float]
    plateau: bool = False


class SweepService:
    """
    Trains the largest forest once per fold and scores its prefixes, which are
    exactly the forests smaller counts would have grown with the same seed.
    """

    def __init__(self, config: PipelineConfig, n_jobs: Optional[int] = None):
        self.config = config
        self.n_jobs = n_jobs or settings.N_JOBS
        self.data = DatasetService(config)

    def run(self, tree_counts: Sequence[int], plateau_tolerance: float = 0.005) -> list[SweepRow]:
        counts = self._unique_counts(tree_counts)
        splits = self.data.splits()
        if any(not split.validation for split in splits):
            raise SplitError("The tree sweep needs a fold plan with validation sets")

        manifest = self.data.manifest
        features = self.data.features
        largest = max(counts)
        per_fold: list[list[float]] = []
        max_depth = 0
        for split in splits:
            logger.info(f"Sweep {split.name}: growing {largest} trees on {len(split.train)} frames")
            with error_context(split.name):
                model = train_forest(
                    features.rows(split.train),
                    manifest.labels_for(split.train),
                    self.config.forest.model_copy(update={"n_estimators": largest}),
                    n_jobs=self.n_jobs,
                    fusion_signature=features.signature,
                )
            max_depth = max(max_depth, model.max_depth_realized)
            X_val = features.rows(split.validation)
            y_val = manifest.labels_for(split.validation)
            per_fold.append([float(np.mean(model.truncated(n).predict(X_val) == y_val)) for n in counts])

        rows = [
            SweepRow(n, float(np.mean([fold[i] for fold in per_fold])), [fold[i] for fold in per_fold])
            for i, n in enumerate(counts)
        ]
        best = max(row.mean_accuracy for row in rows)
        next(row for row in rows if row.mean_accuracy >= best - plateau_tolerance).plateau = True

        out_dir = Path(self.config.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "effective-config.ini").write_text(dump_pipeline_config(self.config), encoding="utf-8")
        text = render(
            "sweep.txt.j2",
            rows=rows,
            folds=[split.name for split in splits],
            tolerance=plateau_tolerance,
            max_depth=max_depth,
        )
        (out_dir / "sweep.txt").write_text(text, encoding="utf-8")
        for row in rows:
            logger.info(f"n_estimators={row.n_estimators}: mean validation accuracy {fmt(row.mean_accuracy)}")
        return rows

    @staticmethod
    def _unique_counts(tree_counts: Sequence[int]) -> list[int]:
        if not tree_counts:
            raise ConfigurationError("No tree counts to sweep")
        if any(n < 1 for n in tree_counts):
            raise ConfigurationError(f"Tree counts must be positive, got {list(tree_counts)}")
        unique = sorted(set(tree_counts))
        if len(unique) != len(tree_counts):
            logger.warning(f"Duplicate tree counts removed: {list(tree_counts)} -> {unique}")
        return unique
