"""Building and writing dataset partition plans"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from egoact.config import settings
from egoact.core.exceptions import ConfigurationError, error_context
from egoact.core.manifest import load_manifest
from egoact.core.splits import (
    check_fold_plan,
    optimize_day_split,
    recompute_objective,
    stratification_report,
    stratified_folds,
    write_day_split,
    write_fold_plan,
)
from egoact.models.plans import DaySplitPlan, FoldPlan

logger = logging.getLogger(__name__)


@dataclass
class SplitOutcome:
    plan: Union[DaySplitPlan, FoldPlan]
    path: Path
    diagnostics: list[str]


class SplitService:
    """Runs the fold builder or the day-split optimizer and persists the plan"""

    def __init__(self, manifest_path: Union[str, Path], out_dir: Union[str, Path]):
        self.manifest_path = Path(manifest_path)
        self.out_dir = Path(out_dir)

    def day_split(
        self,
        test_fraction: float,
        search: str = "exhaustive",
        beam_width: int = 8,
        tolerance: Optional[float] = None,
    ) -> SplitOutcome:
        with error_context("split"):
            manifest = load_manifest(self.manifest_path)
            plan = optimize_day_split(
                manifest,
                test_fraction,
                mode=search,
                beam_width=beam_width,
                tolerance=tolerance if tolerance is not None else settings.FRACTION_TOLERANCE,
            )
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / "day-split.txt"
        write_day_split(plan, path)

        diagnostics = [
            f"objective={plan.objective!r}",
            f"recomputed_objective={recompute_objective(manifest, plan)!r}",
            f"test_fraction={plan.test_fraction:.6f} (target {test_fraction}, tolerance {plan.tolerance})",
            f"days train={len(plan.train_days)} test={len(plan.test_days)}",
        ]
        diagnostics += [
            f"user {user}: train={counts['train']} test={counts['test']}"
            for user, counts in sorted(plan.user_frame_counts.items())
        ]
        return SplitOutcome(plan, path, diagnostics)

    def folds(self, k: int, validation_fraction: float = 0.1, rng_seed: int = 0) -> SplitOutcome:
        if k < 2:
            raise ConfigurationError(f"k must be at least 2, got {k}")
        with error_context("split"):
            manifest = load_manifest(self.manifest_path)
            plan = stratified_folds(manifest, k, validation_fraction, rng_seed)
            check_fold_plan(plan, manifest)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / "folds.txt"
        write_fold_plan(plan, path, manifest)

        deviations = stratification_report(plan, manifest)
        diagnostics = [f"k={plan.k} validation_fraction={validation_fraction}"]
        diagnostics += [
            f"fold {fold.index}: train={len(fold.train)} val={len(fold.validation)} test={len(fold.test)} "
            f"max_category_deviation={deviations[fold.index]}"
            for fold in plan.folds
        ]
        return SplitOutcome(plan, path, diagnostics)
