"""Loading the manifest, fused features and train/test splits for a run"""

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional

from egoact.config import PipelineConfig
from egoact.core.exceptions import ConfigurationError, DimensionMismatchError, FeatureError, SplitError, error_context
from egoact.core.features import datetime_matrix, fuse, load_features
from egoact.core.manifest import load_manifest
from egoact.core.splits import check_fold_plan, day_split_frames, load_day_split, load_fold_plan
from egoact.models.activity import DatasetManifest, DaySegment
from egoact.models.features import FeatureMatrix, FeatureRole

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitView:
    """One train/test partition; validation frames are held out of training"""
    name: str
    train: list[str]
    test: list[str]
    validation: list[str]


class DatasetService:
    """Resolves a PipelineConfig into in-memory data"""

    def __init__(self, config: PipelineConfig):
        self.config = config

    @cached_property
    def manifest(self) -> DatasetManifest:
        with error_context("manifest"):
            return load_manifest(self.config.manifest)

    @cached_property
    def features(self) -> FeatureMatrix:
        """Configured feature parts fused in listed order, one row per manifest frame"""
        if not self.config.features:
            raise ConfigurationError("No feature sources configured")
        parts = []
        with error_context("features"):
            for source in self.config.features:
                if source.role == FeatureRole.DATETIME:
                    part = datetime_matrix(self.manifest)
                else:
                    part = load_features(source.path, source.role)
                if source.dim is not None and part.dim != source.dim:
                    raise DimensionMismatchError(
                        source.dim, part.dim, f"{source.role.value} features (config vs file)"
                    )
                parts.append(part)
            fused = fuse(parts, self.manifest.frame_ids)
        logger.info(f"Fused features: {' + '.join(f'{r.value}({d})' for r, d in fused.signature)} = {fused.dim}")
        return fused

    @cached_property
    def scores(self) -> FeatureMatrix:
        """Phase-1 ensemble scores for every manifest frame"""
        if self.config.scores is None:
            raise FeatureError("Recurrent training needs ensemble scores; run train-ensemble first and set scores")
        with error_context("scores"):
            scores = load_features(self.config.scores, FeatureRole.SCORE)
            return fuse([scores], self.manifest.frame_ids)

    def splits(self, fold: Optional[int] = None) -> list[SplitView]:
        """Every partition the split source defines; one for day plans and id files"""
        source = self.config.split
        manifest = self.manifest
        with error_context("split"):
            if source.kind == "day":
                train, test = day_split_frames(manifest, load_day_split(source.day_plan))
                return [SplitView("day-split", train, test, [])]

            if source.kind == "files":
                train = self._read_ids(source.train_ids)
                test = self._read_ids(source.test_ids)
                if set(train) & set(test):
                    raise SplitError("train_ids and test_ids overlap")
                return [SplitView("files", manifest.ordered(train), manifest.ordered(test), [])]

            plan = load_fold_plan(source.fold_plan)
            check_fold_plan(plan, manifest)
            wanted = fold if fold is not None else source.fold
            folds = plan.folds if wanted is None else [f for f in plan.folds if f.index == wanted]
            if not folds:
                raise SplitError(f"Fold {wanted} not in plan ({plan.k} folds)")
            return [
                SplitView(
                    f"fold-{f.index}",
                    manifest.ordered(f.train),
                    manifest.ordered(f.test),
                    manifest.ordered(f.validation),
                )
                for f in folds
            ]

    def _read_ids(self, path: Path) -> list[str]:
        ids = [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
        unknown = [fid for fid in ids if fid not in self.manifest.index]
        if unknown:
            raise SplitError(f"{path}: {len(unknown)} frame ids not in the manifest (first {unknown[0]!r})")
        return ids

    def whole_day_segments(self, frame_ids: list[str], side: str) -> list[DaySegment]:
        """Segments exactly covered by frame_ids; temporal models need whole days"""
        wanted = set(frame_ids)
        segments = []
        for segment in self.manifest.segments:
            inside = sum(fid in wanted for fid in segment.frame_ids)
            if inside == len(segment):
                segments.append(segment)
            elif inside:
                raise SplitError(
                    f"Day {segment.user_id}/{segment.day_id} is split across {side} and another side; "
                    f"temporal models need a day-level split"
                )
        return segments
