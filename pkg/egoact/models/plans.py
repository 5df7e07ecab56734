"""Dataset partition plans"""

from dataclasses import dataclass, field
from typing import Optional


@dataclass(frozen=True)
class Fold:
    """One fold of the image-level protocol"""
    index: int
    train: frozenset[str]
    validation: frozenset[str]
    test: frozenset[str]

    @property
    def training_portion(self) -> frozenset[str]:
        """train + validation, i.e. everything outside the test fold"""
        return self.train | self.validation


@dataclass(frozen=True)
class FoldPlan:
    """Stratified k-fold plan with nested validation splits"""
    folds: tuple[Fold, ...]
    rng_seed: int
    validation_fraction: float

    @property
    def k(self) -> int:
        return len(self.folds)


@dataclass(frozen=True)
class DaySplitPlan:
    """Day-level train/test split"""
    train_days: tuple[tuple[str, str], ...]
    test_days: tuple[tuple[str, str], ...]
    objective: float
    target_test_fraction: float
    tolerance: float = 0.05
    mode: str = "exhaustive"
    test_fraction: Optional[float] = None
    user_frame_counts: dict[str, dict[str, int]] = field(default_factory=dict, compare=False)
