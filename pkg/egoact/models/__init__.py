from egoact.models.activity import (
    CATEGORY_NAMES,
    N_CATEGORIES,
    ActivityCategory,
    DatasetManifest,
    DaySegment,
    FrameRecord,
)
from egoact.models.features import FeatureMatrix, FeatureRole
from egoact.models.plans import DaySplitPlan, Fold, FoldPlan

__all__ = [
    "CATEGORY_NAMES",
    "N_CATEGORIES",
    "ActivityCategory",
    "DatasetManifest",
    "DaySegment",
    "FrameRecord",
    "FeatureMatrix",
    "FeatureRole",
    "DaySplitPlan",
    "Fold",
    "FoldPlan",
]
