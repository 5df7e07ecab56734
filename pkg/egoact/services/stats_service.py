"""Statistics and reporting service"""

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Union

from egoact.core.manifest import label_distribution, load_manifest
from egoact.models.activity import CATEGORY_NAMES, DatasetManifest
from egoact.services.report_service import render


@dataclass
class CategoryStats:
    """Frame counts of one category"""
    name: str
    per_user: list[int]
    total: int
    share: float


class StatsService:
    """Per-category, per-user label counts of a manifest"""

    def __init__(self, manifest: DatasetManifest):
        self.manifest = manifest

    @classmethod
    def from_path(cls, path: Union[str, Path]) -> "StatsService":
        return cls(load_manifest(path))

    def days_per_user(self) -> dict[str, int]:
        counts = Counter(segment.user_id for segment in self.manifest.segments)
        return {user: counts[user] for user in self.manifest.users}

    def category_statistics(self) -> list[CategoryStats]:
        users = self.manifest.users
        counts = Counter((int(frame.label), frame.user_id) for frame in self.manifest.frames)
        shares = label_distribution(self.manifest.frames)
        return [
            CategoryStats(
                name=name,
                per_user=[counts[(index, user)] for user in users],
                total=sum(counts[(index, user)] for user in users),
                share=float(shares[index]),
            )
            for index, name in enumerate(CATEGORY_NAMES)
        ]

    def describe(self, source: str = "manifest") -> str:
        rows = self.category_statistics()
        return render(
            "dataset_summary.txt.j2",
            source=source,
            n_frames=len(self.manifest),
            n_days=len(self.manifest.segments),
            n_present=sum(1 for row in rows if row.total),
            users=self.manifest.users,
            days_per_user=self.days_per_user(),
            rows=rows,
        )
