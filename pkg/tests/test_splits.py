import itertools
import math

import numpy as np
import pytest

from egoact.core.exceptions import ConfigurationError, SplitError
from egoact.core.manifest import counts_from_labels
from egoact.core.splits import (
    bhattacharyya,
    check_fold_plan,
    day_split_frames,
    load_day_split,
    load_fold_plan,
    optimize_day_split,
    recompute_objective,
    split_objective,
    stratification_report,
    stratified_folds,
    write_day_split,
    write_fold_plan,
)
from egoact.models.plans import Fold, FoldPlan

A, B = 0, 1


class TestBhattacharyya:
    def test_identical(self):
        assert bhattacharyya([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]) == 0.0

    def test_disjoint(self):
        assert bhattacharyya([1.0, 0.0], [0.0, 1.0]) == math.inf

    def test_worked_value(self):
        expected = -math.log(math.sqrt(0.45) + math.sqrt(0.05))
        assert bhattacharyya([0.5, 0.5], [0.9, 0.1]) == pytest.approx(expected, abs=1e-15)
        assert bhattacharyya([0.5, 0.5], [0.9, 0.1]) == pytest.approx(0.1116, abs=1e-4)

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            p, q = rng.dirichlet(np.ones(21), size=2)
            assert bhattacharyya(p, q) == pytest.approx(bhattacharyya(q, p), abs=1e-12)
            assert bhattacharyya(p, q) >= 0.0

    @pytest.mark.parametrize("p, q", [
        ([0.5, 0.6], [0.5, 0.5]),
        ([1.5, -0.5], [0.5, 0.5]),
        ([1.0], [0.5, 0.5]),
    ])
    def test_invalid_distributions(self, p, q):
        with pytest.raises(ValueError):
            bhattacharyya(p, q)


class TestStratifiedFolds:
    @pytest.fixture
    def sixty_forty(self, manifest_factory):
        return manifest_factory({("u", "d"): [A] * 60 + [B] * 40})

    def test_exact_shares_per_fold(self, sixty_forty):
        plan = stratified_folds(sixty_forty, k=10, validation_fraction=0.0)
        assert plan.k == 10
        for fold in plan.folds:
            counts = counts_from_labels(sixty_forty.labels_for(fold.test))
            assert (counts[A], counts[B]) == (6, 4)
        assert set(stratification_report(plan, sixty_forty).values()) == {0}

    def test_validation_is_a_stratified_tenth(self, sixty_forty):
        plan = stratified_folds(sixty_forty, k=10, validation_fraction=0.1, rng_seed=5)
        for fold in plan.folds:
            assert len(fold.training_portion) == 90
            assert len(fold.validation) == 9
            counts = counts_from_labels(sixty_forty.labels_for(fold.validation))
            assert abs(counts[A] - 5.4) <= 1 and abs(counts[B] - 3.6) <= 1

    def test_sets_partition_the_manifest(self, small_manifest):
        plan = stratified_folds(small_manifest, k=2, validation_fraction=0.2)
        check_fold_plan(plan, small_manifest)
        assert max(stratification_report(plan, small_manifest).values()) <= 1

    def test_uneven_categories_stay_within_one_frame(self, manifest_factory):
        rng = np.random.default_rng(3)
        manifest = manifest_factory({("u", "d"): rng.choice([0, 3, 7, 11], size=237, p=[0.4, 0.3, 0.2, 0.1]).tolist()})
        plan = stratified_folds(manifest, k=10, rng_seed=7)
        check_fold_plan(plan, manifest)
        assert max(stratification_report(plan, manifest).values()) <= 1
        sizes = [len(f.test) for f in plan.folds]
        assert max(sizes) - min(sizes) <= 1

    def test_small_category_is_named(self, manifest_factory):
        manifest = manifest_factory({("u", "d"): [A] * 50 + [6] * 5})
        with pytest.raises(SplitError, match="Drinking/eating alone"):
            stratified_folds(manifest, k=10)

    def test_seeded(self, sixty_forty):
        assert stratified_folds(sixty_forty, 10, rng_seed=1) == stratified_folds(sixty_forty, 10, rng_seed=1)
        assert stratified_folds(sixty_forty, 10, rng_seed=1) != stratified_folds(sixty_forty, 10, rng_seed=2)

    @pytest.mark.parametrize("k, fraction", [(1, 0.1), (10, 1.0), (10, -0.1)])
    def test_invalid_settings(self, sixty_forty, k, fraction):
        with pytest.raises(ConfigurationError):
            stratified_folds(sixty_forty, k, fraction)

    def test_overlapping_sets_are_rejected(self, small_manifest):
        ids = frozenset(small_manifest.frame_ids)
        plan = FoldPlan(folds=(Fold(0, ids, frozenset(), ids),), rng_seed=0, validation_fraction=0.0)
        with pytest.raises(SplitError, match="overlap"):
            check_fold_plan(plan, small_manifest)

    def test_validation_overlapping_training_is_rejected(self, small_manifest):
        ids = small_manifest.frame_ids
        train, test = frozenset(ids[:10]), frozenset(ids[10:])
        plan = FoldPlan(folds=(Fold(0, train, frozenset(ids[:2]), test),), rng_seed=0, validation_fraction=0.0)
        with pytest.raises(SplitError, match="overlap"):
            check_fold_plan(plan, small_manifest)

    def test_uncovered_frames_are_rejected(self, small_manifest):
        ids = small_manifest.frame_ids
        fold = Fold(0, frozenset(ids[:8]), frozenset(ids[8:10]), frozenset(ids[10:-1]))
        plan = FoldPlan(folds=(fold,), rng_seed=0, validation_fraction=0.2)
        with pytest.raises(SplitError, match="does not cover"):
            check_fold_plan(plan, small_manifest)


class TestOptimizeDaySplit:
    def test_identical_days_pick_the_smaller_key(self, manifest_factory):
        manifest = manifest_factory({("u", "d1"): [A] * 5 + [B] * 5, ("u", "d2"): [A] * 5 + [B] * 5})
        plan = optimize_day_split(manifest, 0.5)
        assert plan.objective == 0.0
        assert plan.test_days == (("u", "d1"),)
        assert plan.train_days == (("u", "d2"),)

    def test_balanced_pairs(self, manifest_factory):
        manifest = manifest_factory({
            ("u", "d1"): [A] * 10,
            ("u", "d2"): [A] * 10,
            ("u", "d3"): [B] * 10,
            ("u", "d4"): [B] * 10,
        })
        plan = optimize_day_split(manifest, 0.5)
        assert plan.objective == pytest.approx(0.0, abs=1e-12)
        assert plan.test_days == (("u", "d1"), ("u", "d3"))
        assert plan.test_fraction == 0.5

    def test_minority_day_is_not_chosen(self, manifest_factory):
        manifest = manifest_factory({("u", "d1"): [A] * 10, ("u", "d2"): [A] * 10, ("u", "d3"): [B] * 10})
        plan = optimize_day_split(manifest, 1 / 3)
        assert plan.test_days == (("u", "d1"),)
        counts = counts_from_labels(manifest.labels)
        minority = split_objective(counts, np.array([20] + [0] * 20), np.array([0, 10] + [0] * 19))
        assert plan.objective < minority

    @pytest.mark.parametrize("seed", range(5))
    def test_no_candidate_beats_the_optimum(self, manifest_factory, seed):
        rng = np.random.default_rng(seed)
        days = {
            (f"u{d % 3}", f"d{d}"): rng.choice([0, 2, 5, 9], size=int(rng.integers(5, 20))).tolist()
            for d in range(9)
        }
        manifest = manifest_factory(days)
        target, tolerance = 0.3, 0.1
        plan = optimize_day_split(manifest, target, tolerance=tolerance)

        keys = manifest.day_keys
        segments = {segment.key: segment for segment in manifest.segments}
        total = len(manifest)
        global_counts = counts_from_labels(manifest.labels)
        best = math.inf
        for size in range(1, len(keys)):
            for test in itertools.combinations(keys, size):
                test_n = sum(len(segments[k]) for k in test)
                if abs(test_n / total - target) > tolerance:
                    continue
                test_counts = sum(counts_from_labels(segments[k].labels) for k in test)
                best = min(best, split_objective(global_counts, global_counts - test_counts, test_counts))

        assert plan.objective <= best + 1e-9
        assert abs(plan.test_fraction - target) <= tolerance + 1e-12
        assert recompute_objective(manifest, plan) == pytest.approx(plan.objective, abs=1e-12)
        assert set(plan.train_days) | set(plan.test_days) == set(keys)

    def test_beam_is_feasible_and_no_better_than_exhaustive(self, manifest_factory):
        rng = np.random.default_rng(4)
        days = {("u", f"d{d:02d}"): rng.choice([0, 1, 4], size=int(rng.integers(5, 15))).tolist() for d in range(10)}
        manifest = manifest_factory(days)
        exact = optimize_day_split(manifest, 0.3, tolerance=0.1)
        beam = optimize_day_split(manifest, 0.3, mode="beam", beam_width=4, tolerance=0.1)
        assert abs(beam.test_fraction - 0.3) <= 0.1 + 1e-12
        assert beam.objective >= exact.objective - 1e-12
        assert beam.mode == "beam"

    def test_user_frame_counts(self, small_manifest):
        plan = optimize_day_split(small_manifest, 0.3, tolerance=0.1)
        assert plan.user_frame_counts["u1"]["train"] + plan.user_frame_counts["u1"]["test"] == 10
        assert sum(side["test"] for side in plan.user_frame_counts.values()) == round(plan.test_fraction * 15)

    def test_frames_follow_the_days(self, small_manifest):
        plan = optimize_day_split(small_manifest, 0.3, tolerance=0.1)
        train_ids, test_ids = day_split_frames(small_manifest, plan)
        assert set(train_ids).isdisjoint(test_ids)
        assert len(train_ids) + len(test_ids) == len(small_manifest)
        assert {small_manifest.frames[small_manifest.index[f]].day_key for f in test_ids} == set(plan.test_days)

    def test_single_day(self, manifest_factory):
        with pytest.raises(SplitError, match="at least 2 days"):
            optimize_day_split(manifest_factory({("u", "d"): [A] * 4}), 0.3)

    def test_infeasible_fraction(self, manifest_factory):
        manifest = manifest_factory({("u", "d1"): [A] * 10, ("u", "d2"): [B] * 30})
        with pytest.raises(SplitError, match="No day subset"):
            optimize_day_split(manifest, 0.5)

    def test_exhaustive_limit(self, small_manifest):
        with pytest.raises(SplitError, match="beam mode"):
            optimize_day_split(small_manifest, 0.3, max_exhaustive_days=2)

    @pytest.mark.parametrize("target", [0.0, 1.0])
    def test_target_range(self, small_manifest, target):
        with pytest.raises(ConfigurationError):
            optimize_day_split(small_manifest, target)

    def test_unknown_mode(self, small_manifest):
        with pytest.raises(ConfigurationError):
            optimize_day_split(small_manifest, 0.3, mode="greedy")


class TestPlanFiles:
    def test_day_split_file(self, small_manifest, tmp_path):
        plan = optimize_day_split(small_manifest, 0.3, tolerance=0.1)
        path = tmp_path / "day-split.txt"
        write_day_split(plan, path)
        assert path.read_text().startswith(f"# objective={plan.objective!r} ")
        loaded = load_day_split(path)
        assert loaded.train_days == plan.train_days
        assert loaded.test_days == plan.test_days
        assert loaded.objective == plan.objective
        assert loaded.tolerance == 0.1

    def test_day_split_with_both_sides(self, tmp_path):
        path = tmp_path / "plan.txt"
        path.write_text("SPLIT train u d1\nSPLIT test u d1\n")
        with pytest.raises(SplitError, match="both sides"):
            load_day_split(path)

    def test_malformed_day_split_line(self, tmp_path):
        path = tmp_path / "plan.txt"
        path.write_text("SPLIT holdout u d1\n")
        with pytest.raises(SplitError, match="line 1"):
            load_day_split(path)

    def test_plan_with_unknown_day(self, small_manifest, tmp_path):
        path = tmp_path / "plan.txt"
        path.write_text("SPLIT train u1 d1\nSPLIT test u9 d9\n")
        with pytest.raises(SplitError, match="missing from the manifest"):
            day_split_frames(small_manifest, load_day_split(path))

    def test_fold_plan_file(self, small_manifest, tmp_path):
        plan = stratified_folds(small_manifest, k=2, validation_fraction=0.25, rng_seed=3)
        path = tmp_path / "folds.txt"
        write_fold_plan(plan, path, small_manifest)
        assert load_fold_plan(path) == plan

    def test_fold_indices_must_be_contiguous(self, tmp_path):
        path = tmp_path / "folds.txt"
        path.write_text("FOLD 1 test a\n")
        with pytest.raises(SplitError, match="0..k-1"):
            load_fold_plan(path)
