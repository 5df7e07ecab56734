"""Stratified k-fold plans and the Bhattacharyya day-split optimizer"""

import logging
import math
from collections import defaultdict
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from egoact.config import settings
from egoact.core.exceptions import ConfigurationError, SplitError
from egoact.core.manifest import counts_from_labels
from egoact.models.activity import CATEGORY_NAMES, DatasetManifest
from egoact.models.plans import DaySplitPlan, Fold, FoldPlan

logger = logging.getLogger(__name__)

OBJECTIVE_TIE = 1e-12
_CHUNK = 1 << 16


def bhattacharyya(p: Sequence[float], q: Sequence[float]) -> float:
    """-ln sum(sqrt(p * q)); +inf for disjoint supports"""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"Distributions must be 1-D of equal length, got {p.shape} and {q.shape}")
    for name, dist in (("p", p), ("q", q)):
        if np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} is not a probability distribution")
    if np.array_equal(p, q):
        return 0.0
    coefficient = float(np.sum(np.sqrt(p * q)))
    if coefficient <= 0.0:
        return math.inf
    return -math.log(min(coefficient, 1.0))


def _distribution(counts: np.ndarray) -> np.ndarray:
    return counts / counts.sum()


def split_objective(global_counts: np.ndarray, train_counts: np.ndarray, test_counts: np.ndarray) -> float:
    """D(global, train) + D(global, test)"""
    target = _distribution(global_counts)
    return bhattacharyya(target, _distribution(train_counts)) + bhattacharyya(target, _distribution(test_counts))


def stratified_folds(
    manifest: DatasetManifest,
    k: int,
    validation_fraction: float = 0.1,
    rng_seed: int = 0,
) -> FoldPlan:
    """
    Per-category seeded shuffle, then round-robin into k test folds.

    The round-robin position carries over from one category to the next so
    fold sizes stay balanced. Each fold's validation set is a stratified
    ``validation_fraction`` of its training portion, allocated by largest
    remainder.
    """
    if k < 2:
        raise ConfigurationError(f"k must be at least 2, got {k}")
    if not 0.0 <= validation_fraction < 1.0:
        raise ConfigurationError(f"validation_fraction must lie in [0, 1), got {validation_fraction}")

    by_category: dict[int, list[str]] = defaultdict(list)
    for frame in manifest.frames:
        by_category[int(frame.label)].append(frame.frame_id)

    for category in sorted(by_category):
        if len(by_category[category]) < k:
            raise SplitError(
                f"Category {CATEGORY_NAMES[category]!r} has {len(by_category[category])} frames, "
                f"fewer than k={k}"
            )

    rng = np.random.default_rng(rng_seed)
    test_sets: list[list[str]] = [[] for _ in range(k)]
    position = 0
    for category in sorted(by_category):
        ids = by_category[category]
        for index in rng.permutation(len(ids)):
            test_sets[position % k].append(ids[index])
            position += 1

    all_ids = set(manifest.frame_ids)
    folds = []
    for fold_index, test_ids in enumerate(test_sets):
        test = frozenset(test_ids)
        training = manifest.ordered(all_ids - test)
        validation = _stratified_sample(
            manifest,
            training,
            validation_fraction,
            np.random.default_rng(np.random.SeedSequence([rng_seed, fold_index])),
        )
        folds.append(Fold(
            index=fold_index,
            train=frozenset(training) - validation,
            validation=validation,
            test=test,
        ))

    plan = FoldPlan(folds=tuple(folds), rng_seed=rng_seed, validation_fraction=validation_fraction)
    logger.info(
        f"Built {k} stratified folds over {len(manifest)} frames "
        f"(test sizes {min(len(f.test) for f in folds)}..{max(len(f.test) for f in folds)})"
    )
    return plan


def _stratified_sample(
    manifest: DatasetManifest,
    frame_ids: Sequence[str],
    fraction: float,
    rng: np.random.Generator,
) -> frozenset[str]:
    """round(fraction * N) frames split across categories by largest remainder"""
    total = round(fraction * len(frame_ids))
    if total == 0:
        return frozenset()

    by_category: dict[int, list[str]] = defaultdict(list)
    for fid in frame_ids:
        by_category[int(manifest.label_of(fid))].append(fid)
    categories = sorted(by_category)
    quotas = np.array([fraction * len(by_category[c]) for c in categories])
    allocation = np.floor(quotas).astype(np.int64)
    remainders = quotas - allocation
    # ties in the remainder go to the lower category index
    for index in np.argsort(-remainders, kind="stable")[: total - int(allocation.sum())]:
        allocation[index] += 1

    chosen: list[str] = []
    for category, count in zip(categories, allocation):
        ids = by_category[category]
        picks = rng.permutation(len(ids))[:count]
        chosen.extend(ids[i] for i in picks)
    return frozenset(chosen)


def optimize_day_split(
    manifest: DatasetManifest,
    target_test_fraction: float,
    mode: str = "exhaustive",
    beam_width: int = 8,
    tolerance: Optional[float] = None,
    max_exhaustive_days: Optional[int] = None,
) -> DaySplitPlan:
    """
    Choose test days minimizing D(global, train) + D(global, test).

    Candidates are day subsets whose frame share is within ``tolerance``
    (absolute) of the target. Exhaustive mode scores every candidate and
    breaks ties by the lexicographically smallest sorted test-day key list.
    Beam mode grows test sets one day at a time and is an approximation.
    """
    tolerance = settings.FRACTION_TOLERANCE if tolerance is None else tolerance
    max_exhaustive_days = settings.EXHAUSTIVE_DAY_LIMIT if max_exhaustive_days is None else max_exhaustive_days
    if not 0.0 < target_test_fraction < 1.0:
        raise ConfigurationError(f"target_test_fraction must lie in (0, 1), got {target_test_fraction}")

    segments = manifest.segments
    if len(segments) < 2:
        raise SplitError(f"Day split needs at least 2 days, manifest has {len(segments)}")

    keys = [segment.key for segment in segments]
    day_counts = np.stack([counts_from_labels(segment.labels) for segment in segments]).astype(np.float64)

    if mode == "exhaustive":
        if len(keys) > max_exhaustive_days:
            raise SplitError(
                f"{len(keys)} days exceed the exhaustive limit of {max_exhaustive_days}; use beam mode"
            )
        test_mask = _exhaustive_search(keys, day_counts, target_test_fraction, tolerance)
    elif mode == "beam":
        test_mask = _beam_search(keys, day_counts, target_test_fraction, tolerance, beam_width)
    else:
        raise ConfigurationError(f"Unknown day-split mode {mode!r}")

    if test_mask is None:
        raise SplitError(
            f"No day subset has a test fraction within {tolerance} of {target_test_fraction}"
        )

    plan = _make_plan(manifest, keys, day_counts, test_mask, target_test_fraction, tolerance, mode)
    logger.info(
        f"Day split ({mode}): {len(plan.test_days)} test / {len(plan.train_days)} train days, "
        f"test fraction {plan.test_fraction:.4f}, objective {plan.objective:.6f}"
    )
    return plan


def _objectives(day_counts: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Vectorized objective for a (M, n_days) boolean mask batch; inf when a side is empty"""
    total = day_counts.sum(axis=0)
    target = total / total.sum()
    test = masks.astype(np.float64) @ day_counts
    train = total - test
    test_n = test.sum(axis=1, keepdims=True)
    train_n = train.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        bc_test = np.sqrt(target * (test / test_n)).sum(axis=1)
        bc_train = np.sqrt(target * (train / train_n)).sum(axis=1)
        objective = -np.log(np.minimum(bc_test, 1.0)) - np.log(np.minimum(bc_train, 1.0))
    objective[(test_n[:, 0] == 0) | (train_n[:, 0] == 0)] = np.inf
    return np.where(np.isnan(objective), np.inf, objective)


def _exhaustive_search(
    keys: list[tuple[str, str]],
    day_counts: np.ndarray,
    target: float,
    tolerance: float,
) -> Optional[np.ndarray]:
    n_days = len(keys)
    sizes = day_counts.sum(axis=1)
    total = sizes.sum()
    bits = np.arange(n_days, dtype=np.int64)

    best_mask: Optional[np.ndarray] = None
    best_value = math.inf
    best_tiebreak: Optional[list[tuple[str, str]]] = None
    n_candidates = 0

    for start in range(1, 2 ** n_days - 1, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, 2 ** n_days - 1), dtype=np.int64)
        masks = ((codes[:, None] >> bits) & 1).astype(bool)
        fractions = (masks @ sizes) / total
        feasible = np.abs(fractions - target) <= tolerance + 1e-12
        if not feasible.any():
            continue
        masks = masks[feasible]
        n_candidates += masks.shape[0]
        values = _objectives(day_counts, masks)
        chunk_best = values.min()
        if not np.isfinite(chunk_best) or chunk_best > best_value + OBJECTIVE_TIE:
            continue
        for row in np.flatnonzero(values <= chunk_best + OBJECTIVE_TIE):
            candidate = sorted(keys[i] for i in np.flatnonzero(masks[row]))
            value = float(values[row])
            if (
                best_mask is None
                or value < best_value - OBJECTIVE_TIE
                or (abs(value - best_value) <= OBJECTIVE_TIE and candidate < best_tiebreak)
            ):
                best_mask, best_value, best_tiebreak = masks[row].copy(), min(value, best_value), candidate

    logger.debug(f"Exhaustive day split scored {n_candidates} candidate subsets")
    return best_mask


def _beam_search(
    keys: list[tuple[str, str]],
    day_counts: np.ndarray,
    target: float,
    tolerance: float,
    beam_width: int,
) -> Optional[np.ndarray]:
    if beam_width < 1:
        raise ConfigurationError("beam_width must be at least 1")
    n_days = len(keys)
    sizes = day_counts.sum(axis=1)
    total = sizes.sum()

    def rank(mask: np.ndarray, value: float) -> tuple:
        return (value, sorted(keys[i] for i in np.flatnonzero(mask)))

    beam = [np.zeros(n_days, dtype=bool)]
    best: Optional[tuple] = None
    seen: set[bytes] = set()
    while beam:
        expansions = []
        for mask in beam:
            for day in np.flatnonzero(~mask):
                grown = mask.copy()
                grown[day] = True
                if grown.all() or grown.tobytes() in seen:
                    continue
                seen.add(grown.tobytes())
                if (grown @ sizes) / total <= target + tolerance + 1e-12:
                    expansions.append(grown)
        if not expansions:
            break
        values = _objectives(day_counts, np.stack(expansions))
        ranked = sorted(zip(values.tolist(), expansions), key=lambda item: rank(item[1], item[0]))
        for value, mask in ranked:
            if abs((mask @ sizes) / total - target) <= tolerance + 1e-12 and np.isfinite(value):
                candidate = rank(mask, value)
                if best is None or candidate < best[0]:
                    best = (candidate, mask)
        beam = [mask for _, mask in ranked[:beam_width]]

    return None if best is None else best[1]


def _make_plan(
    manifest: DatasetManifest,
    keys: list[tuple[str, str]],
    day_counts: np.ndarray,
    test_mask: np.ndarray,
    target: float,
    tolerance: float,
    mode: str,
) -> DaySplitPlan:
    test_days = tuple(sorted(k for k, m in zip(keys, test_mask) if m))
    train_days = tuple(sorted(k for k, m in zip(keys, test_mask) if not m))
    test_counts = day_counts[test_mask].sum(axis=0)
    train_counts = day_counts[~test_mask].sum(axis=0)
    objective = split_objective(day_counts.sum(axis=0), train_counts, test_counts)
    return DaySplitPlan(
        train_days=train_days,
        test_days=test_days,
        objective=objective,
        target_test_fraction=target,
        tolerance=tolerance,
        mode=mode,
        test_fraction=float(test_counts.sum() / day_counts.sum()),
        user_frame_counts=user_frame_counts(manifest, train_days, test_days),
    )


def user_frame_counts(
    manifest: DatasetManifest,
    train_days: Sequence[tuple[str, str]],
    test_days: Sequence[tuple[str, str]],
) -> dict[str, dict[str, int]]:
    """Frames per user on each side of a day split"""
    side = {key: "train" for key in train_days}
    side.update({key: "test" for key in test_days})
    counts = {user: {"train": 0, "test": 0} for user in manifest.users}
    for segment in manifest.segments:
        if segment.key in side:
            counts[segment.user_id][side[segment.key]] += len(segment)
    return counts


def recompute_objective(manifest: DatasetManifest, plan: DaySplitPlan) -> float:
    """Objective of a plan evaluated from the manifest"""
    test = set(plan.test_days)
    test_frames = [f for f in manifest.frames if f.day_key in test]
    train_frames = [f for f in manifest.frames if f.day_key not in test]
    return split_objective(
        counts_from_labels(manifest.labels),
        counts_from_labels(np.array([int(f.label) for f in train_frames], dtype=np.int64)),
        counts_from_labels(np.array([int(f.label) for f in test_frames], dtype=np.int64)),
    )


def day_split_frames(manifest: DatasetManifest, plan: DaySplitPlan) -> tuple[list[str], list[str]]:
    """(train frame_ids, test frame_ids) in canonical order"""
    test = set(plan.test_days)
    known = set(manifest.day_keys)
    unknown = [key for key in (*plan.train_days, *plan.test_days) if key not in known]
    if unknown:
        raise SplitError(f"Plan references days missing from the manifest: {unknown[:3]}")
    train_ids = [f.frame_id for f in manifest.frames if f.day_key not in test]
    test_ids = [f.frame_id for f in manifest.frames if f.day_key in test]
    return train_ids, test_ids


def write_day_split(plan: DaySplitPlan, path: Union[str, Path]) -> None:
    lines = [
        f"# objective={plan.objective!r} target_test_fraction={plan.target_test_fraction!r} "
        f"tolerance={plan.tolerance!r} mode={plan.mode}"
    ]
    lines += [f"SPLIT train {user} {day}" for user, day in plan.train_days]
    lines += [f"SPLIT test {user} {day}" for user, day in plan.test_days]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Wrote day split {path}")


def load_day_split(path: Union[str, Path]) -> DaySplitPlan:
    path = Path(path)
    if not path.is_file():
        raise SplitError(f"Day split plan not found: {path}")
    header: dict[str, str] = {}
    sides: dict[str, list[tuple[str, str]]] = {"train": [], "test": []}
    for line_number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            header.update(token.split("=", 1) for token in line[1:].split() if "=" in token)
            continue
        fields = line.split()
        if len(fields) != 4 or fields[0] != "SPLIT" or fields[1] not in sides:
            raise SplitError(f"{path} line {line_number}: expected 'SPLIT train|test <user_id> <day_id>'")
        sides[fields[1]].append((fields[2], fields[3]))

    if set(sides["train"]) & set(sides["test"]):
        raise SplitError(f"{path}: a day is listed on both sides")
    try:
        return DaySplitPlan(
            train_days=tuple(sorted(sides["train"])),
            test_days=tuple(sorted(sides["test"])),
            objective=float(header.get("objective", "nan")),
            target_test_fraction=float(header.get("target_test_fraction", "nan")),
            tolerance=float(header.get("tolerance", settings.FRACTION_TOLERANCE)),
            mode=header.get("mode", "exhaustive"),
        )
    except ValueError:
        raise SplitError(f"{path}: malformed header {header}") from None


_FOLD_SIDES = {"train": "train", "val": "validation", "test": "test"}


def write_fold_plan(plan: FoldPlan, path: Union[str, Path], manifest: DatasetManifest) -> None:
    lines = [f"# k={plan.k} rng_seed={plan.rng_seed} validation_fraction={plan.validation_fraction!r}"]
    for fold in plan.folds:
        for side, attribute in _FOLD_SIDES.items():
            lines += [f"FOLD {fold.index} {side} {fid}" for fid in manifest.ordered(getattr(fold, attribute))]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Wrote fold plan {path}")


def load_fold_plan(path: Union[str, Path]) -> FoldPlan:
    path = Path(path)
    if not path.is_file():
        raise SplitError(f"Fold plan not found: {path}")
    header: dict[str, str] = {}
    sets: dict[int, dict[str, set[str]]] = defaultdict(lambda: {name: set() for name in _FOLD_SIDES.values()})
    for line_number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            header.update(token.split("=", 1) for token in line[1:].split() if "=" in token)
            continue
        fields = line.split()
        if len(fields) != 4 or fields[0] != "FOLD" or fields[2] not in _FOLD_SIDES or not fields[1].isdigit():
            raise SplitError(f"{path} line {line_number}: expected 'FOLD <k> train|val|test <frame_id>'")
        sets[int(fields[1])][_FOLD_SIDES[fields[2]]].add(fields[3])

    if sorted(sets) != list(range(len(sets))) or not sets:
        raise SplitError(f"{path}: fold indices must be 0..k-1")
    folds = tuple(
        Fold(index, frozenset(s["train"]), frozenset(s["validation"]), frozenset(s["test"]))
        for index, s in sorted(sets.items())
    )
    return FoldPlan(
        folds=folds,
        rng_seed=int(header.get("rng_seed", 0)),
        validation_fraction=float(header.get("validation_fraction", 0.0)),
    )


def check_fold_plan(plan: FoldPlan, manifest: DatasetManifest) -> None:
    """Raise SplitError unless every fold partitions the manifest"""
    everything = set(manifest.frame_ids)
    for fold in plan.folds:
        if fold.train & fold.validation or fold.training_portion & fold.test:
            raise SplitError(f"Fold {fold.index} sets overlap")
        if fold.training_portion | fold.test != everything:
            raise SplitError(f"Fold {fold.index} does not cover the manifest")


def stratification_report(plan: FoldPlan, manifest: DatasetManifest) -> dict[int, int]:
    """Per fold, the largest per-category deviation of the test set from k-equal shares, in frames"""
    global_counts = counts_from_labels(manifest.labels)
    deviations = {}
    for fold in plan.folds:
        counts = counts_from_labels(manifest.labels_for(fold.test))
        deviations[fold.index] = int(np.ceil(np.max(np.abs(counts - global_counts / plan.k))))
    return deviations


