"""Random decision forest with Gini split search and pure-leaf growth"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property, partial
from typing import Optional, Sequence, Union

import numpy as np

from egoact.config import ForestConfig
from egoact.core.exceptions import ConfigurationError, DimensionMismatchError, FeatureError
from egoact.models.activity import N_CATEGORIES
from egoact.models.features import FeatureMatrix, FeatureRole

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-12
LEAF = -1


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float


def gini(class_counts: Sequence[int]) -> float:
    """1 - sum of squared class proportions"""
    counts = np.asarray(class_counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("Gini impurity of an empty node is undefined")
    proportions = counts / total
    return float(1.0 - np.dot(proportions, proportions))


def _scan_feature(
    column: np.ndarray,
    onehot: np.ndarray,
    parent_counts: np.ndarray,
    parent_gini: float,
) -> Optional[tuple[float, float]]:
    """Best (threshold, gain) over midpoints of one feature, lowest threshold on ties"""
    n = column.shape[0]
    order = np.argsort(column, kind="stable")
    xs = column[order]
    distinct = xs[1:] > xs[:-1]
    if not distinct.any():
        return None

    left = np.cumsum(onehot[order], axis=0)[:-1]
    right = parent_counts - left
    n_left = np.arange(1, n, dtype=np.float64)
    n_right = n - n_left
    gini_left = 1.0 - (left ** 2).sum(axis=1) / n_left ** 2
    gini_right = 1.0 - (right ** 2).sum(axis=1) / n_right ** 2
    gains = parent_gini - (n_left / n) * gini_left - (n_right / n) * gini_right
    gains = np.where(distinct, gains, -np.inf)

    position = int(np.flatnonzero(gains >= gains.max() - TIE_TOLERANCE)[0])
    low, high = xs[position], xs[position + 1]
    threshold = (low + high) / 2.0
    # adjacent floats: the midpoint may round up onto the upper value
    if threshold >= high:
        threshold = low
    return float(threshold), float(gains[position])


def _best_split_rows(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    features: Sequence[int],
    parent_counts: np.ndarray,
    n_classes: int,
    allow_zero_gain: bool = False,
) -> Optional[Split]:
    n = rows.shape[0]
    if n < 2:
        return None
    labels = y[rows]
    onehot = np.zeros((n, n_classes), dtype=np.float64)
    onehot[np.arange(n), labels] = 1.0
    parent_counts = parent_counts.astype(np.float64)
    parent_gini = gini(parent_counts)

    best: Optional[Split] = None
    for feature in sorted(int(f) for f in features):
        result = _scan_feature(X[rows, feature], onehot, parent_counts, parent_gini)
        if result is None:
            continue
        threshold, gain = result
        if best is None or gain > best.gain + TIE_TOLERANCE:
            best = Split(feature, threshold, gain)

    if best is None or (best.gain <= TIE_TOLERANCE and not allow_zero_gain):
        return None
    return best


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    feature_subset: Sequence[int],
    n_classes: int = N_CATEGORIES,
) -> Optional[Split]:
    """
    Exhaustive CART split search over the given features.

    Candidate thresholds are midpoints between consecutive distinct values;
    rows with ``x <= threshold`` go left. Ties go to the lowest feature index,
    then the lowest threshold. Returns None when no split lowers impurity.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim == 1:
        X = X[:, None]
    counts = np.bincount(y, minlength=n_classes)
    return _best_split_rows(X, y, np.arange(X.shape[0]), feature_subset, counts, n_classes)


@dataclass(frozen=True)
class DecisionTree:
    """
    Flat pre-order tree. A node's left child is the next node; ``right``
    holds the right child's index. Leaves have ``feature == -1``.
    """
    feature: np.ndarray
    threshold: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, n_classes), zero rows for internal nodes
    depth: int

    def __post_init__(self):
        for name in ("feature", "threshold", "right", "counts"):
            getattr(self, name).setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def n_leaves(self) -> int:
        return int((self.feature == LEAF).sum())

    @cached_property
    def leaf_proba(self) -> np.ndarray:
        totals = self.counts.sum(axis=1, keepdims=True).astype(np.float64)
        return np.divide(self.counts, totals, out=np.zeros(self.counts.shape), where=totals > 0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row"""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            rows = np.flatnonzero(active)
            nodes = node[rows]
            go_left = X[rows, self.feature[nodes]] <= self.threshold[nodes]
            node[rows] = np.where(go_left, nodes + 1, self.right[nodes])
            active = self.feature[node] != LEAF
        return node

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_proba[self.apply(X)]

    def equals(self, other: "DecisionTree") -> bool:
        return (
            self.depth == other.depth
            and np.array_equal(self.feature, other.feature)
            and np.array_equal(self.threshold, other.threshold)
            and np.array_equal(self.right, other.right)
            and np.array_equal(self.counts, other.counts)
        )


def _candidate_features(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    counts: np.ndarray,
    per_split: int,
    rng: np.random.Generator,
    n_classes: int,
) -> Optional[Split]:
    """
    Search a random subset first, then the remaining features one at a time.

    An impure node where no split lowers impurity (XOR-like labels) still
    splits on the lowest non-constant feature at its lowest midpoint, so
    growth continues until leaves are pure or rows are indistinguishable.
    """
    n_features = X.shape[1]
    if per_split >= n_features:
        return _best_split_rows(
            X, y, rows, range(n_features), counts, n_classes, allow_zero_gain=True
        )

    permutation = rng.permutation(n_features)
    split = _best_split_rows(X, y, rows, permutation[:per_split], counts, n_classes)
    if split is not None:
        return split
    for feature in permutation[per_split:]:
        split = _best_split_rows(X, y, rows, [feature], counts, n_classes)
        if split is not None:
            return split
    return _best_split_rows(X, y, rows, range(n_features), counts, n_classes, allow_zero_gain=True)


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    per_split: int,
    max_depth: Optional[int],
    rng: np.random.Generator,
    n_classes: int = N_CATEGORIES,
) -> DecisionTree:
    """Grow one tree on ``rows`` until leaves are pure, unsplittable or at max_depth"""
    features: list[int] = []
    thresholds: list[float] = []
    rights: list[int] = []
    counts: list[np.ndarray] = []
    depth_reached = 0

    # (rows, depth, parent, is_right); left children are pushed last so they get parent + 1
    stack: list[tuple[np.ndarray, int, int, bool]] = [(rows, 0, -1, False)]
    while stack:
        node_rows, depth, parent, is_right = stack.pop()
        node = len(features)
        if is_right:
            rights[parent] = node
        node_counts = np.bincount(y[node_rows], minlength=n_classes)
        features.append(LEAF)
        thresholds.append(0.0)
        rights.append(LEAF)
        counts.append(node_counts)
        depth_reached = max(depth_reached, depth)

        pure = int(node_counts.max()) == node_rows.shape[0]
        if pure or node_rows.shape[0] < 2 or (max_depth is not None and depth >= max_depth):
            continue

        split = _candidate_features(X, y, node_rows, node_counts, per_split, rng, n_classes)
        if split is None:
            continue

        features[node] = split.feature
        thresholds[node] = split.threshold
        counts[node] = np.zeros(n_classes, dtype=np.int64)
        goes_left = X[node_rows, split.feature] <= split.threshold
        stack.append((node_rows[~goes_left], depth + 1, node, True))
        stack.append((node_rows[goes_left], depth + 1, node, False))

    return DecisionTree(
        feature=np.array(features, dtype=np.int64),
        threshold=np.array(thresholds, dtype=np.float64),
        right=np.array(rights, dtype=np.int64),
        counts=np.array(counts, dtype=np.int64).reshape(len(counts), n_classes),
        depth=depth_reached,
    )


@dataclass
class ForestModel:
    """Trained forest plus the settings and feature layout it was trained on"""
    trees: list[DecisionTree]
    config: ForestConfig
    feature_dim: int
    fusion_signature: tuple[tuple[FeatureRole, int], ...]
    timestep: int = 1  # window length the rows were built from; 1 = per-frame
    n_classes: int = N_CATEGORIES
    oob_proba: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def n_estimators(self) -> int:
        return len(self.trees)

    @property
    def depths(self) -> list[int]:
        return [tree.depth for tree in self.trees]

    @property
    def max_depth_realized(self) -> int:
        return max(self.depths)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Mean of the trees' normalized leaf distributions; accepts one row or many"""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != self.feature_dim:
            raise DimensionMismatchError(self.feature_dim, X.shape[1], "forest input")
        total = np.zeros((X.shape[0], self.n_classes), dtype=np.float64)
        for tree in self.trees:
            total += tree.predict_proba(X)
        total /= len(self.trees)
        return total[0] if single else total

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax returns the lowest index on ties
        return np.argmax(self.predict_proba(X), axis=-1)

    def truncated(self, n: int) -> "ForestModel":
        """The forest that training with n_estimators=n and the same seed would give"""
        if not 1 <= n <= len(self.trees):
            raise ConfigurationError(f"Cannot truncate {len(self.trees)} trees to {n}")
        return ForestModel(
            trees=self.trees[:n],
            config=self.config.model_copy(update={"n_estimators": n}),
            feature_dim=self.feature_dim,
            fusion_signature=self.fusion_signature,
            timestep=self.timestep,
            n_classes=self.n_classes,
        )

    def equals(self, other: "ForestModel") -> bool:
        return (
            self.config == other.config
            and self.feature_dim == other.feature_dim
            and tuple(self.fusion_signature) == tuple(other.fusion_signature)
            and self.timestep == other.timestep
            and len(self.trees) == len(other.trees)
            and all(a.equals(b) for a, b in zip(self.trees, other.trees))
        )


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """Independent generator per tree, derived from (seed, tree_index)"""
    return np.random.default_rng(np.random.SeedSequence([seed, tree_index]))


def _grow_indexed_tree(
    tree_index: int,
    X: np.ndarray,
    y: np.ndarray,
    config: ForestConfig,
    n_classes: int,
) -> tuple[DecisionTree, np.ndarray]:
    rng = tree_rng(config.rng_seed, tree_index)
    n = X.shape[0]
    rows = rng.integers(0, n, size=n) if config.bootstrap else np.arange(n)
    tree = grow_tree(X, y, rows, config.features_per_split(X.shape[1]), config.max_depth, rng, n_classes)
    return tree, rows


def train_forest(
    features: Union[FeatureMatrix, np.ndarray],
    labels: Sequence[int],
    config: ForestConfig,
    *,
    compute_oob: bool = False,
    n_jobs: int = 1,
    timestep: int = 1,
    fusion_signature: Optional[tuple[tuple[FeatureRole, int], ...]] = None,
    n_classes: int = N_CATEGORIES,
) -> ForestModel:
    """
    Grow ``config.n_estimators`` trees.

    Tree i draws its bootstrap sample and feature subsets from a generator
    seeded by (rng_seed, i), so parallel growth matches sequential growth and
    a smaller forest is a prefix of a larger one.

    Raises:
        FeatureError: if there are fewer than two rows or no feature columns
    """
    if isinstance(features, FeatureMatrix):
        X = np.asarray(features.values, dtype=np.float64)
        fusion_signature = fusion_signature or features.signature
    else:
        X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)

    if X.ndim != 2 or X.shape[0] == 0:
        raise FeatureError("Empty training set")
    if X.shape[1] == 0:
        raise FeatureError("Training features have dimension 0")
    if X.shape[0] < 2:
        raise FeatureError("At least two training rows are required")
    if y.shape[0] != X.shape[0]:
        raise DimensionMismatchError(X.shape[0], y.shape[0], "training labels")
    if y.min() < 0 or y.max() >= n_classes:
        raise FeatureError(f"Training labels must lie in 0..{n_classes - 1}")
    if np.unique(y).size == 1:
        logger.warning(f"Training set holds a single category ({int(y[0])}); every tree is one leaf")

    if fusion_signature is None:
        fusion_signature = ((FeatureRole.EMBEDDING, X.shape[1]),)

    logger.info(
        f"Growing {config.n_estimators} trees on {X.shape[0]} rows x {X.shape[1]} features "
        f"(max_features={config.max_features}, bootstrap={config.bootstrap}, n_jobs={n_jobs})"
    )

    grow = partial(_grow_indexed_tree, X=X, y=y, config=config, n_classes=n_classes)
    indices = range(config.n_estimators)
    if n_jobs > 1 and config.n_estimators > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as executor:
            grown = list(executor.map(grow, indices))
    else:
        grown = [grow(index) for index in indices]

    trees = [tree for tree, _ in grown]
    model = ForestModel(
        trees=trees,
        config=config,
        feature_dim=X.shape[1],
        fusion_signature=tuple(fusion_signature),
        timestep=timestep,
        n_classes=n_classes,
    )
    logger.info(f"Forest grown: {sum(t.n_leaves for t in trees)} leaves, max depth {model.max_depth_realized}")

    if compute_oob:
        model.oob_proba = _out_of_bag(model, X, [rows for _, rows in grown])
    return model


def _out_of_bag(model: ForestModel, X: np.ndarray, samples: list[np.ndarray]) -> np.ndarray:
    """Per-row mean over trees that did not see the row; in-sample for rows always in bag"""
    n = X.shape[0]
    total = np.zeros((n, model.n_classes), dtype=np.float64)
    votes = np.zeros(n, dtype=np.int64)
    for tree, rows in zip(model.trees, samples):
        out = np.bincount(rows, minlength=n) == 0
        if out.any():
            total[out] += tree.predict_proba(X[out])
            votes[out] += 1

    never_out = votes == 0
    if never_out.any():
        logger.warning(f"{int(never_out.sum())} rows were never out of bag; using in-sample scores for them")
        total[never_out] = model.predict_proba(X[never_out])
        votes[never_out] = 1
    return total / votes[:, None]
