"""Binary and JSON encodings of trained models"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Union

import numpy as np

from egoact.config import ForestConfig
from egoact.core.exceptions import ModelFormatError
from egoact.core.forest import LEAF, DecisionTree, ForestModel
from egoact.core.recurrent import PARAM_ORDER, RecurrentModel, param_shapes
from egoact.models.features import FeatureRole

logger = logging.getLogger(__name__)

FOREST_MAGIC = b"TFRF"
RECURRENT_MAGIC = b"TFRC"
FORMAT_VERSION = 1

_NODE_INTERNAL = 0
_NODE_LEAF = 1
_NO_DEPTH_LIMIT = 0
_MAX_FEATURES_SQRT = 0
_MAX_FEATURES_ALL = 0xFFFFFFFF


class _Reader:
    """Bounds-checked little-endian cursor"""

    def __init__(self, data: bytes, source: str):
        self.data = data
        self.offset = 0
        self.source = source

    def unpack(self, fmt: str) -> tuple:
        try:
            values = struct.unpack_from(fmt, self.data, self.offset)
        except struct.error:
            raise ModelFormatError(f"{self.source}: truncated at byte {self.offset}") from None
        self.offset += struct.calcsize(fmt)
        return values

    def doubles(self, count: int) -> np.ndarray:
        end = self.offset + 8 * count
        if end > len(self.data):
            raise ModelFormatError(f"{self.source}: truncated at byte {self.offset}")
        values = np.frombuffer(self.data, dtype="<f8", count=count, offset=self.offset).astype(np.float64)
        self.offset = end
        return values

    def text(self) -> str:
        (length,) = self.unpack("<I")
        raw = self.data[self.offset:self.offset + length]
        if len(raw) != length:
            raise ModelFormatError(f"{self.source}: truncated string at byte {self.offset}")
        self.offset += length
        return raw.decode("utf-8")

    def finish(self) -> None:
        if self.offset != len(self.data):
            raise ModelFormatError(f"{self.source}: {len(self.data) - self.offset} trailing bytes")


def _text(value: str) -> bytes:
    encoded = value.encode("utf-8")
    return struct.pack("<I", len(encoded)) + encoded


def encode_forest(model: ForestModel) -> bytes:
    """
    TFRF layout: magic, u32 version, config block, u32 feature_dim, u32 timestep,
    u32 n_classes, fusion signature, u32 tree count, then per tree a u32 depth,
    u32 node count and pre-order nodes.
    """
    config = model.config
    if config.max_features == "sqrt":
        max_features = _MAX_FEATURES_SQRT
    elif config.max_features == "all":
        max_features = _MAX_FEATURES_ALL
    else:
        max_features = int(config.max_features)

    chunks = [
        FOREST_MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack(
            "<IIIBQ",
            config.n_estimators,
            config.max_depth or _NO_DEPTH_LIMIT,
            max_features,
            int(config.bootstrap),
            config.rng_seed,
        ),
        struct.pack("<III", model.feature_dim, model.timestep, model.n_classes),
        struct.pack("<I", len(model.fusion_signature)),
    ]
    for role, dim in model.fusion_signature:
        chunks.append(_text(FeatureRole(role).value))
        chunks.append(struct.pack("<I", dim))

    chunks.append(struct.pack("<I", len(model.trees)))
    leaf_format = f"<{model.n_classes}I"
    for tree in model.trees:
        chunks.append(struct.pack("<II", tree.depth, tree.n_nodes))
        for node in range(tree.n_nodes):
            if tree.feature[node] == LEAF:
                chunks.append(struct.pack("<B", _NODE_LEAF))
                chunks.append(struct.pack(leaf_format, *(int(c) for c in tree.counts[node])))
            else:
                chunks.append(struct.pack("<BId", _NODE_INTERNAL, int(tree.feature[node]), float(tree.threshold[node])))
    return b"".join(chunks)


def decode_forest(data: bytes, source: str = "<bytes>") -> ForestModel:
    if data[:4] != FOREST_MAGIC:
        raise ModelFormatError(f"{source}: not a forest model (magic {data[:4]!r})")
    reader = _Reader(data, source)
    reader.offset = 4
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{source}: unsupported forest format version {version}")

    n_estimators, max_depth, max_features, bootstrap, rng_seed = reader.unpack("<IIIBQ")
    if max_features == _MAX_FEATURES_SQRT:
        max_features_value: Any = "sqrt"
    elif max_features == _MAX_FEATURES_ALL:
        max_features_value = "all"
    else:
        max_features_value = max_features
    try:
        config = ForestConfig(
            n_estimators=n_estimators,
            max_depth=max_depth or None,
            max_features=max_features_value,
            bootstrap=bool(bootstrap),
            rng_seed=rng_seed,
        )
    except ValueError as e:
        raise ModelFormatError(f"{source}: invalid forest config block ({e})") from None

    feature_dim, timestep, n_classes = reader.unpack("<III")
    (n_parts,) = reader.unpack("<I")
    signature = []
    for _ in range(n_parts):
        role = reader.text()
        (dim,) = reader.unpack("<I")
        try:
            signature.append((FeatureRole(role), dim))
        except ValueError:
            raise ModelFormatError(f"{source}: unknown feature role {role!r}") from None

    (n_trees,) = reader.unpack("<I")
    if n_trees == 0:
        raise ModelFormatError(f"{source}: forest has no trees")
    leaf_format = f"<{n_classes}I"
    trees = []
    for tree_index in range(n_trees):
        depth, n_nodes = reader.unpack("<II")
        if n_nodes == 0:
            raise ModelFormatError(f"{source}: tree {tree_index} has no nodes")
        features = np.full(n_nodes, LEAF, dtype=np.int64)
        thresholds = np.zeros(n_nodes, dtype=np.float64)
        counts = np.zeros((n_nodes, n_classes), dtype=np.int64)
        for node in range(n_nodes):
            (kind,) = reader.unpack("<B")
            if kind == _NODE_LEAF:
                counts[node] = reader.unpack(leaf_format)
            elif kind == _NODE_INTERNAL:
                feature, threshold = reader.unpack("<Id")
                if feature >= feature_dim:
                    raise ModelFormatError(f"{source}: tree {tree_index} uses feature {feature} >= {feature_dim}")
                features[node] = feature
                thresholds[node] = threshold
            else:
                raise ModelFormatError(f"{source}: unknown node kind {kind} in tree {tree_index}")
        trees.append(DecisionTree(
            feature=features,
            threshold=thresholds,
            right=_right_children(features, source),
            counts=counts,
            depth=depth,
        ))
    reader.finish()

    return ForestModel(
        trees=trees,
        config=config,
        feature_dim=feature_dim,
        fusion_signature=tuple(signature),
        timestep=timestep,
        n_classes=n_classes,
    )


def _right_children(features: np.ndarray, source: str) -> np.ndarray:
    """Recover right-child indices from a pre-order node sequence"""
    right = np.full(features.shape[0], LEAF, dtype=np.int64)
    pending: list[int] = []  # internal nodes whose left subtree is still open
    for node in range(features.shape[0]):
        if node > 0 and features[node - 1] == LEAF:
            if not pending:
                raise ModelFormatError(f"{source}: malformed pre-order tree")
            right[pending.pop()] = node
        if features[node] != LEAF:
            pending.append(node)
    if pending or (features.shape[0] and features[-1] != LEAF):
        raise ModelFormatError(f"{source}: malformed pre-order tree")
    return right


def encode_recurrent(model: RecurrentModel) -> bytes:
    """TFRC layout: magic, u32 version, u32 input/hidden/output dims, f8 dropout, f8 blocks"""
    chunks = [
        RECURRENT_MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<III", model.input_dim, model.hidden_units, model.n_classes),
        struct.pack("<d", model.dropout_rate),
    ]
    for name in PARAM_ORDER:
        chunks.append(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())
    return b"".join(chunks)


def decode_recurrent(data: bytes, source: str = "<bytes>") -> RecurrentModel:
    if data[:4] != RECURRENT_MAGIC:
        raise ModelFormatError(f"{source}: not a recurrent model (magic {data[:4]!r})")
    reader = _Reader(data, source)
    reader.offset = 4
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{source}: unsupported recurrent format version {version}")
    input_dim, hidden_units, n_classes = reader.unpack("<III")
    (dropout_rate,) = reader.unpack("<d")

    params = {}
    for name, shape in param_shapes(input_dim, hidden_units, n_classes).items():
        params[name] = reader.doubles(int(np.prod(shape))).reshape(shape)
    reader.finish()
    try:
        return RecurrentModel(input_dim, hidden_units, dropout_rate, params, n_classes)
    except ValueError as e:
        raise ModelFormatError(f"{source}: {e}") from None


def save_forest(model: ForestModel, path: Union[str, Path]) -> None:
    data = encode_forest(model)
    Path(path).write_bytes(data)
    logger.info(f"Saved forest ({model.n_estimators} trees, {len(data)} bytes) to {path}")


def load_forest(path: Union[str, Path]) -> ForestModel:
    path = Path(path)
    if not path.is_file():
        raise ModelFormatError(f"Model file not found: {path}")
    return decode_forest(path.read_bytes(), str(path))


def save_recurrent(model: RecurrentModel, path: Union[str, Path]) -> None:
    Path(path).write_bytes(encode_recurrent(model))
    logger.info(f"Saved recurrent model (input {model.input_dim}, hidden {model.hidden_units}) to {path}")


def load_recurrent(path: Union[str, Path]) -> RecurrentModel:
    path = Path(path)
    if not path.is_file():
        raise ModelFormatError(f"Model file not found: {path}")
    return decode_recurrent(path.read_bytes(), str(path))


def load_model(path: Union[str, Path]) -> Union[ForestModel, RecurrentModel]:
    """Dispatch on the file's magic bytes"""
    path = Path(path)
    if not path.is_file():
        raise ModelFormatError(f"Model file not found: {path}")
    data = path.read_bytes()
    if data[:4] == FOREST_MAGIC:
        return decode_forest(data, str(path))
    if data[:4] == RECURRENT_MAGIC:
        return decode_recurrent(data, str(path))
    raise ModelFormatError(f"{path}: unknown model magic {data[:4]!r}")


def forest_to_json(model: ForestModel) -> dict[str, Any]:
    trees = []
    for tree in model.trees:
        nodes = []
        for node in range(tree.n_nodes):
            if tree.feature[node] == LEAF:
                nodes.append({"id": node, "counts": [int(c) for c in tree.counts[node]]})
            else:
                nodes.append({
                    "id": node,
                    "feature": int(tree.feature[node]),
                    "threshold": float(tree.threshold[node]),
                    "left": node + 1,
                    "right": int(tree.right[node]),
                })
        trees.append({"depth": tree.depth, "nodes": nodes})
    return {
        "kind": "forest",
        "config": model.config.model_dump(),
        "feature_dim": model.feature_dim,
        "timestep": model.timestep,
        "n_classes": model.n_classes,
        "fusion_signature": [[FeatureRole(role).value, dim] for role, dim in model.fusion_signature],
        "max_depth_realized": model.max_depth_realized,
        "trees": trees,
    }


def recurrent_to_json(model: RecurrentModel) -> dict[str, Any]:
    return {
        "kind": "recurrent",
        "input_dim": model.input_dim,
        "hidden_units": model.hidden_units,
        "n_classes": model.n_classes,
        "dropout_rate": model.dropout_rate,
        "params": {name: model.params[name].tolist() for name in PARAM_ORDER},
    }


def model_to_json(model: Union[ForestModel, RecurrentModel]) -> str:
    document = forest_to_json(model) if isinstance(model, ForestModel) else recurrent_to_json(model)
    return json.dumps(document, indent=2)
