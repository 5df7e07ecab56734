import configparser
import io
from pathlib import Path
from typing import Any, Literal, Optional, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    FilePath,
    NonNegativeInt,
    PositiveInt,
    model_validator,
)
from pydantic_settings import BaseSettings

from egoact.core.features import resolve_recipe
from egoact.models.features import FeatureRole

SEED_BOUND = 2**64


class Settings(BaseSettings):
    """Process settings loaded from environment variables"""

    # Artifacts
    OUT_DIR: str = Field(
        default="./runs",
        description="Default directory for models, reports and plans"
    )

    # Logging
    LOG_LEVEL: str = Field(
        default="INFO",
        description="Logging level when DEBUG is off"
    )
    DEBUG: bool = Field(default=False)

    # Compute
    N_JOBS: int = Field(
        default=1,
        ge=1,
        description="Worker processes for tree growth"
    )

    # Day-split search
    EXHAUSTIVE_DAY_LIMIT: int = Field(
        default=24,
        ge=2,
        le=30,
        description="Largest day count the exhaustive split search accepts"
    )
    FRACTION_TOLERANCE: float = Field(
        default=0.05,
        gt=0,
        lt=1,
        description="Allowed absolute deviation from the target test fraction"
    )

    model_config = {
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "case_sensitive": True,
        "extra": "ignore",
    }


# Global settings instance
settings = Settings()


class ForestConfig(BaseModel):
    """Random forest growth settings"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_estimators: PositiveInt = 100
    max_depth: Optional[PositiveInt] = None
    max_features: Union[PositiveInt, Literal["sqrt", "all"]] = "sqrt"
    bootstrap: bool = True
    rng_seed: int = Field(default=0, ge=0, lt=SEED_BOUND)

    def features_per_split(self, n_features: int) -> int:
        if self.max_features == "all":
            return n_features
        if self.max_features == "sqrt":
            return max(1, int(n_features ** 0.5))
        return min(self.max_features, n_features)


class TrainConfig(BaseModel):
    """Recurrent model shape and SGD settings"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(default=1e-3, gt=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    weight_decay: float = Field(default=5e-6, ge=0)
    epochs: PositiveInt = 50
    batch_windows: PositiveInt = 32
    hidden_units: PositiveInt = 32
    dropout_rate: float = Field(default=0.5, ge=0, lt=1)
    class_weighting: bool = False
    rng_seed: int = Field(default=0, ge=0, lt=SEED_BOUND)


class TemporalConfig(BaseModel):
    """Sliding-window settings"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    timestep: PositiveInt = 10
    stride: PositiveInt = 1
    aggregate: Literal["mean", "last"] = "mean"
    pad: bool = True


class FeatureSource(BaseModel):
    """One fused feature part: a file, or the computed date/time context"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    role: FeatureRole
    path: Optional[FilePath] = None
    dim: Optional[PositiveInt] = None

    @model_validator(mode="after")
    def _path_unless_computed(self):
        if self.role != FeatureRole.DATETIME and self.path is None:
            raise ValueError(f"{self.role.value} features need a file path")
        return self

    @classmethod
    def parse(cls, token: str, base: Optional[Path] = None) -> "FeatureSource":
        """Parse ``role:path[:dim]`` or the bare token ``datetime``"""
        parts = token.strip().split(":")
        if parts == ["datetime"]:
            return cls(role=FeatureRole.DATETIME)
        if len(parts) not in (2, 3):
            raise ValueError(f"Feature source must be 'role:path[:dim]', got {token!r}")
        path = Path(parts[1])
        if base is not None and not path.is_absolute():
            path = base / path
        dim = int(parts[2]) if len(parts) == 3 else None
        return cls(role=FeatureRole(parts[0]), path=path, dim=dim)

    def token(self) -> str:
        if self.path is None:
            return self.role.value
        token = f"{self.role.value}:{self.path}"
        return f"{token}:{self.dim}" if self.dim is not None else token


class SplitSource(BaseModel):
    """Exactly one of: a day-split plan, a fold plan, or explicit id files"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    day_plan: Optional[FilePath] = None
    fold_plan: Optional[FilePath] = None
    fold: Optional[NonNegativeInt] = None
    train_ids: Optional[FilePath] = None
    test_ids: Optional[FilePath] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.train_ids is None) != (self.test_ids is None):
            raise ValueError("train_ids and test_ids must be given together")
        given = [self.day_plan is not None, self.fold_plan is not None, self.train_ids is not None]
        if sum(given) != 1:
            raise ValueError("Exactly one split source (day_plan, fold_plan or train_ids/test_ids) is required")
        if self.fold is not None and self.fold_plan is None:
            raise ValueError("fold is only meaningful with fold_plan")
        return self

    @property
    def kind(self) -> str:
        if self.day_plan is not None:
            return "day"
        if self.fold_plan is not None:
            return "folds"
        return "files"


class PipelineConfig(BaseModel):
    """Everything a training or evaluation run depends on"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    manifest: FilePath
    features: list[FeatureSource] = Field(default_factory=list)
    scores: Optional[FilePath] = None
    split: SplitSource
    forest: ForestConfig = Field(default_factory=ForestConfig)
    recurrent: TrainConfig = Field(default_factory=TrainConfig)
    temporal: TemporalConfig = Field(default_factory=TemporalConfig)
    train_scores: Literal["oob", "insample"] = "oob"
    active_only: bool = False
    rng_seed: int = Field(default=0, ge=0, lt=SEED_BOUND)
    out_dir: Path = Field(default_factory=lambda: Path(settings.OUT_DIR))


_DATA_PATH_KEYS = ("manifest", "scores")
_SPLIT_PATH_KEYS = ("day_plan", "fold_plan", "train_ids", "test_ids")
_ROLE_KEYS = {role.value: role for role in FeatureRole}


def _section(parser: configparser.ConfigParser, name: str) -> dict[str, str]:
    if not parser.has_section(name):
        return {}
    return {key: value.strip() for key, value in parser.items(name) if value.strip() != ""}


def _resolve(value: str, base: Optional[Path]) -> Path:
    path = Path(value)
    if base is not None and not path.is_absolute():
        path = base / path
    return path


def load_pipeline_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[dict[str, Any]] = None,
) -> PipelineConfig:
    """
    Build a PipelineConfig from an INI file and command-line overrides.

    Relative paths in the file are resolved against the file's directory.
    Override keys: manifest, features, scores, day_plan, fold_plan, fold,
    train_ids, test_ids, seed, out_dir, timestep, stride, aggregate, active_only.
    """
    parser = configparser.ConfigParser(interpolation=None)
    base = None
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"Config file not found: {path}")
        parser.read(path, encoding="utf-8")
        base = path.parent

    run = _section(parser, "run")
    data_section = _section(parser, "data")
    split = {key: value for key, value in _section(parser, "split").items()}
    forest: dict[str, Any] = _section(parser, "forest")
    recurrent: dict[str, Any] = _section(parser, "recurrent")
    temporal: dict[str, Any] = _section(parser, "temporal")
    metrics = _section(parser, "metrics")

    data: dict[str, Any] = {}
    for key in _DATA_PATH_KEYS:
        if key in data_section:
            data[key] = _resolve(data_section[key], base)
    for key in _SPLIT_PATH_KEYS:
        if key in split:
            split[key] = _resolve(split[key], base)

    features: list[FeatureSource] = []
    if "recipe" in data_section:
        for role in resolve_recipe(data_section["recipe"]):
            if role == FeatureRole.DATETIME:
                features.append(FeatureSource(role=role))
            elif role.value in data_section:
                features.append(FeatureSource(role=role, path=_resolve(data_section[role.value], base)))
            else:
                raise ValueError(f"Recipe {data_section['recipe']!r} needs a '{role.value}' path in [data]")
    elif "features" in data_section:
        features = [FeatureSource.parse(token, base) for token in data_section["features"].split(",") if token.strip()]

    overrides = {key: value for key, value in (overrides or {}).items() if value is not None}
    for key in _DATA_PATH_KEYS:
        if key in overrides:
            data[key] = Path(overrides[key])
    if "features" in overrides:
        features = [FeatureSource.parse(token) for token in overrides["features"]]
    if any(key in overrides for key in _SPLIT_PATH_KEYS):
        split = {}
    for key in (*_SPLIT_PATH_KEYS, "fold"):
        if key in overrides:
            split[key] = overrides[key]
    for key in ("timestep", "stride", "aggregate"):
        if key in overrides:
            temporal[key] = overrides[key]

    seed = overrides.get("seed", run.get("seed", 0))
    forest.setdefault("rng_seed", seed)
    recurrent.setdefault("rng_seed", seed)
    if "seed" in overrides:
        forest["rng_seed"] = recurrent["rng_seed"] = seed

    config: dict[str, Any] = {
        **data,
        "features": features,
        "split": split,
        "forest": forest,
        "recurrent": recurrent,
        "temporal": temporal,
        "rng_seed": seed,
    }
    if "train_scores" in run:
        config["train_scores"] = run["train_scores"]
    out_dir = overrides.get("out_dir", run.get("out_dir"))
    if out_dir is not None:
        config["out_dir"] = Path(out_dir)
    active_only = overrides.get("active_only") or metrics.get("active_only")
    if active_only is not None:
        config["active_only"] = active_only

    return PipelineConfig.model_validate(config)


def dump_pipeline_config(config: PipelineConfig) -> str:
    """Render a config back to the INI format, in a fixed key order"""
    parser = configparser.ConfigParser(interpolation=None)
    parser["run"] = {
        "seed": str(config.rng_seed),
        "out_dir": str(config.out_dir),
        "train_scores": config.train_scores,
    }
    data = {"manifest": str(config.manifest), "features": ", ".join(s.token() for s in config.features)}
    if config.scores is not None:
        data["scores"] = str(config.scores)
    parser["data"] = data
    parser["split"] = {
        key: str(value)
        for key, value in config.split.model_dump().items()
        if value is not None
    }
    for name, section in (("forest", config.forest), ("recurrent", config.recurrent), ("temporal", config.temporal)):
        parser[name] = {
            key: "" if value is None else str(value).lower() if isinstance(value, bool) else str(value)
            for key, value in section.model_dump().items()
        }
    parser["metrics"] = {"active_only": str(config.active_only).lower()}

    buffer = io.StringIO()
    parser.write(buffer)
    return buffer.getvalue()


def flatten_config(config: PipelineConfig) -> list[tuple[str, str]]:
    """section.key = value pairs of the effective config, for report echo"""
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(dump_pipeline_config(config))
    return [
        (f"{section}.{key}", value)
        for section in parser.sections()
        for key, value in parser.items(section)
    ]
