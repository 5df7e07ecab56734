"""Re-evaluating saved models on the configured test split"""

import logging
from pathlib import Path
from typing import Union

import numpy as np

from egoact.config import PipelineConfig, flatten_config
from egoact.core.codecs import load_model
from egoact.core.exceptions import ConfigurationError, DimensionMismatchError
from egoact.core.forest import ForestModel
from egoact.core.metrics import MetricsReport, evaluate
from egoact.services.dataset_service import DatasetService
from egoact.services.report_service import write_report
from egoact.services.temporal_service import predict_frames_many_to_one, predict_frames_recurrent

logger = logging.getLogger(__name__)


class EvaluationService:
    """Scores a forest (per-frame or windowed) or a recurrent model file"""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.data = DatasetService(config)

    def run(self, model_path: Union[str, Path]) -> MetricsReport:
        model = load_model(model_path)
        splits = self.data.splits()
        if len(splits) != 1:
            raise ConfigurationError("Evaluation needs a single test split; pick one fold")
        test_ids = splits[0].test
        manifest = self.data.manifest

        if isinstance(model, ForestModel):
            features = self.data.features
            if tuple(features.signature) != tuple(model.fusion_signature):
                raise DimensionMismatchError(
                    sum(dim for _, dim in model.fusion_signature),
                    features.dim,
                    "configured features vs the model's fusion signature",
                )
            if model.timestep == 1:
                predicted = model.predict(features.rows(test_ids))
            else:
                segments = self.data.whole_day_segments(test_ids, "test")
                proba = predict_frames_many_to_one(model, features, segments)
                predicted = np.array([int(np.argmax(proba[fid])) for fid in test_ids], dtype=np.int64)
            kind = f"forest T={model.timestep}"
        else:
            segments = self.data.whole_day_segments(test_ids, "test")
            proba = predict_frames_recurrent(
                model,
                self.data.scores,
                segments,
                self.config.temporal.timestep,
                self.config.temporal.aggregate,
            )
            predicted = np.array([int(np.argmax(proba[fid])) for fid in test_ids], dtype=np.int64)
            kind = f"recurrent T={self.config.temporal.timestep}"

        report = evaluate(
            manifest.labels_for(test_ids),
            predicted,
            active_only=self.config.active_only,
            config=flatten_config(self.config),
        )
        report.notes.extend([("model", str(model_path)), ("model_kind", kind)])
        write_report(report, self.config.out_dir, f"evaluate {kind}", self.config)
        return report
