"""Full two-phase pipeline on a seeded synthetic stream"""

from pathlib import Path

import numpy as np
import pytest

from egoact.config import load_pipeline_config
from egoact.core.synth import StreamSpec
from egoact.services.ensemble_service import EnsembleService
from egoact.services.generate_service import generate_dataset
from egoact.services.split_service import SplitService
from egoact.services.temporal_service import TemporalService

pytestmark = pytest.mark.slow

CONFIG = """\
[run]
seed = 17

[forest]
n_estimators = 60

[recurrent]
learning_rate = 0.05
momentum = 0.9
epochs = 40
batch_windows = 16
hidden_units = 32
dropout_rate = 0.1
"""


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    spec = StreamSpec(
        n_users=3,
        days_per_user=5,
        frames_per_day=300,
        persistence=0.95,
        embedding_dim=21,
        noise=0.32,
        separation=1.0,
        rng_seed=2024,
    )
    files = generate_dataset(spec, root / "data")
    plan = SplitService(files.manifest, root / "split").day_split(0.3, tolerance=0.1).path
    ini = root / "run.ini"
    ini.write_text(CONFIG, encoding="utf-8")

    def config(name: str, **overrides):
        base = {
            "manifest": files.manifest,
            "features": [f"embedding:{files.embedding}"],
            "day_plan": plan,
            "out_dir": root / name,
        }
        return load_pipeline_config(ini, {**base, **overrides})

    ensemble = EnsembleService(config("ensemble")).run()
    return root, config, ensemble.runs[0]


def _recurrent_accuracy(pipeline, timestep: int) -> float:
    root, config, _ = pipeline
    cfg = config(f"recurrent-{timestep}", scores=root / "ensemble" / "scores.tsv", timestep=timestep)
    return TemporalService(cfg).run("recurrent").report.accuracy


def test_ensemble_baseline_is_informative_but_imperfect(pipeline):
    _, _, run = pipeline
    assert 0.55 <= run.report.accuracy <= 0.9


def test_temporal_context_beats_per_frame_ensemble(pipeline):
    _, _, run = pipeline
    baseline = run.report.accuracy
    t10 = _recurrent_accuracy(pipeline, 10)
    t5 = _recurrent_accuracy(pipeline, 5)
    assert t10 >= baseline + 0.03
    assert t10 >= t5 - 0.01


def test_single_step_windows_reproduce_per_frame_forest(pipeline):
    root, config, run = pipeline
    result = TemporalService(config("windowed-1", timestep=1)).run("many_to_one_forest")
    assert len(result.model.trees) == len(run.model.trees)

    test_ids = run.split.test
    windowed = np.array([int(np.argmax(result.predictions[fid])) for fid in test_ids])
    features = EnsembleService(config("unused")).data.features
    per_frame = run.model.predict(features.rows(test_ids))
    np.testing.assert_array_equal(windowed, per_frame)
    assert result.report.accuracy == pytest.approx(run.report.accuracy)
    assert (root / "windowed-1" / "model.bin").is_file()
