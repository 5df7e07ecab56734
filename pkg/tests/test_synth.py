import numpy as np
import pytest
from pydantic import ValidationError

from egoact.core.exceptions import ManifestError
from egoact.core.features import validate_rows
from egoact.core.synth import (
    StreamSpec,
    empirical_transition_matrix,
    generate,
    generate_color,
    transition_matrix,
)
from egoact.models.activity import N_CATEGORIES


def self_transition_rate(manifest):
    pairs = same = 0
    for segment in manifest.segments:
        labels = segment.labels
        pairs += labels.size - 1
        same += int((labels[1:] == labels[:-1]).sum())
    return same / pairs, pairs


class TestStreamSpec:
    def test_transition_rows_are_distributions(self):
        matrix = transition_matrix(StreamSpec(persistence=0.8))
        np.testing.assert_allclose(matrix.sum(axis=1), 1.0)
        np.testing.assert_allclose(np.diag(matrix), 0.8)

    @pytest.mark.parametrize("fields", [
        {"persistence": 1.2},
        {"persistence": 0.0},
        {"frames_per_day": 0},
        {"frames_per_day": 1100, "start_minute": 420},
        {"label_bias": (1.0, 2.0)},
        {"embedding_dim": 1},
    ])
    def test_invalid_specs(self, fields):
        with pytest.raises(ValidationError):
            StreamSpec(**fields)


class TestGenerate:
    def test_shapes_and_ids(self):
        spec = StreamSpec(n_users=2, days_per_user=2, frames_per_day=30, embedding_dim=5)
        manifest, embedding, score = generate(spec)
        assert len(manifest) == 120
        assert manifest.frame_ids[0] == "u00_d00_0000"
        assert manifest.day_keys[0] == ("user00", "day00")
        assert embedding.dim == 5 and score.dim == N_CATEGORIES
        assert list(embedding.frame_ids) == manifest.frame_ids
        validate_rows(score.role, score.frame_ids, score.values)

    def test_full_persistence_gives_single_category_days(self):
        manifest, _, _ = generate(StreamSpec(n_users=2, days_per_user=4, frames_per_day=50, persistence=1.0))
        for segment in manifest.segments:
            assert np.unique(segment.labels).size == 1

    def test_uniform_persistence_gives_independent_labels(self):
        spec = StreamSpec(n_users=1, days_per_user=10, frames_per_day=1000, persistence=1 / 21, rng_seed=4)
        manifest, _, _ = generate(spec)
        rate, pairs = self_transition_rate(manifest)
        sigma = np.sqrt((1 / 21) * (20 / 21) / pairs)
        assert len(manifest) >= 10_000
        assert abs(rate - 1 / 21) <= 4 * sigma

    def test_noiseless_scores_are_one_hot(self):
        spec = StreamSpec(n_users=1, days_per_user=2, frames_per_day=40, noise=0.0, score_temperature=1e-3)
        manifest, embedding, score = generate(spec)
        np.testing.assert_array_equal(score.values.argmax(axis=1), manifest.labels)
        np.testing.assert_array_equal(score.values, np.eye(N_CATEGORIES)[manifest.labels])

    def test_label_bias_skews_the_histogram(self):
        bias = [1.0] * N_CATEGORIES
        bias[4] = 40.0
        manifest, _, _ = generate(StreamSpec(n_users=1, days_per_user=6, frames_per_day=200, label_bias=tuple(bias)))
        counts = np.bincount(manifest.labels, minlength=N_CATEGORIES)
        assert counts.argmax() == 4

    def test_deterministic_per_seed(self):
        spec = StreamSpec(n_users=1, days_per_user=2, frames_per_day=25, rng_seed=9)
        first, second = generate(spec), generate(spec)
        assert first[0].frames == second[0].frames
        assert first[1].equals(second[1]) and first[2].equals(second[2])
        other = generate(spec.model_copy(update={"rng_seed": 10}))
        assert not first[1].equals(other[1])

    def test_color_histograms_are_valid(self):
        spec = StreamSpec(n_users=1, days_per_user=2, frames_per_day=20)
        manifest, _, _ = generate(spec)
        color = generate_color(spec, manifest)
        assert color.dim == 30
        validate_rows(color.role, color.frame_ids, color.values)


class TestEmpiricalTransitionMatrix:
    def test_counting(self, manifest_factory):
        matrix, empty = empirical_transition_matrix(manifest_factory({("u", "d"): [0, 0, 0, 1]}))
        assert matrix[0, 0] == pytest.approx(2 / 3)
        assert matrix[0, 1] == pytest.approx(1 / 3)
        assert empty[1] and empty[5]
        assert not empty[0]

    def test_pairs_do_not_cross_days(self, manifest_factory):
        matrix, _ = empirical_transition_matrix(manifest_factory({("u", "d1"): [0, 0], ("u", "d2"): [1, 1]}))
        assert matrix[0, 1] == 0.0
        assert matrix[0, 0] == matrix[1, 1] == 1.0

    def test_full_persistence_is_identity_on_visited_rows(self):
        manifest, _, _ = generate(StreamSpec(n_users=1, days_per_user=5, frames_per_day=30, persistence=1.0))
        matrix, empty = empirical_transition_matrix(manifest)
        np.testing.assert_array_equal(matrix[~empty], np.eye(N_CATEGORIES)[~empty])

    def test_recovers_persistence(self):
        spec = StreamSpec(n_users=2, days_per_user=10, frames_per_day=600, persistence=0.9, rng_seed=2)
        manifest, _, _ = generate(spec)
        rate, pairs = self_transition_rate(manifest)
        assert pairs >= 10_000
        assert abs(rate - 0.9) <= 0.03
        matrix, empty = empirical_transition_matrix(manifest)
        visits = np.bincount(
            np.concatenate([segment.labels[:-1] for segment in manifest.segments]), minlength=N_CATEGORIES
        )
        busy = visits >= 200
        assert np.all(np.abs(np.diag(matrix)[busy] - 0.9) <= 0.1)

    def test_no_pairs(self, manifest_factory):
        with pytest.raises(ManifestError):
            empirical_transition_matrix(manifest_factory({("u", "d1"): [0], ("u", "d2"): [3]}))
