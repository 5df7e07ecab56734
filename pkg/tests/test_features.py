import math

import numpy as np
import pytest

from egoact.core.exceptions import (
    ConfigurationError,
    DimensionMismatchError,
    FeatureError,
    MissingFrameError,
    NormalizationError,
)
from egoact.core.features import (
    datetime_features,
    datetime_matrix,
    fuse,
    load_features,
    resolve_recipe,
    write_features,
)
from egoact.models.activity import ActivityCategory, FrameRecord
from egoact.models.features import FeatureMatrix, FeatureRole


def frame(timestamp=0, weekday=0):
    return FrameRecord("f", "u", "d", 0, timestamp, weekday, ActivityCategory.WORKING)


def text_file(path, header, rows):
    lines = [header, *("\t".join([fid, *map(str, values)]) for fid, values in rows)]
    path.write_text("\n".join(lines) + "\n")
    return path


def matrix(role, frame_ids, values):
    return FeatureMatrix(role=role, frame_ids=tuple(frame_ids), values=np.asarray(values, dtype=float))


class TestLoadFeatures:
    def test_text_file(self, tmp_path):
        path = text_file(tmp_path / "e.tsv", "dim=4 role=embedding", [
            ("a", [0.1, 0.2, 0.3, 0.4]),
            ("b", [1, 2, 3, 4]),
        ])
        loaded = load_features(path)
        assert loaded.role is FeatureRole.EMBEDDING
        assert len(loaded) == 2
        assert loaded.dim == 4
        np.testing.assert_array_equal(loaded.rows(["b"])[0], [1.0, 2.0, 3.0, 4.0])

    def test_short_row_is_a_dimension_error(self, tmp_path):
        path = text_file(tmp_path / "e.tsv", "dim=4 role=embedding", [
            ("a", [0.1, 0.2, 0.3, 0.4]),
            ("b", [1, 2, 3]),
        ])
        with pytest.raises(DimensionMismatchError, match="line 3") as info:
            load_features(path)
        assert (info.value.expected, info.value.actual) == (4, 3)

    def test_score_row_must_sum_to_one(self, tmp_path):
        path = text_file(tmp_path / "s.tsv", "dim=3 role=score", [
            ("ok", [0.5, 0.25, 0.25]),
            ("bad", [0.7, 0.2, 0.2]),
        ])
        with pytest.raises(NormalizationError, match="'bad'") as info:
            load_features(path)
        assert info.value.total == pytest.approx(1.1)

    def test_negative_score(self, tmp_path):
        path = text_file(tmp_path / "s.tsv", "dim=2 role=score", [("a", [1.5, -0.5])])
        with pytest.raises(NormalizationError):
            load_features(path)

    def test_color_histogram_channels_sum_to_one(self, tmp_path):
        good = [0.1] * 30
        bad = [0.1] * 20 + [0.2] * 10
        path = text_file(tmp_path / "c.tsv", "dim=30 role=color_histogram", [("a", good), ("b", bad)])
        with pytest.raises(NormalizationError, match="channel 2"):
            load_features(path)

    def test_color_histogram_width(self, tmp_path):
        path = text_file(tmp_path / "c.tsv", "dim=3 role=color_histogram", [("a", [1, 1, 1])])
        with pytest.raises(DimensionMismatchError):
            load_features(path)

    def test_requested_role_must_match_header(self, tmp_path):
        path = text_file(tmp_path / "e.tsv", "dim=1 role=embedding", [("a", [1.0])])
        with pytest.raises(FeatureError, match="role"):
            load_features(path, FeatureRole.SCORE)

    def test_bad_header(self, tmp_path):
        path = text_file(tmp_path / "e.tsv", "dimension four", [("a", [1.0])])
        with pytest.raises(FeatureError, match="header"):
            load_features(path)

    def test_duplicate_rows(self, tmp_path):
        path = text_file(tmp_path / "e.tsv", "dim=1 role=embedding", [("a", [1.0]), ("a", [2.0])])
        with pytest.raises(FeatureError, match="duplicate"):
            load_features(path)

    def test_binary_file(self, tmp_path):
        original = matrix(FeatureRole.SCORE, ["x", "y"], [[0.25, 0.75], [1.0, 0.0]])
        path = tmp_path / "s.bin"
        write_features(original, path, binary=True)
        assert path.read_bytes()[:4] == b"TFFM"
        assert load_features(path, FeatureRole.SCORE).equals(original)

    def test_binary_file_needs_role(self, tmp_path):
        path = tmp_path / "s.bin"
        write_features(matrix(FeatureRole.EMBEDDING, ["x"], [[1.0]]), path, binary=True)
        with pytest.raises(FeatureError, match="explicit role"):
            load_features(path)

    def test_truncated_binary_file(self, tmp_path):
        path = tmp_path / "s.bin"
        write_features(matrix(FeatureRole.EMBEDDING, ["x"], [[1.0, 2.0]]), path, binary=True)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(FeatureError, match="truncated"):
            load_features(path, FeatureRole.EMBEDDING)

    def test_text_values_survive_writing(self, tmp_path):
        rng = np.random.default_rng(0)
        original = matrix(FeatureRole.EMBEDDING, ["a", "b", "c"], rng.normal(size=(3, 5)))
        path = tmp_path / "e.tsv"
        write_features(original, path)
        assert load_features(path).equals(original)


class TestDatetimeFeatures:
    def test_midnight_monday(self):
        np.testing.assert_array_equal(datetime_features(frame(0, 0)), [1, 0, 0, 0, 0, 0, 0, 0.0, 1.0])

    def test_noon(self):
        vector = datetime_features(frame(720, 3))
        np.testing.assert_array_equal(vector[:7], [0, 0, 0, 1, 0, 0, 0])
        np.testing.assert_array_equal(vector[7:], [0.0, -1.0])

    def test_six_in_the_morning(self):
        np.testing.assert_array_equal(datetime_features(frame(360, 6))[7:], [1.0, 0.0])

    def test_unit_circle_for_every_minute(self):
        for timestamp in range(1440):
            tail = datetime_features(frame(timestamp))[7:]
            assert abs(tail[0] ** 2 + tail[1] ** 2 - 1.0) <= 1e-12

    def test_continuous_across_midnight(self):
        late = datetime_features(frame(1439))[7:]
        early = datetime_features(frame(0))[7:]
        assert np.linalg.norm(late - early) < 2 * math.pi / 1440 + 1e-12

    def test_matrix_follows_manifest(self, small_manifest):
        result = datetime_matrix(small_manifest)
        assert result.role is FeatureRole.DATETIME
        assert result.dim == 9
        assert list(result.frame_ids) == small_manifest.frame_ids


class TestFuse:
    @pytest.fixture
    def parts(self):
        rng = np.random.default_rng(1)
        ids = ["a", "b", "c"]
        return (
            matrix(FeatureRole.EMBEDDING, ids, rng.normal(size=(3, 4))),
            matrix(FeatureRole.SCORE, ids, rng.dirichlet(np.ones(21), size=3)),
            matrix(FeatureRole.DATETIME, ids, rng.normal(size=(3, 9))),
        )

    def test_dimensions_add(self, parts):
        fused = fuse(parts[:2], ["a", "b", "c"])
        assert fused.dim == 25
        assert fused.role is FeatureRole.EMBEDDING
        assert fused.signature == ((FeatureRole.EMBEDDING, 4), (FeatureRole.SCORE, 21))
        np.testing.assert_array_equal(fused.rows(["b"])[0], np.concatenate([parts[0].rows(["b"])[0], parts[1].rows(["b"])[0]]))

    def test_single_part_is_identity(self, parts):
        assert fuse([parts[0]], parts[0].frame_ids).equals(parts[0])

    def test_associative(self, parts):
        ids = ["c", "a", "b"]
        flat = fuse(parts, ids)
        nested = fuse([parts[0], fuse(parts[1:], ids)], ids)
        assert nested.equals(flat)

    def test_castro_recipe_dimension(self, parts):
        ids = ["a", "b", "c"]
        color = matrix(FeatureRole.COLOR_HISTOGRAM, ids, np.full((3, 30), 0.1))
        fused = fuse([parts[1], parts[2], color], ids)
        assert fused.dim == 60
        assert [role for role, _ in fused.signature] == list(resolve_recipe("castro"))

    def test_missing_frame_names_the_part(self, parts):
        partial = matrix(FeatureRole.SCORE, ["a"], parts[1].rows(["a"]))
        with pytest.raises(MissingFrameError, match="score") as info:
            fuse([parts[0], partial], ["a", "b"])
        assert info.value.frame_id == "b"

    def test_nothing_to_fuse(self):
        with pytest.raises(FeatureError):
            fuse([], ["a"])

    def test_unknown_recipe(self):
        with pytest.raises(ConfigurationError, match="Unknown fusion recipe"):
            resolve_recipe("fc1+fc2")
