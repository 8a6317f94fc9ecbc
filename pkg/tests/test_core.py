import json
import math

import numpy as np
import pytest

from progmatch.core import (
    ConfigError,
    FeatureSet,
    FeatureSetError,
    MatcherConfig,
    SimilarityTransform,
    default_config,
    load_feature_set,
    save_feature_set,
    wrap_angle,
)

from conftest import make_feature, random_feature_set


class TestDefaultConfig:
    def test_published_constants(self):
        cfg = default_config()
        assert cfg.lam == 0.1
        assert cfg.kappa == 15
        assert cfg.alpha == 0.5
        assert cfg.nndr_theta == 0.9
        assert cfg.seed_count == 100
        assert cfg.knn == 5
        assert cfg.theta_seed == 80.0

    def test_bp_guards(self):
        cfg = default_config()
        assert cfg.bp_max_iters == 100
        assert cfg.bp_epsilon == 1e-6

    @pytest.mark.parametrize("bad", [
        dict(lam=-0.1),
        dict(kappa=0),
        dict(alpha=-1.0),
        dict(nndr_theta=0.0),
        dict(nndr_theta=1.5),
        dict(seed_count=0),
        dict(knn=0),
        dict(theta_seed=-1.0),
        dict(bp_max_iters=0),
        dict(bp_epsilon=0.0),
        dict(bp_damping=1.0),
        dict(rng_seed=1.5),
    ])
    def test_field_violations_rejected_at_construction(self, bad):
        with pytest.raises(ConfigError):
            MatcherConfig(**bad)

    def test_alpha_inf_allowed(self):
        assert MatcherConfig(alpha=math.inf).alpha == math.inf


class TestFeatureSet:
    def test_descriptors_normalized_at_ingest(self):
        fs = FeatureSet(
            100, 100,
            [[1, 2], [3, 4]], [1.0, 2.0], [0.0, 0.1],
            [[3.0, 0.0, 0.0, 4.0], [1.0, 1.0, 1.0, 1.0]],
        )
        np.testing.assert_allclose(np.linalg.norm(fs.descriptors, axis=1), 1.0, atol=1e-12)

    def test_zero_scale_rejected_with_index(self):
        with pytest.raises(FeatureSetError, match="feature 0"):
            FeatureSet(100, 100, [[1, 2]], [0.0], [0.0], [[1.0, 0.0]])

    def test_orientation_wrapped(self):
        fs = FeatureSet(100, 100, [[1, 2]], [1.0], [3 * math.pi / 2], [[1.0, 0.0]])
        assert fs.orientations[0] == pytest.approx(-math.pi / 2)

    def test_out_of_bounds_rejected_unless_tolerated(self):
        with pytest.raises(FeatureSetError, match="feature 0"):
            FeatureSet(100, 100, [[100.5, 2]], [1.0], [0.0], [[1.0, 0.0]])
        fs = FeatureSet(100, 100, [[100.5, 2]], [1.0], [0.0], [[1.0, 0.0]],
                        bounds_tolerance=1.0)
        assert len(fs) == 1

    def test_zero_norm_descriptor_rejected(self):
        with pytest.raises(FeatureSetError, match="feature 1"):
            FeatureSet(100, 100, [[1, 1], [2, 2]], [1, 1], [0, 0],
                       [[1.0, 0.0], [0.0, 0.0]])

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(FeatureSetError):
            FeatureSet(100, 100, [[1, 1], [2, 2]], [1.0], [0, 0],
                       [[1.0, 0.0], [0.0, 1.0]])

    def test_feature_access(self):
        fs = FeatureSet.from_features(50, 50, [make_feature(x=3, y=4, scale=2.0)])
        f = fs[0]
        assert (f.x, f.y, f.scale) == (3.0, 4.0, 2.0)
        np.testing.assert_array_equal(f.position, [3.0, 4.0])


class TestInterchangeFormat:
    def test_load_two_features(self, tmp_path):
        path = tmp_path / "two.jsonl"
        lines = [
            {"type": "feature_set", "width": 64, "height": 48,
             "descriptor_len": 4, "count": 2},
            {"x": 1.5, "y": 2.25, "scale": 2.0, "orientation": 0.5,
             "descriptor": [1.0, 2.0, 3.0, 4.0]},
            {"x": 10.0, "y": 20.0, "scale": 1.0, "orientation": -0.5,
             "descriptor": [0.0, 1.0, 0.0, 0.0]},
        ]
        path.write_text("\n".join(json.dumps(l) for l in lines) + "\n")
        fs = load_feature_set(path)
        assert len(fs) == 2
        np.testing.assert_allclose(np.linalg.norm(fs.descriptors, axis=1), 1.0, atol=1e-12)

    def test_load_zero_scale_names_feature(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        lines = [
            {"type": "feature_set", "width": 64, "height": 48,
             "descriptor_len": 2, "count": 1},
            {"x": 1.0, "y": 2.0, "scale": 0.0, "orientation": 0.0,
             "descriptor": [1.0, 0.0]},
        ]
        path.write_text("\n".join(json.dumps(l) for l in lines) + "\n")
        with pytest.raises(FeatureSetError, match="feature 0"):
            load_feature_set(path)

    def test_load_wraps_orientation(self, tmp_path):
        path = tmp_path / "wrap.jsonl"
        lines = [
            {"type": "feature_set", "width": 64, "height": 48,
             "descriptor_len": 2, "count": 1},
            {"x": 1.0, "y": 2.0, "scale": 1.0, "orientation": 3 * math.pi / 2,
             "descriptor": [1.0, 0.0]},
        ]
        path.write_text("\n".join(json.dumps(l) for l in lines) + "\n")
        fs = load_feature_set(path)
        assert fs.orientations[0] == pytest.approx(-math.pi / 2)

    def test_descriptor_length_mismatch_rejected(self, tmp_path):
        path = tmp_path / "short.jsonl"
        lines = [
            {"type": "feature_set", "width": 64, "height": 48,
             "descriptor_len": 3, "count": 1},
            {"x": 1.0, "y": 2.0, "scale": 1.0, "orientation": 0.0,
             "descriptor": [1.0, 0.0]},
        ]
        path.write_text("\n".join(json.dumps(l) for l in lines) + "\n")
        with pytest.raises(FeatureSetError, match="feature 0"):
            load_feature_set(path)

    def test_round_trip_bit_exact(self, tmp_path, rng):
        fs = random_feature_set(rng, 25)
        path = tmp_path / "roundtrip.jsonl"
        save_feature_set(fs, path)
        back = load_feature_set(path)
        np.testing.assert_array_equal(back.positions, fs.positions)
        np.testing.assert_array_equal(back.scales, fs.scales)
        np.testing.assert_array_equal(back.orientations, fs.orientations)
        np.testing.assert_allclose(back.descriptors, fs.descriptors, atol=1e-14)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "garbage.jsonl"
        path.write_text("not json\n")
        with pytest.raises(FeatureSetError):
            load_feature_set(path)


class TestWrapAngle:
    @pytest.mark.parametrize("raw,expected", [
        (0.0, 0.0),
        (3 * math.pi / 2, -math.pi / 2),
        (math.pi, -math.pi),
        (-math.pi, -math.pi),
        (2 * math.pi, 0.0),
    ])
    def test_range(self, raw, expected):
        assert wrap_angle(raw) == pytest.approx(expected)

    def test_always_in_range(self, rng):
        for theta in rng.uniform(-50, 50, 1000):
            w = wrap_angle(theta)
            assert -math.pi <= w < math.pi


class TestSimilarityTransform:
    def test_from_params_matrix_layout(self):
        t = SimilarityTransform.from_params(2.0, math.pi / 2, 3.0, 4.0)
        np.testing.assert_allclose(
            t.matrix, [[0, -2, 3], [2, 0, 4], [0, 0, 1]], atol=1e-12)

    def test_rejects_non_similarity(self):
        with pytest.raises(ValueError):
            SimilarityTransform(np.array([[1, 0.5, 0], [0, 1, 0], [0, 0, 1.0]]))
        with pytest.raises(ValueError):
            SimilarityTransform(np.array([[1, 0, 0], [0, 1, 0], [0.1, 0, 1.0]]))

    def test_inverse_round_trip(self, rng):
        for _ in range(200):
            t = SimilarityTransform.from_params(
                rng.uniform(0.2, 5.0), rng.uniform(-math.pi, math.pi),
                rng.uniform(-50, 50), rng.uniform(-50, 50))
            np.testing.assert_allclose(
                (t @ t.inverse()).matrix, np.eye(3), atol=1e-9)

    def test_apply_matches_matrix(self, rng):
        t = SimilarityTransform.from_params(1.5, 0.7, 2.0, -3.0)
        pts = rng.uniform(-10, 10, (7, 2))
        hom = np.column_stack([pts, np.ones(7)]) @ t.matrix.T
        np.testing.assert_allclose(t.apply(pts), hom[:, :2], atol=1e-12)
