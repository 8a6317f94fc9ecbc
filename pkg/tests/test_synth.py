import math

import numpy as np
import pytest

from progmatch.core import Correspondence, SimilarityTransform
from progmatch.geometry import pairwise_energy
from progmatch.synth import (
    GROUND_TRUTH_FILE,
    REFERENCE_FILE,
    TARGET_FILE,
    SceneGenerationError,
    SceneSpec,
    generate,
    load_scene,
    save_scene,
    two_motion_scene,
)


def rotation_warp(scale, deg, tx=0.0, ty=0.0):
    return SimilarityTransform.from_params(scale, math.radians(deg), tx, ty)


class TestGenerate:
    def test_identity_zero_noise_gives_twin_sets(self):
        spec = SceneSpec(n_features=40, rng_seed=3)
        ref, tgt, gt = generate(spec)
        np.testing.assert_array_equal(gt.pairs, np.column_stack([np.arange(40)] * 2))
        np.testing.assert_array_equal(ref.positions, tgt.positions)
        np.testing.assert_array_equal(ref.scales, tgt.scales)
        np.testing.assert_array_equal(ref.orientations, tgt.orientations)
        np.testing.assert_array_equal(ref.descriptors, tgt.descriptors)

    def test_scale_two_doubles_feature_scales(self):
        spec = SceneSpec(n_features=30, width=2000, height=2000,
                         warp=rotation_warp(2.0, 0.0), rng_seed=5)
        ref, tgt, gt = generate(spec)
        for i, j in gt.pairs:
            assert tgt.scales[j] == pytest.approx(2.0 * ref.scales[i], rel=1e-12)

    def test_planted_positions_within_noise_bound(self):
        """Every planted target sits within 3 sigma of the warped source
        (noise is clipped there)."""
        spec = SceneSpec(n_features=80, warp=rotation_warp(1.1, 20, 30, -10),
                         position_noise_sigma=1.5, rng_seed=9)
        ref, tgt, gt = generate(spec)
        H = gt.warp
        for i, j in gt.pairs:
            p = np.append(ref.positions[i], 1.0)
            w = H @ p
            w = w[:2] / w[2]
            assert np.linalg.norm(tgt.positions[j] - w) <= 3 * 1.5 * math.sqrt(2) + 1e-9

    def test_orientation_shifted_by_warp_angle(self):
        ang = math.radians(30)
        spec = SceneSpec(n_features=30, width=2000, height=2000,
                         warp=rotation_warp(1.0, 30), rng_seed=4)
        ref, tgt, gt = generate(spec)
        for i, j in gt.pairs:
            expected = (ref.orientations[i] + ang + math.pi) % (2 * math.pi) - math.pi
            assert tgt.orientations[j] == pytest.approx(expected, abs=1e-9)

    def test_unpaired_budget(self):
        spec = SceneSpec(n_features=100, unpaired_fraction=0.3, rng_seed=1)
        ref, tgt, gt = generate(spec)
        assert len(gt.pairs) == 70
        assert gt.ref_unpaired.sum() == 30
        assert gt.tgt_unpaired.sum() == 30
        assert len(tgt) == 100

    def test_repetition_groups_share_descriptors(self):
        spec = SceneSpec(n_features=60, repetition_groups=3,
                         repetition_group_size=5, rng_seed=2)
        ref, _, _ = generate(spec)
        d = ref.descriptors
        counts = {}
        for i in range(60):
            key = tuple(np.round(d[i], 12))
            counts[key] = counts.get(key, 0) + 1
        assert sorted(v for v in counts.values() if v > 1) == [5, 5, 5]

    def test_grid_layout_rows_evenly_spaced(self):
        spec = SceneSpec(n_features=60, repetition_groups=2,
                         repetition_group_size=6, repetition_layout="grid",
                         rng_seed=2)
        ref, _, _ = generate(spec)
        d = ref.descriptors
        groups = {}
        for i in range(60):
            groups.setdefault(tuple(np.round(d[i], 12)), []).append(i)
        rows = [g for g in groups.values() if len(g) == 6]
        assert len(rows) == 2
        for row in rows:
            pts = ref.positions[row]
            order = np.argsort(pts @ (pts[-1] - pts[0]))
            steps = np.diff(pts[order], axis=0)
            np.testing.assert_allclose(steps, np.tile(steps[0], (len(steps), 1)), atol=1e-6)

    def test_deterministic_byte_identical(self):
        spec = SceneSpec(n_features=50, warp=rotation_warp(1.2, 15, 5, 5),
                         descriptor_noise_sigma=0.05, position_noise_sigma=0.5,
                         unpaired_fraction=0.2, repetition_groups=2, rng_seed=11)
        a = generate(spec)
        b = generate(spec)
        np.testing.assert_array_equal(a[0].positions, b[0].positions)
        np.testing.assert_array_equal(a[1].descriptors, b[1].descriptors)
        np.testing.assert_array_equal(a[2].pairs, b[2].pairs)

    def test_impossible_warp_raises(self):
        off_image = SimilarityTransform.from_params(1.0, 0.0, 5000.0, 0.0)
        with pytest.raises(SceneGenerationError):
            generate(SceneSpec(n_features=20, warp=off_image, rng_seed=0))

    def test_homography_warp_scales_from_jacobian(self):
        H = np.array([[1.1, 0.02, 10.0], [-0.03, 0.95, 5.0], [1e-4, -5e-5, 1.0]])
        spec = SceneSpec(n_features=40, warp=H, rng_seed=6)
        ref, tgt, gt = generate(spec)
        from progmatch.geometry import local_similarity
        for i, j in gt.pairs[:10]:
            s, ang = local_similarity(H, ref.positions[i])
            assert tgt.scales[j] == pytest.approx(ref.scales[i] * s, rel=1e-9)


class TestTwoMotion:
    def _specs(self, seed=0, dx=50.0):
        common = dict(n_features=60, width=800, height=600, rng_seed=seed)
        a = SceneSpec(warp=SimilarityTransform.from_params(1.0, 0.0, dx, 0),
                      region=(0, 0, 350, 600), **common)
        b = SceneSpec(warp=SimilarityTransform.from_params(1.0, 0.0, -dx, 0),
                      region=(450, 0, 800, 600),
                      **{**common, "rng_seed": seed + 1})
        return a, b

    def test_merged_indexing(self):
        a, b = self._specs()
        ref, tgt, gt = two_motion_scene(a, b)
        assert len(ref) == 120
        assert gt.motion_group.tolist() == [0] * 60 + [1] * 60
        assert len(gt.group_warps) == 2
        # pairs reference valid indices on both sides
        assert gt.pairs[:, 0].max() < len(ref)
        assert gt.pairs[:, 1].max() < len(tgt)

    def test_identity_warps_equivalent_to_merged_scene(self):
        common = dict(n_features=30, width=400, height=300)
        a = SceneSpec(rng_seed=0, **common)
        b = SceneSpec(rng_seed=1, **common)
        ref, tgt, gt = two_motion_scene(a, b)
        np.testing.assert_array_equal(ref.positions, tgt.positions)
        assert len(gt.pairs) == 60

    def test_cross_group_pairs_exceed_gate_threshold(self):
        """Planted pairs of one motion are geometrically inconsistent with
        the other motion's pairs: +50 vs -50 px translation."""
        a, b = self._specs(dx=50.0)
        ref, tgt, gt = two_motion_scene(a, b)
        rng = np.random.default_rng(0)
        pairs_a = gt.pairs[: (~gt.ref_unpaired[:60]).sum()]
        pairs_b = gt.pairs[len(pairs_a):]
        for _ in range(200):
            ia = pairs_a[rng.integers(0, len(pairs_a))]
            ib = pairs_b[rng.integers(0, len(pairs_b))]
            e = pairwise_energy(ref, tgt,
                                Correspondence(int(ia[0]), int(ia[1])),
                                Correspondence(int(ib[0]), int(ib[1])))
            assert e > 80.0

    def test_traps_are_planted_and_marked_unpaired(self):
        a, b = self._specs()
        ref, tgt, gt = two_motion_scene(a, b, cross_traps=5)
        assert len(gt.traps) == 10
        for f, j in gt.traps:
            assert gt.tgt_unpaired[j]
            other = gt.group_warps[1 - int(gt.motion_group[f])]
            p = np.append(ref.positions[f], 1.0)
            w = other @ p
            np.testing.assert_allclose(tgt.positions[j], w[:2] / w[2], atol=1e-9)

    def test_mismatched_sizes_rejected(self):
        a = SceneSpec(n_features=10, width=100, height=100)
        b = SceneSpec(n_features=10, width=200, height=100)
        with pytest.raises(ValueError):
            two_motion_scene(a, b)


class TestSceneBundle:
    def test_save_writes_three_files_and_reloads(self, tmp_path):
        spec = SceneSpec(n_features=25, warp=rotation_warp(1.1, 10, 3, 4),
                         unpaired_fraction=0.2, rng_seed=8)
        ref, tgt, gt = generate(spec)
        written = save_scene(tmp_path / "scene", ref, tgt, gt)
        assert [p.split("/")[-1] for p in written] == [
            REFERENCE_FILE, TARGET_FILE, GROUND_TRUTH_FILE]
        ref2, tgt2, gt2 = load_scene(tmp_path / "scene")
        np.testing.assert_array_equal(ref2.positions, ref.positions)
        np.testing.assert_array_equal(gt2.pairs, gt.pairs)
        np.testing.assert_array_equal(gt2.warp, gt.warp)
        np.testing.assert_array_equal(gt2.ref_unpaired, gt.ref_unpaired)


class TestSpecValidation:
    @pytest.mark.parametrize("bad", [
        dict(n_features=0),
        dict(n_features=10, descriptor_len=0),
        dict(n_features=10, unpaired_fraction=1.5),
        dict(n_features=10, position_noise_sigma=-1),
        dict(n_features=10, repetition_groups=3, repetition_group_size=5),
        dict(n_features=10, repetition_layout="hexagonal"),
        dict(n_features=10, deformation_amplitude=-1),
    ])
    def test_rejected(self, bad):
        with pytest.raises(ValueError):
            SceneSpec(**bad)
