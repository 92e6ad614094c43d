import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_rotation
from nbvpose.skeleton import (
    DEFAULT_TOPOLOGY,
    HIP,
    JOINT_NAMES,
    NUM_JOINTS,
    BoneTopology,
    as_pose,
    compute_bone_lengths,
    mpjpe,
    stature,
    template_pose,
)


class TestTopology:
    def test_fifteen_joints_hip_first(self):
        assert NUM_JOINTS == 15
        assert JOINT_NAMES[HIP] == "hip"

    def test_default_is_tree(self):
        assert len(DEFAULT_TOPOLOGY) == NUM_JOINTS - 1
        children = {c for _, c in DEFAULT_TOPOLOGY.bones}
        assert children == set(range(1, NUM_JOINTS))

    def test_mirror_pairs_join_left_and_right(self):
        for left, right in DEFAULT_TOPOLOGY.mirror_pairs:
            names = [JOINT_NAMES[DEFAULT_TOPOLOGY.bones[b][1]] for b in (left, right)]
            assert names[0].startswith("l_") and names[1].startswith("r_")
            assert names[0][2:] == names[1][2:]

    @pytest.mark.parametrize("bones", [
        ((0, 0),),
        ((0, 1), (2, 1)),
        ((1, 0),),
        ((0, 15),),
    ])
    def test_rejects_invalid(self, bones):
        with pytest.raises(ValueError):
            BoneTopology(bones)


class TestBoneLengths:
    def test_template_values(self, pose):
        lengths = compute_bone_lengths(pose)
        assert lengths.shape == (14,)
        assert lengths[0] == pytest.approx(0.55)
        assert lengths[1] == pytest.approx(0.25)

    def test_stacked_poses(self, pose):
        stack = np.stack([pose, pose + 1.0, pose * 2.0])
        out = compute_bone_lengths(stack)
        assert out.shape == (3, 14)
        np.testing.assert_allclose(out[1], out[0])
        np.testing.assert_allclose(out[2], 2 * out[0])

    def test_rigid_invariance(self, pose, rng):
        ref = compute_bone_lengths(pose)
        for _ in range(100):
            moved = pose @ random_rotation(rng).T + rng.normal(scale=5.0, size=3)
            assert np.max(np.abs(compute_bone_lengths(moved) - ref)) < 1e-9

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-np.pi, np.pi), st.lists(st.floats(-100, 100), min_size=3, max_size=3))
    def test_rigid_invariance_property(self, angle, shift):
        pose = template_pose()
        c, s = np.cos(angle), np.sin(angle)
        rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
        moved = pose @ rot.T + np.array(shift)
        np.testing.assert_allclose(compute_bone_lengths(moved), compute_bone_lengths(pose), atol=1e-9)


class TestMpjpe:
    def test_zero_for_identical(self, pose):
        assert mpjpe(pose, pose) == 0.0

    def test_single_joint_displacement(self, pose):
        moved = pose.copy()
        moved[4] += [0.0, 0.15, 0.0]
        assert mpjpe(moved, pose) == pytest.approx(0.01)

    def test_symmetric(self, pose, rng):
        other = pose + rng.normal(scale=0.1, size=pose.shape)
        assert mpjpe(pose, other) == mpjpe(other, pose)

    def test_shape_mismatch(self, pose):
        with pytest.raises(ValueError):
            mpjpe(pose, pose[:-1])


class TestPoseHelpers:
    def test_as_pose_validates(self, pose):
        assert as_pose(pose.tolist()).shape == (15, 3)
        with pytest.raises(ValueError):
            as_pose(np.zeros((16, 3)))
        bad = pose.copy()
        bad[3, 1] = np.nan
        with pytest.raises(ValueError):
            as_pose(bad)

    def test_template_stature(self, pose):
        # trunk 0.55 + 0.25 plus a leg of about 0.95
        assert stature(pose) == pytest.approx(1.75, abs=0.01)

    def test_stature_scales_linearly(self, pose):
        assert stature(3.0 * pose) == pytest.approx(3.0 * stature(pose))
