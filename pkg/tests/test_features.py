"""Pose feature extraction: bone angles, difference blocks, invariances."""

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from handmotion.augment import rotate, uniform_rotation_matrix
from handmotion.errors import DataError, TooShortError
from handmotion.features import (
    FEATURE_DIM,
    FeatureStream,
    PoseFeatureFrame,
    bone_angles,
    extract_features,
    feature_matrix,
    load_pff,
    save_pff,
    wrap_angle,
)
from handmotion.skeleton import HandSkeleton, MotionSequence


def hand_pose(palm_pos, tip_offsets=None):
    palm_pos = np.asarray(palm_pos, dtype=float)
    joints = np.zeros((7, 3))
    joints[0] = palm_pos + [0.0, -1.0, 0.0]
    joints[1] = palm_pos
    base = np.array(
        [[-0.5, 0.4, 0.1], [-0.2, 0.8, 0.0], [0.0, 0.85, 0.0], [0.2, 0.8, 0.0], [0.4, 0.6, 0.1]]
    )
    joints[2:] = palm_pos + (base if tip_offsets is None else tip_offsets)
    return joints


def make_sequence(positions):
    return MotionSequence(tuple(HandSkeleton(hand_pose(p)) for p in positions))


def random_walk_sequence(rng, t=12):
    coords = rng.standard_normal((7, 3))
    coords[1] = coords[0] + [0, 1.2, 0]
    frames = [coords]
    for _ in range(t - 1):
        frames.append(frames[-1] + 0.05 * rng.standard_normal((7, 3)))
    return MotionSequence(tuple(HandSkeleton(f) for f in frames))


# ---------------------------------------------------------------------------
# bone angles
# ---------------------------------------------------------------------------


def bone_vector_skeleton(v):
    """7-joint skeleton whose palm bone (wrist -> palm_top) equals v."""
    joints = np.zeros((7, 3))
    joints[0] = [5.0, 5.0, 5.0]
    joints[1] = joints[0] + np.asarray(v, dtype=float)
    joints[2:] = joints[1] + np.array([[i + 1.0, 1.0, 0.5] for i in range(5)])
    return HandSkeleton(joints)


def test_bone_angles_axis_aligned():
    angles, degenerate = bone_angles(bone_vector_skeleton([1.0, 0.0, 0.0]))
    npt.assert_allclose(angles[0], [0.0, 0.0], atol=1e-15)
    assert not degenerate[0]


def test_bone_angles_vertical():
    angles, _ = bone_angles(bone_vector_skeleton([0.0, 0.0, 1.0]))
    npt.assert_allclose(angles[0], [np.pi / 2, 0.0], atol=1e-15)


def test_bone_angles_diagonal():
    # independent closed form: phi = atan2(1, sqrt(2)), theta = atan2(1, 1)
    angles, _ = bone_angles(bone_vector_skeleton([1.0, 1.0, 1.0]))
    npt.assert_allclose(angles[0, 0], np.arctan2(1.0, np.sqrt(2.0)), atol=1e-15)
    npt.assert_allclose(angles[0, 0], 0.6154797086703873, atol=1e-12)
    npt.assert_allclose(angles[0, 1], np.pi / 4, atol=1e-15)


def test_bone_angles_zero_length_flagged():
    joints = np.ones((7, 3))  # every bone has zero length
    angles, degenerate = bone_angles(HandSkeleton(joints))
    npt.assert_array_equal(angles, np.zeros((6, 2)))
    assert degenerate.all()


# ---------------------------------------------------------------------------
# wrap
# ---------------------------------------------------------------------------


def test_wrap_angle_examples():
    npt.assert_allclose(wrap_angle(6.2), 6.2 - 2 * np.pi, atol=1e-12)  # ~-0.08319
    npt.assert_allclose(wrap_angle(-0.1), -0.1, atol=1e-15)
    assert wrap_angle(np.pi) == np.pi  # boundary maps to +pi, not -pi
    assert wrap_angle(-np.pi) == np.pi


def test_wrap_angle_idempotent():
    rng = np.random.default_rng(0)
    d = rng.uniform(-10, 10, 1000)
    once = wrap_angle(d)
    npt.assert_allclose(wrap_angle(once), once, atol=1e-12)
    assert np.all(once > -np.pi) and np.all(once <= np.pi)


# ---------------------------------------------------------------------------
# difference blocks
# ---------------------------------------------------------------------------


def test_static_sequence_has_zero_diffs():
    seq = make_sequence([[0, 0, 0]] * 5)
    f = feature_matrix(seq)
    npt.assert_array_equal(f[:, 21:], np.zeros((5, 33)))


def test_constant_velocity_diffs():
    seq = make_sequence([[0.1 * t, 0.0, 0.0] for t in range(6)])
    f = feature_matrix(seq)
    coord = f[:, 21:42].reshape(6, 7, 3)
    npt.assert_allclose(coord[1:, :, 0], 0.1, atol=1e-12)  # x diff per joint
    npt.assert_allclose(coord[1:, :, 1:], 0.0, atol=1e-12)
    npt.assert_array_equal(coord[0], 0.0)
    # rigid translation: relative coords constant, angle diffs zero
    npt.assert_allclose(f[:, :21] - f[0, :21], 0.0, atol=1e-12)
    npt.assert_allclose(f[:, 42:], 0.0, atol=1e-12)


def test_random_walk_diffs_match_brute_force():
    rng = np.random.default_rng(1)
    seq = random_walk_sequence(rng)
    f = feature_matrix(seq)
    coords = seq.as_array()
    anchor = np.linalg.norm(coords[0, 1] - coords[0, 0])
    scaled = coords / anchor
    expected = np.zeros((len(seq), 21))
    expected[1:] = (scaled[1:] - scaled[:-1]).reshape(len(seq) - 1, 21)
    npt.assert_allclose(f[:, 21:42], expected, atol=1e-12)


def test_rotating_bone_angle_diffs():
    # palm bone rotating about z at 0.2 rad/frame in the xy-plane
    frames = []
    for t in range(8):
        angle = 0.2 * t
        joints = np.zeros((7, 3))
        joints[1] = [0.0, 0.0, 0.0]
        joints[0] = -np.array([np.cos(angle), np.sin(angle), 0.0])  # wrist
        joints[2:] = np.array([[1.0, 1.0 + i, 0.5] for i in range(5)])
        frames.append(HandSkeleton(joints))
    f = feature_matrix(MotionSequence(tuple(frames)))
    angle_block = f[:, 42:].reshape(8, 6, 2)
    npt.assert_allclose(angle_block[1:, 0, 1], 0.2, atol=1e-9)  # palm azimuth rate
    npt.assert_allclose(angle_block[1:, 0, 0], 0.0, atol=1e-9)  # elevation constant


def test_wrap_applied_across_pi_boundary():
    # palm bone azimuth jumps from -3.1 to +3.1: wrapped diff = 6.2 - 2*pi
    def with_azimuth(theta):
        joints = np.zeros((7, 3))
        joints[0] = -np.array([np.cos(theta), np.sin(theta), 0.0])
        joints[2:] = np.array([[1.0, 1.0 + i, 0.5] for i in range(5)])
        return HandSkeleton(joints)

    seq = MotionSequence((with_azimuth(-3.1), with_azimuth(3.1)))
    f = feature_matrix(seq)
    npt.assert_allclose(f[1, 42 + 1], 6.2 - 2 * np.pi, atol=1e-9)


# ---------------------------------------------------------------------------
# extract_features contract
# ---------------------------------------------------------------------------


def test_shape_contract():
    seq = make_sequence([[0, 0, 0], [0.1, 0, 0]])
    frames = extract_features(seq)
    assert len(frames) == 2
    assert all(isinstance(f, PoseFeatureFrame) for f in frames)
    assert all(f.values.shape == (FEATURE_DIM,) for f in frames)


def test_too_short_raises():
    with pytest.raises(TooShortError):
        extract_features(make_sequence([[0, 0, 0]]))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), scale=st.floats(0.1, 10.0))
def test_scale_invariance(seed, scale):
    rng = np.random.default_rng(seed)
    seq = random_walk_sequence(rng, t=6)
    scaled = seq.replace_frames(seq.as_array() * scale)
    npt.assert_allclose(feature_matrix(scaled), feature_matrix(seq), atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_translation_invariance(seed):
    rng = np.random.default_rng(seed)
    seq = random_walk_sequence(rng, t=6)
    t = rng.standard_normal(3) * 5.0
    moved = seq.replace_frames(seq.as_array() + t)
    npt.assert_allclose(feature_matrix(moved), feature_matrix(seq), atol=1e-9)


def test_not_rotation_invariant():
    # constructed rigid-rotation case: a hand whose palm bone turns about z
    # at a constant rate, viewed after a 45-degree rotation about y. The
    # in-plane turn becomes a precession about a tilted axis, so the
    # azimuth/elevation rates change.
    frames = []
    for t in range(6):
        angle = 0.3 * t
        joints = np.zeros((7, 3))
        joints[0] = -np.array([np.cos(angle), np.sin(angle), 0.0])
        joints[2:] = np.array([[1.0, 1.0 + i, 0.5] for i in range(5)])
        frames.append(HandSkeleton(joints))
    seq = MotionSequence(tuple(frames))
    c, s = np.cos(np.pi / 4), np.sin(np.pi / 4)
    rotation = np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    rotated = rotate(seq, rotation)
    base = feature_matrix(seq)
    rot = feature_matrix(rotated)
    angle_change = np.abs(base[:, 42:] - rot[:, 42:]).max()
    assert angle_change > 1e-3, "angle-diff block should change under rotation"


def test_streaming_matches_offline():
    rng = np.random.default_rng(2)
    seq = random_walk_sequence(rng, t=10)
    offline = feature_matrix(seq)
    stream = FeatureStream()
    online = np.stack([stream.step(f) for f in seq.frames])
    npt.assert_array_equal(offline, online)


def test_feature_frame_validation():
    with pytest.raises(DataError):
        PoseFeatureFrame(np.zeros(53))
    bad = np.zeros(FEATURE_DIM)
    bad[50] = 4.0  # outside (-pi, pi]
    with pytest.raises(DataError):
        PoseFeatureFrame(bad)


def test_pff_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    seq = random_walk_sequence(rng, t=5)
    f = feature_matrix(seq)
    path = tmp_path / "s.pff"
    save_pff(path, f)
    npt.assert_array_equal(load_pff(path), f)
    save_pff(path, extract_features(seq))
    npt.assert_array_equal(load_pff(path), f)
