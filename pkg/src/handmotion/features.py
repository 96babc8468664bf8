"""Per-frame pose feature extraction: the 54-value hand descriptor.

Layout of one feature frame, in fixed order:

    [ 0:21]  relative coordinates — 7 joints x 3 axes, from fully
             standardized skeletons (per-frame scale, palm top at origin)
    [21:42]  coordinate differences vs. the previous frame, per joint/axis
    [42:54]  bone angle differences, per bone (elevation, azimuth), wrapped
             into (-pi, pi]

The two difference blocks are computed on scale-normalized but untranslated
coordinates; the scale anchor is the first frame's palm length, held fixed
for the whole sequence. A per-sequence anchor keeps first differences exactly
invariant to constant translations even when tracking noise makes the palm
length fluctuate frame to frame, and it is available online (streaming sees
frame 0 first). Frame 0's differences are zero so the feature stream has the
same length as the input.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DegenerateSkeletonError, TooShortError
from .skeleton import (
    DEGENERACY_THRESHOLD,
    PALM_TOP,
    ROLE_ORDER,
    WRIST,
    HandSkeleton,
    JointMap,
    MotionSequence,
    simplify,
)

FEATURE_DIM = 54
N_BONES = 6

# palm bone plus one bone per fingertip, as (start_joint, end_joint) indices
DEFAULT_BONES = ((WRIST, PALM_TOP), (PALM_TOP, 2), (PALM_TOP, 3), (PALM_TOP, 4), (PALM_TOP, 5), (PALM_TOP, 6))


@dataclass(frozen=True)
class BoneSet:
    """The 6 directed bones of the simplified hand."""

    bones: tuple[tuple[int, int], ...] = DEFAULT_BONES

    def __post_init__(self):
        if len(self.bones) != N_BONES:
            raise DataError(f"expected {N_BONES} bones, got {len(self.bones)}")
        for start, end in self.bones:
            if not (0 <= start < len(ROLE_ORDER) and 0 <= end < len(ROLE_ORDER)):
                raise DataError(f"bone ({start}, {end}) references an invalid joint")


@dataclass(frozen=True)
class PoseFeatureFrame:
    """One frame's 54-dimensional pose feature vector."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.shape != (FEATURE_DIM,):
            raise DataError(f"feature frame must have {FEATURE_DIM} values, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("feature frame contains non-finite values")
        angles = arr[42:54]
        if np.any(angles <= -np.pi) or np.any(angles > np.pi):
            raise DataError("angle differences must lie in (-pi, pi]")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def relative_coords(self) -> np.ndarray:
        return self.values[0:21]

    @property
    def coord_diffs(self) -> np.ndarray:
        return self.values[21:42]

    @property
    def angle_diffs(self) -> np.ndarray:
        return self.values[42:54]


def wrap_angle(d):
    """Map angle differences into (-pi, pi] (shortest signed rotation)."""
    wrapped = (np.asarray(d, dtype=np.float64) + np.pi) % (2.0 * np.pi) - np.pi
    return np.where(wrapped == -np.pi, np.pi, wrapped)


def bone_angles(
    joints: np.ndarray | HandSkeleton, bones: BoneSet = BoneSet()
) -> tuple[np.ndarray, np.ndarray]:
    """Elevation and azimuth of each bone in world coordinates.

    Returns (angles[6, 2], degenerate[6]); angles[b] = (phi, theta) with
    theta = atan2(vy, vx) and phi = atan2(vz, hypot(vx, vy)). Zero-length
    bones get (0, 0) and are flagged in the degenerate mask.
    """
    if isinstance(joints, HandSkeleton):
        joints = joints.joints
    angles = np.zeros((N_BONES, 2), dtype=np.float64)
    degenerate = np.zeros(N_BONES, dtype=bool)
    for i, (start, end) in enumerate(bones.bones):
        v = joints[end] - joints[start]
        planar = np.hypot(v[0], v[1])
        if planar == 0.0 and v[2] == 0.0:
            degenerate[i] = True
            continue
        angles[i, 0] = np.arctan2(v[2], planar)
        angles[i, 1] = np.arctan2(v[1], v[0])
    return angles, degenerate


class FeatureStream:
    """Incremental feature extractor; one step per 7-joint frame.

    Offline extraction runs through the same object, so streaming and batch
    feature values are identical by construction.
    """

    def __init__(self, bones: BoneSet = BoneSet()):
        self.bones = bones
        self.reset()

    def reset(self) -> None:
        self._anchor: float | None = None
        self._prev_scaled: np.ndarray | None = None
        self._prev_angles: np.ndarray | None = None
        self._prev_degenerate: np.ndarray | None = None

    def step(self, skeleton: HandSkeleton) -> np.ndarray:
        joints = skeleton.joints
        if joints.shape[0] != 7:
            raise DataError("feature extraction requires the 7-joint format")
        palm = float(np.linalg.norm(joints[PALM_TOP] - joints[WRIST]))
        if palm < DEGENERACY_THRESHOLD:
            raise DegenerateSkeletonError(f"palm length {palm:g} below threshold")
        if self._anchor is None:
            self._anchor = palm

        standardized = joints / palm
        relative = (standardized - standardized[PALM_TOP]).reshape(-1)

        scaled = joints / self._anchor
        angles, degenerate = bone_angles(scaled, self.bones)

        out = np.zeros(FEATURE_DIM, dtype=np.float64)
        out[0:21] = relative
        if self._prev_scaled is not None:
            out[21:42] = (scaled - self._prev_scaled).reshape(-1)
            usable = ~(degenerate | self._prev_degenerate)
            diffs = wrap_angle(angles - self._prev_angles)
            diffs[~usable] = 0.0
            out[42:54] = diffs.reshape(-1)

        self._prev_scaled = scaled
        self._prev_angles = angles
        self._prev_degenerate = degenerate
        return out


def coord_diffs(seq: MotionSequence) -> np.ndarray:
    """First differences of anchor-scaled joint coordinates, (T, 21);
    frame 0 is all zeros."""
    return feature_matrix(seq)[:, 21:42]


def angle_diffs(seq: MotionSequence) -> np.ndarray:
    """Wrapped first differences of bone angles, (T, 12); frame 0 is zeros."""
    return feature_matrix(seq)[:, 42:54]


def feature_matrix(seq: MotionSequence, joint_map: JointMap | None = None) -> np.ndarray:
    """(T, 54) feature array for a sequence of at least two frames."""
    if len(seq) < 2:
        raise TooShortError("feature extraction needs at least 2 frames")
    needs_map = seq.frames[0].n_joints != 7 or (
        joint_map is not None and seq.format_id != SIMPLE_FORMAT
    )
    if needs_map:
        if joint_map is None:
            raise DataError("sequence is not 7-joint; pass a joint map")
        seq = MotionSequence(
            tuple(simplify(f, joint_map) for f in seq.frames),
            label=seq.label,
            source_id=seq.source_id,
        )
    stream = FeatureStream()
    return np.stack([stream.step(frame) for frame in seq.frames])


def extract_features(
    seq: MotionSequence, joint_map: JointMap | None = None
) -> list[PoseFeatureFrame]:
    """Full pipeline over a sequence: simplify (if mapped), standardize,
    difference blocks. Returns one PoseFeatureFrame per input frame."""
    return [PoseFeatureFrame(row) for row in feature_matrix(seq, joint_map)]


# ---------------------------------------------------------------------------
# .pff feature stream files
# ---------------------------------------------------------------------------


def save_pff(path, features: np.ndarray | list[PoseFeatureFrame]) -> None:
    if isinstance(features, list):
        features = np.stack([f.values for f in features])
    lines = [f"pff v1 dim={FEATURE_DIM}"]
    for row in features:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_pff(path) -> np.ndarray:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("pff v1 dim="):
        raise DataError(f"{path}: bad .pff header")
    dim = int(lines[0].split("dim=")[1])
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        values = line.split()
        if len(values) != dim:
            raise DataError(f"{path}:{lineno}: expected {dim} values")
        rows.append(np.array(values, dtype=np.float64))
    return np.stack(rows) if rows else np.zeros((0, dim))
