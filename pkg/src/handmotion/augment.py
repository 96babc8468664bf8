"""Skeleton-sequence augmentations for training and reference-set expansion.

All augmentations operate on raw skeleton sequences, before feature
extraction: speed resampling, 1-in-N frame skipping, random cropping,
coordinate jitter, and rotation (small-angle viewpoint jitter or full
uniform 3D rotation). Labels and joint counts are always preserved.

Randomness is explicit: every function takes a numpy Generator (or a seed),
and batch helpers derive one child stream per sample from (seed, index) so
results do not depend on scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InvalidRotationError, TooShortError
from .skeleton import MotionSequence


@dataclass
class AugmentConfig:
    speed_range: tuple[float, float] = (0.7, 1.3)
    skip_stride: int = 3
    max_len: int = 32
    coord_noise_sigma: float = 0.01
    small_rot_max: float = np.deg2rad(10.0)
    full_rotation: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.speed_range[0] <= 0:
            raise DataError("speed_range minimum must be > 0")
        if self.max_len < 2:
            raise DataError("max_len must be >= 2")
        if self.coord_noise_sigma < 0:
            raise DataError("coord_noise_sigma must be >= 0")
        if not 0 <= self.small_rot_max <= np.pi:
            raise DataError("small_rot_max must lie in [0, pi]")
        if self.skip_stride < 1:
            raise DataError("skip_stride must be >= 1")


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def resample_speed(seq: MotionSequence, factor: float) -> MotionSequence:
    """Linear temporal resampling; output length round(T * factor), min 2.

    First and last frames are preserved exactly; frames landing on integer
    positions are copied bit-exactly.
    """
    if factor <= 0:
        raise DataError("resampling factor must be > 0")
    t = len(seq)
    if t < 2:
        raise TooShortError("resampling needs at least 2 frames")
    new_len = max(2, round(t * factor))
    if new_len == t:
        return seq
    coords = seq.as_array()
    positions = np.linspace(0.0, t - 1.0, new_len)
    lo = np.floor(positions).astype(int)
    frac = positions - lo
    hi = np.minimum(lo + 1, t - 1)
    out = coords[lo] * (1.0 - frac)[:, None, None] + coords[hi] * frac[:, None, None]
    exact = frac == 0.0
    out[exact] = coords[lo[exact]]
    return seq.replace_frames(out)


def frame_skip(seq: MotionSequence, stride: int, offset: int = 0) -> MotionSequence:
    """Keep frames offset, offset+stride, offset+2*stride, ..."""
    if not 0 <= offset < stride:
        raise DataError(f"offset must satisfy 0 <= offset < stride, got {offset}/{stride}")
    frames = seq.frames[offset::stride]
    if len(frames) < 2:
        raise TooShortError(f"frame skip left {len(frames)} frame(s); need at least 2")
    return MotionSequence(frames, label=seq.label, source_id=seq.source_id)


def random_crop(seq: MotionSequence, max_len: int, rng) -> MotionSequence:
    """Uniformly random contiguous window of max_len frames (identity when
    the sequence already fits)."""
    if max_len < 2:
        raise DataError("max_len must be >= 2")
    rng = _as_rng(rng)
    t = len(seq)
    if t <= max_len:
        return seq
    start = int(rng.integers(0, t - max_len + 1))
    frames = seq.frames[start : start + max_len]
    return MotionSequence(frames, label=seq.label, source_id=seq.source_id)


def jitter(seq: MotionSequence, sigma: float, rng) -> MotionSequence:
    """Add independent zero-mean Gaussian noise to every coordinate."""
    if sigma < 0:
        raise DataError("sigma must be >= 0")
    if sigma == 0:
        return seq
    rng = _as_rng(rng)
    coords = seq.as_array()
    return seq.replace_frames(coords + rng.normal(0.0, sigma, size=coords.shape))


def check_rotation(rotation: np.ndarray) -> np.ndarray:
    rotation = np.asarray(rotation, dtype=np.float64)
    if rotation.shape != (3, 3):
        raise InvalidRotationError(f"rotation must be 3x3, got {rotation.shape}")
    if not np.allclose(rotation @ rotation.T, np.eye(3), atol=1e-9):
        raise InvalidRotationError("matrix is not orthonormal")
    if not np.isclose(np.linalg.det(rotation), 1.0, atol=1e-6):
        raise InvalidRotationError("matrix determinant is not +1")
    return rotation


def rotate(seq: MotionSequence, rotation: np.ndarray) -> MotionSequence:
    """Apply one proper rotation matrix to every joint of every frame."""
    rotation = check_rotation(rotation)
    coords = seq.as_array()
    return seq.replace_frames(coords @ rotation.T)


def axis_rotation(axis: int, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    m = np.eye(3)
    i, j = [(1, 2), (0, 2), (0, 1)][axis]
    m[i, i] = c
    m[j, j] = c
    m[i, j] = -s if axis != 1 else s
    m[j, i] = s if axis != 1 else -s
    return m


def small_rotation_matrix(rng, max_angle: float) -> np.ndarray:
    """Viewpoint jitter: per-axis angles uniform in [-max_angle, max_angle],
    composed as Rz @ Ry @ Rx."""
    rng = _as_rng(rng)
    ax, ay, az = rng.uniform(-max_angle, max_angle, size=3)
    return axis_rotation(2, az) @ axis_rotation(1, ay) @ axis_rotation(0, ax)


def _quaternion_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def uniform_rotation_matrix(rng) -> np.ndarray:
    """Uniformly distributed 3D rotation via a unit quaternion (a normalized
    4D Gaussian sample is uniform on the quaternion sphere)."""
    rng = _as_rng(rng)
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return _quaternion_to_matrix(q)


def scaled_uniform_rotation(rng, scale: float) -> np.ndarray:
    """A uniform random rotation with its angle multiplied by `scale`.

    scale=1 reproduces the uniform distribution exactly; scale=0 is the
    identity. Used to anneal the batch-rotation magnitude during contrastive
    warm-up.
    """
    rng = _as_rng(rng)
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    if q[0] < 0:
        q = -q  # shortest-arc representative
    if scale >= 1.0:
        return _quaternion_to_matrix(q)
    if scale <= 0.0:
        return np.eye(3)
    vec_norm = np.linalg.norm(q[1:])
    if vec_norm < 1e-12:
        return np.eye(3)
    half_angle = np.arctan2(vec_norm, q[0]) * scale
    axis = q[1:] / vec_norm
    scaled = np.concatenate([[np.cos(half_angle)], np.sin(half_angle) * axis])
    return _quaternion_to_matrix(scaled)


def augment_sequence(
    seq: MotionSequence,
    config: AugmentConfig,
    rng,
    include_skip: bool = True,
    rotation_scale: float = 1.0,
) -> tuple[MotionSequence, np.ndarray | None]:
    """The full training augmentation pipeline, in order: speed resampling,
    random-offset frame skipping, cropping, jitter, small rotation, and
    (when enabled) a full uniform rotation.

    With include_skip=False (reference-set expansion, where the deterministic
    1-in-N skip happens later, at embedding time) the skip stage is omitted
    and the crop budget grows to max_len * skip_stride raw frames so the
    downstream skip still sees max_len kept frames.

    Returns the augmented sequence and the full-rotation matrix (None when
    full_rotation is off).
    """
    rng = _as_rng(rng)
    factor = rng.uniform(*config.speed_range)
    out = resample_speed(seq, factor)
    crop_len = config.max_len
    if include_skip and config.skip_stride > 1:
        max_offset = min(config.skip_stride - 1, len(out) - 1 - config.skip_stride)
        if max_offset < 0:
            raise TooShortError(
                f"{len(out)} frames cannot survive a 1-in-{config.skip_stride} skip"
            )
        offset = int(rng.integers(0, max_offset + 1))
        out = frame_skip(out, config.skip_stride, offset)
    elif not include_skip:
        crop_len = config.max_len * config.skip_stride
    out = random_crop(out, crop_len, rng)
    out = jitter(out, config.coord_noise_sigma, rng)
    if config.small_rot_max > 0:
        out = rotate(out, small_rotation_matrix(rng, config.small_rot_max))
    full = None
    if config.full_rotation:
        full = scaled_uniform_rotation(rng, rotation_scale)
        out = rotate(out, full)
    return out, full


def augment_reference_set(
    refs: list[MotionSequence],
    multiplier: int,
    rng,
    config: AugmentConfig | None = None,
) -> list[MotionSequence]:
    """Expand a reference set: originals plus (multiplier-1) augmented copies
    of each (speed, crop, jitter, small rotation), labels inherited.

    Per-copy RNG streams derive from (seed, index) so the result is
    independent of evaluation order.
    """
    if multiplier < 1:
        raise DataError("multiplier must be >= 1")
    rng = _as_rng(rng)
    base_seed = int(rng.integers(0, 2**63 - 1))
    if config is None:
        config = AugmentConfig()
    out = list(refs)
    index = 0
    for _ in range(multiplier - 1):
        for seq in refs:
            child = np.random.default_rng([base_seed, index])
            index += 1
            augmented, _ = augment_sequence(seq, config, child, include_skip=False)
            out.append(augmented)
    return out
