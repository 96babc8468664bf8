"""Procedural labeled hand-gesture sequences for tests and desk-scale runs.

Each sequence is a kinematically plausible 7-joint hand: the palm (wrist +
palm top) moves rigidly along a family-specific trajectory while fingertips
articulate relative to the palm. Palm length is exactly 1 before noise, so
generated skeletons always pass the standardization checks.

Families: swipe-right/left/up/down, circle-cw, circle-ccw, pinch, expand,
point-hold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .skeleton import SIMPLE_FORMAT, HandSkeleton, MotionSequence

FAMILIES = (
    "swipe-right",
    "swipe-left",
    "swipe-up",
    "swipe-down",
    "circle-cw",
    "circle-ccw",
    "pinch",
    "expand",
    "point-hold",
)

_WRIST_OFFSET = np.array([0.0, -1.0, 0.0])
_TIP_OFFSETS = np.array(
    [
        [-0.55, 0.35, 0.10],  # thumb
        [-0.22, 0.80, 0.05],  # index
        [0.00, 0.85, 0.00],  # middle
        [0.22, 0.78, 0.02],  # ring
        [0.42, 0.60, 0.08],  # pinky
    ]
)
_SWIPE_DIRS = {
    "swipe-right": np.array([1.0, 0.0, 0.0]),
    "swipe-left": np.array([-1.0, 0.0, 0.0]),
    "swipe-up": np.array([0.0, 1.0, 0.0]),
    "swipe-down": np.array([0.0, -1.0, 0.0]),
}


@dataclass
class GestureSpec:
    family: str
    duration_range: tuple[int, int] = (36, 90)
    amplitude_range: tuple[float, float] = (0.8, 1.6)
    noise_sigma: float = 0.0
    seed: int = 0
    idle_tail: tuple[int, int] = (0, 0)  # extra held-pose frames at the end

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DataError(f"unknown gesture family {self.family!r}; known: {FAMILIES}")
        if self.duration_range[0] < 6:
            raise DataError("duration must be at least 6 frames")
        if self.amplitude_range[0] <= 0:
            raise DataError("amplitude must be > 0")


def _smooth(s: np.ndarray) -> np.ndarray:
    """Monotone ease-in/ease-out ramp on [0, 1]."""
    return s * s * (3.0 - 2.0 * s)


def _pose(palm_pos: np.ndarray, tip_scales: np.ndarray, twist: float = 0.0) -> np.ndarray:
    joints = np.empty((7, 3))
    c, s = np.cos(twist), np.sin(twist)
    rot_z = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    joints[0] = palm_pos + rot_z @ _WRIST_OFFSET
    joints[1] = palm_pos
    joints[2:7] = palm_pos + (_TIP_OFFSETS * tip_scales[:, None]) @ rot_z.T
    return joints


def _trajectory(family: str, t_steps: int, amplitude: float, phase: float):
    """Per-frame palm positions (T, 3), fingertip scales (T, 5) and hand
    twist angles (T,) about the z-axis."""
    s = np.linspace(0.0, 1.0, t_steps)
    ramp = _smooth(s)
    palm = np.zeros((t_steps, 3))
    scales = np.ones((t_steps, 5))
    twist = np.zeros(t_steps)
    if family in _SWIPE_DIRS:
        palm = amplitude * ramp[:, None] * _SWIPE_DIRS[family]
    elif family in ("circle-cw", "circle-ccw"):
        # the hand twists as it follows the circle, like a rotation gesture
        sign = -1.0 if family == "circle-cw" else 1.0
        angle = phase + sign * 2.0 * np.pi * s
        radius = 0.5 * amplitude
        palm[:, 0] = radius * (np.cos(angle) - np.cos(phase))
        palm[:, 1] = radius * (np.sin(angle) - np.sin(phase))
        twist = sign * 2.0 * np.pi * s
    elif family == "pinch":
        scales = (1.0 - 0.65 * ramp)[:, None] * np.ones((1, 5))
    elif family == "expand":
        scales = (0.35 + 0.75 * ramp)[:, None] * np.ones((1, 5))
    elif family == "point-hold":
        scales = np.full((t_steps, 5), 0.35)
        scales[:, 1] = 1.25  # extended index finger
        drift = np.array([np.cos(phase), np.sin(phase), 0.15])
        palm = 0.05 * amplitude * s[:, None] * drift
    return palm, scales, twist


def generate(spec: GestureSpec, count: int) -> list[MotionSequence]:
    """Sample `count` labeled sequences with per-sequence duration,
    amplitude, phase and noise. Bit-reproducible for a fixed seed."""
    if count < 1:
        raise DataError("count must be >= 1")
    rng = np.random.default_rng(spec.seed)
    sequences = []
    for index in range(count):
        t_steps = int(rng.integers(spec.duration_range[0], spec.duration_range[1] + 1))
        amplitude = float(rng.uniform(*spec.amplitude_range))
        phase = float(rng.uniform(0.0, 2.0 * np.pi))
        palm, scales, twist = _trajectory(spec.family, t_steps, amplitude, phase)
        coords = np.stack([_pose(palm[t], scales[t], twist[t]) for t in range(t_steps)])
        tail_lo, tail_hi = spec.idle_tail
        if tail_hi > 0:
            tail = int(rng.integers(tail_lo, tail_hi + 1))
            if tail > 0:
                coords = np.concatenate([coords, np.repeat(coords[-1:], tail, axis=0)])
        if spec.noise_sigma > 0:
            coords = coords + rng.normal(0.0, spec.noise_sigma, size=coords.shape)
        frames = tuple(HandSkeleton(c, SIMPLE_FORMAT) for c in coords)
        sequences.append(
            MotionSequence(
                frames,
                label=spec.family,
                source_id=f"synth/{spec.family}/{spec.seed}/{index}",
            )
        )
    return sequences


def generate_dataset(
    families: tuple[str, ...],
    per_family: int,
    seed: int = 0,
    noise_sigma: float = 0.0,
    duration_range: tuple[int, int] = (36, 90),
    idle_tail: tuple[int, int] = (0, 0),
) -> list[MotionSequence]:
    """Convenience wrapper: a labeled multi-family corpus."""
    out = []
    for i, family in enumerate(families):
        spec = GestureSpec(
            family=family,
            duration_range=duration_range,
            noise_sigma=noise_sigma,
            seed=seed * 1009 + i,
            idle_tail=idle_tail,
        )
        out.extend(generate(spec, per_family))
    return out
