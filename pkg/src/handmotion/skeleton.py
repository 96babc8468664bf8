"""Hand skeleton representation, joint-layout mapping and standardization.

A hand pose is reduced to 7 joints (wrist, top of the palm, and the five
fingertips). Heterogeneous dataset layouts are mapped onto this format via
editable JointMap configuration files; a handful of defaults ship with the
package (see handmotion/joint_maps/).

Standardization makes poses scale invariant (palm length 1) and location
invariant (palm top at the origin), recomputed independently per frame.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DataError, DegenerateSkeletonError, LayoutMismatchError

ROLE_ORDER = (
    "wrist",
    "palm_top",
    "thumb_tip",
    "index_tip",
    "middle_tip",
    "ring_tip",
    "pinky_tip",
)
SIMPLE_FORMAT = "simple7"
WRIST, PALM_TOP = 0, 1

# Palm length below this (in the sequence's native unit) is a tracking failure.
DEGENERACY_THRESHOLD = 1e-6


@dataclass(frozen=True)
class HandSkeleton:
    """One frame's joint coordinates. Immutable after construction."""

    joints: np.ndarray  # (J, 3)
    format_id: str = SIMPLE_FORMAT

    def __post_init__(self):
        arr = np.array(self.joints, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise DataError(f"joints must be (J, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("skeleton contains non-finite coordinates")
        arr.flags.writeable = False
        object.__setattr__(self, "joints", arr)

    @property
    def n_joints(self) -> int:
        return self.joints.shape[0]


@dataclass(frozen=True)
class MotionSequence:
    """A time-ordered hand skeleton sequence with an optional label."""

    frames: tuple[HandSkeleton, ...]
    label: str | None = None
    source_id: str | None = None

    def __post_init__(self):
        frames = tuple(self.frames)
        if frames:
            fmt = frames[0].format_id
            joints = frames[0].n_joints
            for f in frames:
                if f.format_id != fmt or f.n_joints != joints:
                    raise DataError("all frames of a sequence must share one joint layout")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def format_id(self) -> str:
        return self.frames[0].format_id

    def as_array(self) -> np.ndarray:
        """(T, J, 3) coordinate array."""
        return np.stack([f.joints for f in self.frames])

    def replace_frames(self, coords: np.ndarray, format_id: str | None = None) -> "MotionSequence":
        fmt = format_id if format_id is not None else self.format_id
        frames = tuple(HandSkeleton(c, fmt) for c in coords)
        return MotionSequence(frames, label=self.label, source_id=self.source_id)


@dataclass
class JointMap:
    """Maps each of the seven roles to a source joint index or to a list of
    indices whose centroid defines the role."""

    role_to_source: dict[str, int | list[int]]
    format_id: str = ""
    source_joints: int | None = None
    description: str = ""

    def __post_init__(self):
        missing = [r for r in ROLE_ORDER if r not in self.role_to_source]
        if missing:
            raise DataError(f"joint map missing roles: {missing}")
        if self.source_joints is not None:
            self._check_indices(self.source_joints)

    def _check_indices(self, n_source: int) -> None:
        for role in ROLE_ORDER:
            spec = self.role_to_source[role]
            indices = [spec] if isinstance(spec, int) else list(spec)
            if not indices:
                raise LayoutMismatchError(f"role {role} maps to an empty index list")
            for idx in indices:
                if not 0 <= idx < n_source:
                    raise LayoutMismatchError(
                        f"role {role}: index {idx} out of range for {n_source}-joint layout"
                    )

    @classmethod
    def identity(cls) -> "JointMap":
        return cls(
            role_to_source={role: i for i, role in enumerate(ROLE_ORDER)},
            format_id=SIMPLE_FORMAT,
            source_joints=7,
            description="identity map for already-simplified skeletons",
        )

    @classmethod
    def from_dict(cls, raw: dict) -> "JointMap":
        return cls(
            role_to_source=raw["roles"],
            format_id=raw.get("format_id", ""),
            source_joints=raw.get("source_joints"),
            description=raw.get("description", ""),
        )

    @classmethod
    def from_json(cls, path) -> "JointMap":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_json(self, path) -> None:
        payload = {
            "format_id": self.format_id,
            "source_joints": self.source_joints,
            "description": self.description,
            "roles": self.role_to_source,
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def bundled_joint_map(name: str) -> JointMap:
    """Load one of the joint maps shipped with the package, e.g. 'shrec17_22'."""
    pkg = resources.files("handmotion.joint_maps")
    ref = pkg.joinpath(f"{name}.json")
    if not ref.is_file():
        available = sorted(p.name[:-5] for p in pkg.iterdir() if p.name.endswith(".json"))
        raise DataError(f"unknown bundled joint map {name!r}; available: {available}")
    return JointMap.from_dict(json.loads(ref.read_text()))


def simplify(skeleton: HandSkeleton, joint_map: JointMap) -> HandSkeleton:
    """Reduce a skeleton to the 7-joint format in fixed role order.

    Roles mapped to a single index copy that joint's coordinates bit-exactly;
    roles mapped to an index list take the arithmetic centroid.
    """
    joint_map._check_indices(skeleton.n_joints)
    out = np.empty((7, 3), dtype=np.float64)
    for i, role in enumerate(ROLE_ORDER):
        spec = joint_map.role_to_source[role]
        if isinstance(spec, int):
            out[i] = skeleton.joints[spec]
        else:
            out[i] = skeleton.joints[list(spec)].mean(axis=0)
    return HandSkeleton(out, SIMPLE_FORMAT)


def palm_length(skeleton: HandSkeleton) -> float:
    """Euclidean wrist-to-palm-top distance, the per-frame scale normalizer."""
    if skeleton.n_joints != 7:
        raise LayoutMismatchError("palm_length requires the 7-joint format")
    return float(np.linalg.norm(skeleton.joints[PALM_TOP] - skeleton.joints[WRIST]))


def standardize(skeleton: HandSkeleton) -> HandSkeleton:
    """Scale by 1/|P| then translate the palm top to the origin."""
    p = palm_length(skeleton)
    if p < DEGENERACY_THRESHOLD:
        raise DegenerateSkeletonError(f"palm length {p:g} below {DEGENERACY_THRESHOLD:g}")
    scaled = skeleton.joints / p
    return HandSkeleton(scaled - scaled[PALM_TOP], SIMPLE_FORMAT)


def simplify_sequence(seq: MotionSequence, joint_map: JointMap | None = None) -> MotionSequence:
    """Apply `simplify` to every frame; identity when the sequence is already
    in the 7-joint format and no map is given."""
    if joint_map is None:
        if seq.format_id == SIMPLE_FORMAT or (seq.frames and seq.frames[0].n_joints == 7):
            return seq
        raise LayoutMismatchError(
            f"sequence in format {seq.format_id!r} needs an explicit joint map"
        )
    frames = tuple(simplify(f, joint_map) for f in seq.frames)
    return MotionSequence(frames, label=seq.label, source_id=seq.source_id)


# ---------------------------------------------------------------------------
# canonical .skq sequence files
# ---------------------------------------------------------------------------


def save_skq(path, seq: MotionSequence) -> None:
    """Write the canonical text format: header then one frame per line."""
    n_joints = seq.frames[0].n_joints if seq.frames else 0
    label = seq.label if seq.label is not None else ""
    lines = [f"skq v1 joints={n_joints} label={label}"]
    for frame in seq.frames:
        lines.append(" ".join(f"{v:.17g}" for v in frame.joints.reshape(-1)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_skq(path, format_id: str | None = None) -> MotionSequence:
    path = Path(path)
    text = path.read_text().splitlines()
    if not text:
        raise DataError(f"{path}: empty file")
    header = text[0].split(" ", 3)
    if len(header) < 4 or header[0] != "skq" or header[1] != "v1":
        raise DataError(f"{path}: bad .skq header: {text[0]!r}")
    if not header[2].startswith("joints="):
        raise DataError(f"{path}: bad joints field in header")
    n_joints = int(header[2][len("joints=") :])
    if not header[3].startswith("label="):
        raise DataError(f"{path}: bad label field in header")
    label = header[3][len("label=") :] or None
    if format_id is None:
        format_id = SIMPLE_FORMAT if n_joints == 7 else f"raw{n_joints}"
    frames = []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        values = line.split()
        if len(values) != 3 * n_joints:
            raise DataError(
                f"{path}:{lineno}: expected {3 * n_joints} values, found {len(values)}"
            )
        try:
            coords = np.array(values, dtype=np.float64).reshape(n_joints, 3)
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: unparseable frame line") from exc
        frames.append(HandSkeleton(coords, format_id))
    return MotionSequence(tuple(frames), label=label, source_id=path.stem)


# ---------------------------------------------------------------------------
# dataset-native per-frame text layouts
# ---------------------------------------------------------------------------


@dataclass
class ColumnLayout:
    """Describes a dataset's frame-per-line text layout.

    leading_columns are skipped (e.g. F-PHAB's frame index); axis_order
    permutes each joint's three columns into (x, y, z).
    """

    joints: int
    leading_columns: int = 0
    axis_order: str = "xyz"
    format_id: str = ""

    _AXES = {"x": 0, "y": 1, "z": 2}

    def __post_init__(self):
        if sorted(self.axis_order) != ["x", "y", "z"]:
            raise DataError(f"axis_order must be a permutation of 'xyz': {self.axis_order!r}")

    @classmethod
    def from_json(cls, path) -> "ColumnLayout":
        raw = json.loads(Path(path).read_text())
        return cls(
            joints=raw["joints"],
            leading_columns=raw.get("leading_columns", 0),
            axis_order=raw.get("axis_order", "xyz"),
            format_id=raw.get("format_id", ""),
        )


def load_frames_txt(path, layout: ColumnLayout, label: str | None = None) -> MotionSequence:
    """Parse a dataset-native text file (one frame per line) into a sequence."""
    path = Path(path)
    expected = layout.leading_columns + 3 * layout.joints
    frames = []
    fmt = layout.format_id or f"raw{layout.joints}"
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        values = line.split()
        if len(values) != expected:
            raise DataError(f"{path}:{lineno}: expected {expected} columns, found {len(values)}")
        try:
            data = np.array(values[layout.leading_columns :], dtype=np.float64)
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: unparseable frame line") from exc
        coords = data.reshape(layout.joints, 3)
        perm = [ColumnLayout._AXES[a] for a in layout.axis_order]
        out = np.empty_like(coords)
        out[:, perm] = coords
        frames.append(HandSkeleton(out, fmt))
    if not frames:
        raise DataError(f"{path}: no frames found")
    return MotionSequence(tuple(frames), label=label, source_id=path.stem)
