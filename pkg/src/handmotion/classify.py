"""Classification heads: intra-domain linear softmax, cross-domain few-shot
KNN over a reference descriptor set, per-frame online classification and
video-level probability averaging.

The KNN uses cosine distance (matching the contrastive training objective)
with inverse-distance vote weights. Ties at equal distance all vote and k
counts distinct distance values, which makes the output invariant to
duplicating the reference set; for continuous descriptors this coincides
with the classic k-nearest rule. References at distance < 1e-12 short-cut
to probability 1 for their label (split evenly when several labels match
exactly).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, DimensionError, SequenceTooLongError
from .features import feature_matrix
from .model import MotionModel
from .skeleton import JointMap, MotionSequence
from .augment import augment_reference_set, frame_skip

EXACT_MATCH_DISTANCE = 1e-12
DEFAULT_KS = (1, 3, 5, 7, 9, 11)
INFERENCE_SKIP_STRIDE = 3


@dataclass(frozen=True)
class ClassProbabilities:
    """Per-label probabilities over a fixed label vocabulary."""

    labels: tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.probs, dtype=np.float64)
        if arr.shape != (len(self.labels),):
            raise DimensionError("one probability per label required")
        if np.any(arr < 0) or not np.isclose(arr.sum(), 1.0, atol=1e-9):
            raise DataError("probabilities must be nonnegative and sum to 1")
        arr.flags.writeable = False
        object.__setattr__(self, "probs", arr)

    def top(self) -> tuple[str, float]:
        i = int(np.argmax(self.probs))
        return self.labels[i], float(self.probs[i])

    def prob_of(self, label: str) -> float:
        return float(self.probs[self.labels.index(label)])


class ReferenceSet:
    """Labeled descriptors for the few-shot KNN classifier."""

    def __init__(
        self,
        descriptors: np.ndarray,
        labels: Sequence[str],
        augmented: Sequence[bool] | None = None,
    ):
        descriptors = np.atleast_2d(np.asarray(descriptors, dtype=np.float64))
        if descriptors.shape[0] == 0:
            raise DataError("reference set must be nonempty")
        if len(labels) != descriptors.shape[0]:
            raise DataError("one label per descriptor required")
        if not np.all(np.isfinite(descriptors)):
            raise DataError("reference descriptors must be finite")
        norms = np.linalg.norm(descriptors, axis=1)
        if np.any(norms == 0):
            raise DataError("reference descriptors must be nonzero")
        self.descriptors = descriptors
        self.labels = [str(l) for l in labels]
        if augmented is None:
            self.augmented = np.zeros(len(self.labels), dtype=bool)
        else:
            self.augmented = np.asarray(augmented, dtype=bool)
        self._norms = norms
        self.label_set = tuple(sorted(set(self.labels)))

    def __len__(self) -> int:
        return self.descriptors.shape[0]

    def subsample(self, max_size: int, rng) -> "ReferenceSet":
        """Random cap on the reference count (reproducible for a seeded rng)."""
        if len(self) <= max_size:
            return self
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        keep = np.sort(rng.choice(len(self), size=max_size, replace=False))
        return ReferenceSet(
            self.descriptors[keep],
            [self.labels[i] for i in keep],
            self.augmented[keep],
        )

    def save_dsc(self, path) -> None:
        dim = self.descriptors.shape[1]
        lines = [f"dsc v1 dim={dim}"]
        for label, row in zip(self.labels, self.descriptors):
            if "\t" in label or "\n" in label:
                raise DataError(f"label {label!r} cannot contain tabs or newlines")
            lines.append(label + "\t" + " ".join(f"{v:.17g}" for v in row))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load_dsc(cls, path) -> "ReferenceSet":
        path = Path(path)
        lines = path.read_text().splitlines()
        if not lines or not lines[0].startswith("dsc v1 dim="):
            raise DataError(f"{path}: bad .dsc header")
        dim = int(lines[0].split("dim=")[1])
        labels, rows = [], []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            if "\t" not in line:
                raise DataError(f"{path}:{lineno}: missing label separator")
            label, values = line.split("\t", 1)
            row = np.array(values.split(), dtype=np.float64)
            if row.shape != (dim,):
                raise DataError(f"{path}:{lineno}: expected {dim} values, got {row.size}")
            labels.append(label)
            rows.append(row)
        return cls(np.stack(rows), labels)


def linear_classify(
    z: np.ndarray, weights: np.ndarray, bias: np.ndarray, labels: Sequence[str]
) -> ClassProbabilities:
    """softmax(W z + b) over the classifier's label vocabulary."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (weights.shape[0],):
        raise DimensionError(f"descriptor shape {z.shape} does not match W {weights.shape}")
    logits = z @ weights + bias
    e = np.exp(logits - logits.max())
    return ClassProbabilities(tuple(labels), e / e.sum())


def cosine_distances(z: np.ndarray, refs: ReferenceSet) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    norm = np.linalg.norm(z)
    if norm == 0:
        raise DataError("cosine distance undefined for a zero descriptor")
    sims = (refs.descriptors @ z) / (refs._norms * norm)
    # float error can push a perfect match to similarity 1 + eps
    return np.maximum(1.0 - sims, 0.0)


def knn_classify(z: np.ndarray, refs: ReferenceSet, k: int) -> ClassProbabilities:
    """Inverse-distance-weighted vote of the k nearest references."""
    if k < 1:
        raise DataError("k must be >= 1")
    if k > len(refs):
        raise DataError(f"k={k} exceeds the reference count {len(refs)}")
    distances = cosine_distances(z, refs)
    label_list = refs.label_set
    index = {l: i for i, l in enumerate(label_list)}
    votes = np.zeros(len(label_list))

    exact = distances < EXACT_MATCH_DISTANCE
    if np.any(exact):
        matched = sorted({refs.labels[i] for i in np.flatnonzero(exact)})
        for label in matched:
            votes[index[label]] = 1.0 / len(matched)
        return ClassProbabilities(label_list, votes)

    distinct = np.unique(distances)
    cutoff = distinct[min(k, len(distinct)) - 1]
    selected = np.flatnonzero(distances <= cutoff)
    for i in selected:
        votes[index[refs.labels[i]]] += 1.0 / distances[i]
    return ClassProbabilities(label_list, votes / votes.sum())


def sweep_k(
    targets: np.ndarray,
    target_labels: Sequence[str],
    refs: ReferenceSet,
    candidate_ks: Sequence[int] = DEFAULT_KS,
) -> tuple[int, dict[int, float]]:
    """Accuracy per candidate k; returns (best k, full table). Ties pick the
    smallest k."""
    targets = np.atleast_2d(targets)
    if targets.shape[0] != len(target_labels):
        raise DataError("one label per target required")
    table: dict[int, float] = {}
    for k in candidate_ks:
        correct = sum(
            knn_classify(z, refs, k).top()[0] == label
            for z, label in zip(targets, target_labels)
        )
        table[k] = correct / len(target_labels)
    best = max(sorted(table), key=lambda k: table[k])
    return best, table


def classify_stream(
    frames: Iterable[np.ndarray], model: MotionModel, refs: ReferenceSet, k: int
) -> tuple[list[ClassProbabilities], ClassProbabilities]:
    """Per-frame online classification plus the video-level average.

    `frames` are 54-dim pose feature vectors; each one advances the TCN
    stream state and is classified against the reference set. The video
    probability vector is the renormalized mean of the per-frame vectors.
    """
    state = model.new_stream_state()
    per_frame = []
    for frame in frames:
        descriptor = model.stream_step(state, frame)
        per_frame.append(knn_classify(descriptor, refs, k))
    if not per_frame:
        raise DataError("empty frame stream")
    mean = np.mean([p.probs for p in per_frame], axis=0)
    video = ClassProbabilities(per_frame[0].labels, mean / mean.sum())
    return per_frame, video


# ---------------------------------------------------------------------------
# inference pipeline helpers
# ---------------------------------------------------------------------------


def inference_features(
    seq: MotionSequence,
    joint_map: JointMap | None = None,
    skip_stride: int = INFERENCE_SKIP_STRIDE,
) -> np.ndarray:
    """Deterministic inference preprocessing: 1-in-N frame skip at offset 0,
    then feature extraction."""
    if skip_stride > 1 and len(seq) >= skip_stride + 1:
        seq = frame_skip(seq, skip_stride, 0)
    return feature_matrix(seq, joint_map)


def sequence_descriptors(
    model: MotionModel,
    seq: MotionSequence,
    joint_map: JointMap | None = None,
    per_frame: bool = False,
    skip_stride: int = INFERENCE_SKIP_STRIDE,
) -> np.ndarray:
    """Summary descriptor [1, C] (default) or per-frame descriptors [T, C]."""
    features = inference_features(seq, joint_map, skip_stride)
    descriptors = model.descriptors(features)
    if per_frame:
        return descriptors
    _, summary = model.summarize(descriptors)
    return summary[None, :]


def reference_set_from_sequences(
    model: MotionModel,
    sequences: list[MotionSequence],
    joint_map: JointMap | None = None,
    per_frame: bool = False,
    augment_multiplier: int = 1,
    rng=None,
    skip_stride: int = INFERENCE_SKIP_STRIDE,
) -> ReferenceSet:
    """Embed labeled sequences into a ReferenceSet, optionally expanding the
    raw sequences by augmentation first."""
    expanded = sequences
    flags: list[bool] = [False] * len(sequences)
    if augment_multiplier > 1:
        expanded = augment_reference_set(sequences, augment_multiplier, rng)
        flags = [False] * len(sequences) + [True] * (len(expanded) - len(sequences))
    descriptors, labels, augmented = [], [], []
    for seq, flag in zip(expanded, flags):
        block = sequence_descriptors(model, seq, joint_map, per_frame, skip_stride)
        for row in block:
            descriptors.append(row)
            labels.append(seq.label)
            augmented.append(flag)
    return ReferenceSet(np.stack(descriptors), labels, augmented)


def classify_sequence_linear(
    model: MotionModel,
    seq: MotionSequence,
    joint_map: JointMap | None = None,
    skip_stride: int = INFERENCE_SKIP_STRIDE,
) -> ClassProbabilities:
    """Linear classification of one sequence: summary descriptor when the
    sequence fits the summarizer, otherwise the mean of per-frame
    probabilities (long-sequence fallback)."""
    if not model.labels:
        raise DataError("model has no linear classifier head")
    features = inference_features(seq, joint_map, skip_stride)
    descriptors = model.descriptors(features)
    try:
        _, summary = model.summarize(descriptors)
        probs = model.class_probabilities(summary)
    except SequenceTooLongError:
        probs = model.class_probabilities(descriptors).mean(axis=0)
        probs = probs / probs.sum()
    return ClassProbabilities(model.labels, probs)


def evaluate_linear(
    model: MotionModel, dataset: list[MotionSequence], joint_map: JointMap | None = None
) -> float:
    """Accuracy of the linear head over labeled sequences."""
    correct = 0
    for seq in dataset:
        predicted, _ = classify_sequence_linear(model, seq, joint_map).top()
        correct += predicted == seq.label
    return correct / len(dataset)


def evaluate_knn(
    model: MotionModel,
    refs: ReferenceSet,
    targets: list[MotionSequence],
    joint_map: JointMap | None = None,
    candidate_ks: Sequence[int] = DEFAULT_KS,
    per_frame: bool = False,
) -> tuple[int, dict[int, float]]:
    """KNN accuracy over target sequences for each candidate k.

    per_frame=True classifies every per-frame descriptor and averages the
    probabilities per sequence (long-sequence/video mode). In summary mode,
    targets too long for the summarizer fall back to per-frame averaging.
    """
    best_table: dict[int, float] = {k: 0.0 for k in candidate_ks}
    n = len(targets)
    for seq in targets:
        use_per_frame = per_frame
        descriptors = sequence_descriptors(model, seq, joint_map, per_frame=True)
        if not per_frame:
            try:
                _, summary = model.summarize(descriptors)
                descriptors = summary[None, :]
            except SequenceTooLongError:
                use_per_frame = True
        if use_per_frame:
            for k in candidate_ks:
                probs = [knn_classify(d, refs, k) for d in descriptors]
                mean = np.mean([p.probs for p in probs], axis=0)
                video = ClassProbabilities(probs[0].labels, mean / mean.sum())
                best_table[k] += video.top()[0] == seq.label
        else:
            for k in candidate_ks:
                best_table[k] += knn_classify(descriptors[0], refs, k).top()[0] == seq.label
    table = {k: v / n for k, v in best_table.items()}
    best = max(sorted(table), key=lambda k: table[k])
    return best, table
