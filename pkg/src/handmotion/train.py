"""Batch construction, loss functions and the two training regimes.

Intra-domain: categorical cross-entropy through the linear classifier,
summarizer and TCN. Cross-domain: NT-Xent contrastive loss over summary
descriptors, with one independent uniform 3D rotation per batch sequence on
top of the shared augmentation pipeline.

Every batch contains, for each category, 2 distinct source samples, each
included 3 times with independent augmentations.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .augment import AugmentConfig, augment_sequence
from .errors import DataError, NumericalError
from .features import feature_matrix
from .model import MotionModel
from .nn import Adam, Tensor
from .skeleton import JointMap, MotionSequence
from .summarize import SummarizerConfig
from .tcn import TcnConfig

COPIES_PER_SOURCE = 3
SOURCES_PER_CATEGORY = 2
PROB_CLAMP = 1e-12

cce_clamp_count = 0


def reset_cce_clamp_count() -> None:
    global cce_clamp_count
    cce_clamp_count = 0


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def cce_loss(probs: np.ndarray, true_label: int) -> float:
    """Categorical cross-entropy of one probability vector: -log p[y].

    Zero probability at the true label is clamped at 1e-12 and counted in
    cce_clamp_count.
    """
    global cce_clamp_count
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1:
        raise DataError("cce_loss expects a single probability vector")
    if not np.isclose(probs.sum(), 1.0, atol=1e-6):
        raise DataError(f"probabilities sum to {probs.sum():.8f}, not 1")
    if np.any(probs < 0) or np.any(probs > 1.0 + 1e-9):
        raise DataError("probabilities must lie in [0, 1]")
    p = probs[true_label]
    if p < PROB_CLAMP:
        cce_clamp_count += 1
        p = PROB_CLAMP
    return float(-np.log(p))


def cce_loss_graph(probs: Tensor, label_indices: np.ndarray) -> Tensor:
    """Mean cross-entropy over a [B, C] probability tensor (graph path)."""
    global cce_clamp_count
    b, c = probs.data.shape
    onehot = np.zeros((b, c), dtype=probs.data.dtype)
    onehot[np.arange(b), label_indices] = 1.0
    clamped = probs.data[np.arange(b), label_indices]
    cce_clamp_count += int(np.count_nonzero(clamped < PROB_CLAMP))
    picked = nn.tsum(nn.mul(nn.clamp_min(probs, PROB_CLAMP), Tensor(onehot)), axis=1)
    return nn.mul(nn.tsum(nn.log(picked)), -1.0 / b)


def nt_xent_loss(descriptors, labels, tau: float = 0.07):
    """Normalized temperature-scaled cross-entropy over cosine similarities.

    For each ordered pair (i, j) with the same label,
        l_ij = -log( exp(sim_ij / tau) / sum_{k != i} exp(sim_ik / tau) )
    and the loss is the mean of l_ij over all ordered positive pairs.

    Accepts a numpy array (returns a float) or a Tensor (returns a scalar
    graph node for training).
    """
    if tau <= 0:
        raise DataError("temperature must be > 0")
    is_graph = isinstance(descriptors, Tensor)
    z = descriptors if is_graph else Tensor(np.asarray(descriptors, dtype=np.float64))
    labels = list(labels)
    b = z.data.shape[0]
    if len(labels) != b:
        raise DataError("one label per descriptor required")
    same = np.equal.outer(np.array(labels, dtype=object), np.array(labels, dtype=object))
    positive = same & ~np.eye(b, dtype=bool)
    n_pairs = int(positive.sum())
    if n_pairs == 0:
        raise DataError("batch contains no positive pairs")
    off_diagonal = (1.0 - np.eye(b)).astype(z.data.dtype)
    positive = positive.astype(z.data.dtype)

    sims = nn.cosine_similarity_matrix(z)
    logits = nn.mul(sims, 1.0 / tau)
    denom = nn.tsum(nn.mul(nn.exp(logits), Tensor(off_diagonal)), axis=1, keepdims=True)
    pairwise = nn.sub(nn.log(denom), logits)  # [B, B]: l_ij before masking
    loss = nn.mul(nn.tsum(nn.mul(pairwise, Tensor(positive))), 1.0 / n_pairs)
    return loss if is_graph else loss.item()


# ---------------------------------------------------------------------------
# batch construction
# ---------------------------------------------------------------------------


@dataclass
class BatchEntry:
    features: np.ndarray  # (T, 54)
    label: str
    source_id: str
    copy_index: int
    rotation: np.ndarray | None = None


@dataclass
class Batch:
    entries: list[BatchEntry]

    @property
    def labels(self) -> list[str]:
        return [e.label for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def build_batch(
    dataset: list[MotionSequence],
    regime: str,
    augment_config: AugmentConfig,
    rng: np.random.Generator,
    joint_map: JointMap | None = None,
    rotation_scale: float = 1.0,
) -> Batch:
    """Sample one mini-batch: per category, 2 distinct sources, each with 3
    independently augmented copies. The cross regime adds one independent
    uniform rotation per copy (its magnitude scaled by rotation_scale during
    warm-up; 1.0 is the fully uniform distribution)."""
    if regime not in ("intra", "cross"):
        raise DataError(f"unknown regime {regime!r}")
    by_label: dict[str, list[MotionSequence]] = {}
    for seq in dataset:
        if seq.label is None:
            raise DataError("all training sequences need labels")
        by_label.setdefault(seq.label, []).append(seq)
    too_small = sorted(l for l, seqs in by_label.items() if len(seqs) < SOURCES_PER_CATEGORY)
    if too_small:
        raise DataError(f"categories with fewer than 2 samples: {too_small}")

    config = dataclasses.replace(augment_config, full_rotation=(regime == "cross"))
    entries = []
    for label in sorted(by_label):
        pool = by_label[label]
        chosen = rng.choice(len(pool), size=SOURCES_PER_CATEGORY, replace=False)
        for source_pos in chosen:
            source = pool[int(source_pos)]
            for copy_index in range(COPIES_PER_SOURCE):
                child = np.random.default_rng(rng.integers(0, 2**63 - 1))
                augmented, rotation = augment_sequence(
                    source, config, child, rotation_scale=rotation_scale
                )
                entries.append(
                    BatchEntry(
                        features=feature_matrix(augmented, joint_map),
                        label=label,
                        source_id=source.source_id or f"{label}/{int(source_pos)}",
                        copy_index=copy_index,
                        rotation=rotation,
                    )
                )
    return Batch(entries)


def batches_per_epoch(n_sequences: int, n_categories: int) -> int:
    """One epoch = ceil(|dataset| / batch-source-count) batches."""
    sources = SOURCES_PER_CATEGORY * n_categories
    return max(1, -(-n_sequences // sources))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    regime: str = "intra"
    epochs: int = 200
    lr: float = 1e-3
    temperature: float = 0.07
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    early_stop_accuracy: float | None = None  # intra regime only
    dtype: str = "float64"
    # cross regime: epochs over which the batch-rotation magnitude ramps from
    # 0 to fully uniform. 0 applies full rotations from the first step; the
    # ramp avoids a contrastive collapse on small desk-scale datasets.
    rotation_warmup_epochs: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise DataError("temperature must be > 0")
        if self.regime not in ("intra", "cross"):
            raise DataError(f"unknown regime {self.regime!r}")
        if self.epochs < 0:
            raise DataError("epochs must be >= 0")
        if self.rotation_warmup_epochs < 0:
            raise DataError("rotation_warmup_epochs must be >= 0")


def _batch_loss(model: MotionModel, batch: Batch, config: TrainConfig, label_index) -> Tensor:
    summaries = nn.stack_rows([model.sequence_summary_graph(e.features) for e in batch.entries])
    if config.regime == "intra":
        logits = nn.linear(summaries, model.store["cls.w"], model.store["cls.b"])
        probs = nn.softmax(logits, axis=-1)
        indices = np.array([label_index[e.label] for e in batch.entries])
        return cce_loss_graph(probs, indices)
    return nt_xent_loss(summaries, batch.labels, config.temperature)


def _dump_state(path, model: MotionModel, context: dict) -> None:
    payload = dict(context)
    payload["param_stats"] = {
        name: {
            "shape": list(t.data.shape),
            "min": float(np.min(t.data)),
            "max": float(np.max(t.data)),
            "finite": bool(np.all(np.isfinite(t.data))),
        }
        for name, t in model.store.items()
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def fit(
    dataset: list[MotionSequence],
    config: TrainConfig,
    tcn_config: TcnConfig | None = None,
    summ_config: SummarizerConfig | None = None,
    joint_map: JointMap | None = None,
    log_path=None,
    dump_path=None,
) -> tuple[MotionModel, list[dict]]:
    """Train a model from scratch; returns (best model, per-epoch log).

    The best state (highest training accuracy for intra, lowest epoch loss
    for cross) is kept and restored at the end. A NaN loss aborts with a
    diagnostic state dump.
    """
    from .classify import evaluate_linear  # local import to avoid a cycle

    labels = tuple(sorted({s.label for s in dataset if s.label is not None}))
    if not labels:
        raise DataError("training dataset has no labels")
    label_index = {l: i for i, l in enumerate(labels)}
    dtype = np.dtype(config.dtype)
    model = MotionModel.init(
        tcn_config,
        summ_config,
        labels=labels if config.regime == "intra" else None,
        seed=config.seed,
        dtype=dtype,
    )
    optimizer = Adam(model.store, lr=config.lr)
    rng = np.random.default_rng(config.seed)
    n_batches = batches_per_epoch(len(dataset), len(labels))

    log: list[dict] = []
    best_state = model.store.state_arrays()
    best_key: tuple = ()
    started = time.perf_counter()
    log_fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(config.epochs):
            epoch_loss = 0.0
            if config.regime == "cross" and config.rotation_warmup_epochs > 0:
                rotation_scale = min(1.0, epoch / config.rotation_warmup_epochs)
            else:
                rotation_scale = 1.0
            for batch_no in range(n_batches):
                batch = build_batch(
                    dataset, config.regime, config.augment, rng, joint_map, rotation_scale
                )
                try:
                    loss = _batch_loss(model, batch, config, label_index)
                    value = loss.item()
                    if not np.isfinite(value):
                        raise NumericalError(f"loss is {value}")
                    loss.backward()
                    optimizer.step()
                except NumericalError as exc:
                    context = {"epoch": epoch, "batch": batch_no, "error": str(exc)}
                    if dump_path:
                        _dump_state(dump_path, model, context)
                    raise NumericalError(
                        f"training aborted at epoch {epoch}, batch {batch_no}: {exc}"
                    ) from exc
                epoch_loss += value
            record = {
                "epoch": epoch,
                "loss": epoch_loss / n_batches,
                "wall_time": time.perf_counter() - started,
            }
            if config.regime == "intra":
                accuracy = evaluate_linear(model, dataset, joint_map)
                record["accuracy"] = accuracy
                key = (accuracy, -record["loss"])
            else:
                key = (-record["loss"],)
            if not best_key or key > best_key:
                best_key = key
                best_state = model.store.state_arrays()
            log.append(record)
            if log_fh:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
            if (
                config.regime == "intra"
                and config.early_stop_accuracy is not None
                and record["accuracy"] >= config.early_stop_accuracy
            ):
                break
    finally:
        if log_fh:
            log_fh.close()
    model.store.load_state_arrays(best_state)
    return model, log
