"""Run configuration: a flat, sectioned, human-editable key-value file.

Sections mirror the pipeline components ([paths], [tcn], [summarizer],
[train], [augment], [split]); every hyperparameter appears with its default
so a generated template is self-documenting.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentConfig
from .errors import DataError
from .skeleton import JointMap, MotionSequence, bundled_joint_map
from .summarize import SummarizerConfig
from .tcn import TcnConfig
from .train import TrainConfig


@dataclass
class SplitSpec:
    mode: str = "none"  # none | ratio | loso
    ratio: str = "1:1"
    subject: str = ""
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("none", "ratio", "loso"):
            raise DataError(f"unknown split mode {self.mode!r}")
        if self.mode == "ratio":
            parts = self.ratio.split(":")
            if len(parts) != 2 or any(int(p) <= 0 for p in parts):
                raise DataError(f"ratio must look like '1:3', got {self.ratio!r}")


@dataclass
class RunConfig:
    dataset: str = ""
    checkpoint: str = ""
    output: str = ""
    joint_map: str = ""
    tcn: TcnConfig = field(default_factory=TcnConfig)
    summarizer: SummarizerConfig = field(default_factory=SummarizerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitSpec = field(default_factory=SplitSpec)

    def resolve_joint_map(self) -> JointMap | None:
        if not self.joint_map:
            return None
        path = Path(self.joint_map)
        if path.exists():
            return JointMap.from_json(path)
        return bundled_joint_map(self.joint_map)


def _get(parser: configparser.ConfigParser, section: str, key: str, default: str) -> str:
    if parser.has_option(section, key):
        value = parser.get(section, key).strip()
        if value:
            return value
    return default


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise DataError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.read(path)
    g = lambda s, k, d: _get(parser, s, k, d)

    tcn = TcnConfig(
        input_dim=int(g("tcn", "input_dim", "54")),
        channels=int(g("tcn", "channels", "256")),
        kernel_size=int(g("tcn", "kernel_size", "4")),
        dilations=tuple(int(d) for d in g("tcn", "dilations", "1,2,4").split(",")),
        num_stacks=int(g("tcn", "num_stacks", "2")),
        dropout=float(g("tcn", "dropout", "0.0")),
    )
    summarizer = SummarizerConfig(
        reduced_dim=int(g("summarizer", "reduced_dim", "64")),
        perceptron_size=int(g("summarizer", "perceptron_size", "32")),
        max_frames=int(g("summarizer", "max_frames", "32")),
    )
    augment = AugmentConfig(
        speed_range=(
            float(g("augment", "speed_min", "0.7")),
            float(g("augment", "speed_max", "1.3")),
        ),
        skip_stride=int(g("augment", "skip_stride", "3")),
        max_len=int(g("augment", "max_len", str(summarizer.max_frames))),
        coord_noise_sigma=float(g("augment", "coord_noise_sigma", "0.01")),
        small_rot_max=np.deg2rad(float(g("augment", "small_rot_max_deg", "10"))),
        full_rotation=g("augment", "full_rotation", "false").lower() == "true",
        seed=int(g("augment", "seed", "0")),
    )
    early_stop = g("train", "early_stop_accuracy", "")
    train = TrainConfig(
        regime=g("train", "regime", "intra"),
        epochs=int(g("train", "epochs", "200")),
        lr=float(g("train", "lr", "0.001")),
        temperature=float(g("train", "temperature", "0.07")),
        seed=int(g("train", "seed", "0")),
        augment=augment,
        early_stop_accuracy=float(early_stop) if early_stop else None,
        dtype=g("train", "dtype", "float64"),
        rotation_warmup_epochs=int(g("train", "rotation_warmup_epochs", "0")),
    )
    split = SplitSpec(
        mode=g("split", "mode", "none"),
        ratio=g("split", "ratio", "1:1"),
        subject=g("split", "subject", ""),
        seed=int(g("split", "seed", "0")),
    )
    config = RunConfig(
        dataset=g("paths", "dataset", ""),
        checkpoint=g("paths", "checkpoint", ""),
        output=g("paths", "output", ""),
        joint_map=g("paths", "joint_map", ""),
        tcn=tcn,
        summarizer=summarizer,
        train=train,
        split=split,
    )
    if config.joint_map:
        config.resolve_joint_map()  # fails early on a bad reference
    return config


DEFAULT_TEMPLATE = """\
[paths]
dataset =
checkpoint = model.hmdl
output = out
joint_map =

[tcn]
input_dim = 54
channels = 256
kernel_size = 4
dilations = 1,2,4
num_stacks = 2
dropout = 0.0

[summarizer]
reduced_dim = 64
perceptron_size = 32
max_frames = 32

[train]
regime = intra
epochs = 200
lr = 0.001
temperature = 0.07
seed = 0
early_stop_accuracy =
dtype = float64
rotation_warmup_epochs = 0

[augment]
speed_min = 0.7
speed_max = 1.3
skip_stride = 3
max_len = 32
coord_noise_sigma = 0.01
small_rot_max_deg = 10
full_rotation = false
seed = 0

[split]
mode = none
ratio = 1:1
subject =
seed = 0
"""


def write_default_config(path) -> None:
    Path(path).write_text(DEFAULT_TEMPLATE)


def split_dataset(
    sequences: list[MotionSequence], split: SplitSpec
) -> tuple[list[MotionSequence], list[MotionSequence]]:
    """Partition a corpus into (train, validation) per the split spec.

    ratio mode is stratified by label; loso holds out every sequence whose
    source_id starts with the given subject prefix.
    """
    if split.mode == "none":
        return list(sequences), []
    if split.mode == "loso":
        if not split.subject:
            raise DataError("loso split needs a subject prefix")
        train = [s for s in sequences if not (s.source_id or "").startswith(split.subject)]
        val = [s for s in sequences if (s.source_id or "").startswith(split.subject)]
        if not val:
            raise DataError(f"no sequences matched subject prefix {split.subject!r}")
        return train, val
    a, b = (int(p) for p in split.ratio.split(":"))
    frac = a / (a + b)
    rng = np.random.default_rng(split.seed)
    by_label: dict[str | None, list[MotionSequence]] = {}
    for seq in sequences:
        by_label.setdefault(seq.label, []).append(seq)
    train, val = [], []
    for label in sorted(by_label, key=str):
        pool = by_label[label]
        order = rng.permutation(len(pool))
        n_train = max(1, int(round(frac * len(pool))))
        n_train = min(n_train, len(pool) - 1) if len(pool) > 1 else n_train
        for pos, i in enumerate(order):
            (train if pos < n_train else val).append(pool[int(i)])
    return train, val
