"""Motion summarization: learned relevance weights over per-frame descriptors.

A kernel-1 convolution reduces each 256-dim descriptor to reduced_dim, the
reduced descriptors are concatenated in time order (front-padded with zeros
up to max_frames) and a single fully connected layer emits one sigmoid score
per frame slot. Scores of padded slots are masked to zero, the rest are L1
normalized, and the sequence descriptor is the weighted average of the
original per-frame descriptors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import DimensionError, SequenceTooLongError
from .nn import ParamStore, Tensor, fan_in_uniform


@dataclass
class SummarizerConfig:
    reduced_dim: int = 64
    perceptron_size: int = 32  # fan-out of the weight-emitting layer
    max_frames: int = 32  # must match the training crop length

    def __post_init__(self):
        if min(self.reduced_dim, self.perceptron_size, self.max_frames) < 1:
            raise DimensionError("all summarizer dimensions must be positive")
        if self.perceptron_size != self.max_frames:
            raise DimensionError(
                "perceptron_size must equal max_frames: one sigmoid output per frame slot"
            )

    def to_config_dict(self) -> dict[str, str]:
        return {
            "summarizer.reduced_dim": str(self.reduced_dim),
            "summarizer.perceptron_size": str(self.perceptron_size),
            "summarizer.max_frames": str(self.max_frames),
        }

    @classmethod
    def from_config_dict(cls, cfg: dict[str, str]) -> "SummarizerConfig":
        return cls(
            reduced_dim=int(cfg["summarizer.reduced_dim"]),
            perceptron_size=int(cfg["summarizer.perceptron_size"]),
            max_frames=int(cfg["summarizer.max_frames"]),
        )


class Summarizer:
    def __init__(self, config: SummarizerConfig, channels: int, store: ParamStore):
        self.config = config
        self.channels = channels
        self.store = store

    @staticmethod
    def init_params(
        config: SummarizerConfig, channels: int, store: ParamStore, rng: np.random.Generator
    ) -> None:
        store.add("summ.reduce.w", fan_in_uniform(rng, (channels, config.reduced_dim), channels))
        store.add("summ.reduce.b", np.zeros(config.reduced_dim))
        fan_in = config.max_frames * config.reduced_dim
        store.add("summ.weight.w", fan_in_uniform(rng, (fan_in, config.perceptron_size), fan_in))
        store.add("summ.weight.b", np.zeros(config.perceptron_size))

    def _check_length(self, t: int) -> None:
        if t < 1:
            raise DimensionError("summarize needs at least one descriptor")
        if t > self.config.max_frames:
            raise SequenceTooLongError(
                f"{t} frames exceed the summarizer maximum of {self.config.max_frames}; "
                "fall back to per-frame classification"
            )

    def _mask(self, t: int, dtype) -> np.ndarray:
        mask = np.zeros(self.config.max_frames, dtype=dtype)
        mask[self.config.max_frames - t :] = 1.0
        return mask

    def forward_graph(self, descriptors: Tensor) -> tuple[Tensor, Tensor]:
        """[T, channels] -> (weights [T], summary [channels])."""
        t = descriptors.data.shape[0]
        self._check_length(t)
        cfg = self.config
        s = self.store
        reduced = nn.linear(descriptors, s["summ.reduce.w"], s["summ.reduce.b"])
        padded = nn.pad_front_rows(reduced, cfg.max_frames)
        flat = nn.reshape(padded, (cfg.max_frames * cfg.reduced_dim,))
        scores = nn.sigmoid(nn.linear(flat, s["summ.weight.w"], s["summ.weight.b"]))
        masked = nn.mul(scores, Tensor(self._mask(t, descriptors.data.dtype)))
        weights_full = nn.l1_normalize(masked)
        weights = nn.narrow(weights_full, cfg.max_frames - t, t)
        summary = nn.matmul(weights, descriptors)
        return weights, summary

    def forward(self, descriptors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Frozen-inference twin of forward_graph."""
        descriptors = np.asarray(descriptors, dtype=self.store.dtype)
        t = descriptors.shape[0]
        self._check_length(t)
        cfg = self.config
        s = self.store
        reduced = descriptors @ s["summ.reduce.w"].data + s["summ.reduce.b"].data
        padded = np.zeros((cfg.max_frames, cfg.reduced_dim), dtype=descriptors.dtype)
        padded[cfg.max_frames - t :] = reduced
        flat = padded.reshape(cfg.max_frames * cfg.reduced_dim)
        logits = flat @ s["summ.weight.w"].data + s["summ.weight.b"].data
        scores = 1.0 / (1.0 + np.exp(-logits))
        masked = scores * self._mask(t, descriptors.dtype)
        weights_full = masked / np.abs(masked).sum()
        weights = weights_full[cfg.max_frames - t :]
        summary = weights @ descriptors
        return weights, summary
