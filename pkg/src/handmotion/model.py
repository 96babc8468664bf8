"""The assembled motion representation model.

Bundles the TCN backbone, the summarization module and (for intra-domain
training) a linear classifier over one shared ParamStore, and owns HMDL
checkpoint persistence. Frozen inference on a MotionModel is read-only and
safe to share across streams.
"""

from __future__ import annotations

import json

import numpy as np

from . import nn
from .errors import DimensionError
from .nn import ParamStore, Tensor, fan_in_uniform
from .summarize import Summarizer, SummarizerConfig
from .tcn import StreamState, Tcn, TcnConfig

CHECKPOINT_FORMAT_KEY = "model.format"
CHECKPOINT_FORMAT = "handmotion-motion-model"


class MotionModel:
    def __init__(
        self,
        tcn_config: TcnConfig,
        summ_config: SummarizerConfig,
        store: ParamStore,
        labels: tuple[str, ...] | None = None,
    ):
        self.tcn_config = tcn_config
        self.summ_config = summ_config
        self.store = store
        self.labels = tuple(labels) if labels else None
        self.tcn = Tcn(tcn_config, store)
        self.summarizer = Summarizer(summ_config, tcn_config.channels, store)

    # ------------------------------------------------------------------
    # construction / persistence
    # ------------------------------------------------------------------

    @classmethod
    def init(
        cls,
        tcn_config: TcnConfig | None = None,
        summ_config: SummarizerConfig | None = None,
        labels: tuple[str, ...] | None = None,
        seed: int = 0,
        dtype=np.float64,
    ) -> "MotionModel":
        tcn_config = tcn_config or TcnConfig()
        summ_config = summ_config or SummarizerConfig()
        rng = np.random.default_rng(seed)
        store = ParamStore(dtype=dtype)
        Tcn.init_params(tcn_config, store, rng)
        Summarizer.init_params(summ_config, tcn_config.channels, store, rng)
        if labels:
            n = len(labels)
            store.add("cls.w", fan_in_uniform(rng, (tcn_config.channels, n), tcn_config.channels))
            store.add("cls.b", np.zeros(n))
        return cls(tcn_config, summ_config, store, labels)

    def astype(self, dtype) -> "MotionModel":
        return MotionModel(self.tcn_config, self.summ_config, self.store.astype(dtype), self.labels)

    @property
    def dtype(self):
        return self.store.dtype

    @property
    def n_classes(self) -> int:
        return len(self.labels) if self.labels else 0

    def save(self, path) -> None:
        config = {CHECKPOINT_FORMAT_KEY: CHECKPOINT_FORMAT}
        config.update(self.tcn_config.to_config_dict())
        config.update(self.summ_config.to_config_dict())
        config["model.labels"] = json.dumps(list(self.labels) if self.labels else [])
        nn.save_checkpoint(path, config, {n: t.data for n, t in self.store.items()})

    @classmethod
    def load(cls, path, dtype=np.float32) -> "MotionModel":
        config, tensors = nn.load_checkpoint(path)
        if config.get(CHECKPOINT_FORMAT_KEY) != CHECKPOINT_FORMAT:
            raise DimensionError(f"{path}: not a motion-model checkpoint")
        tcn_config = TcnConfig.from_config_dict(config)
        summ_config = SummarizerConfig.from_config_dict(config)
        labels = tuple(json.loads(config.get("model.labels", "[]"))) or None
        store = ParamStore(dtype=dtype)
        for name, array in tensors.items():
            store.add(name, array)
        return cls(tcn_config, summ_config, store, labels)

    # ------------------------------------------------------------------
    # frozen inference
    # ------------------------------------------------------------------

    def descriptors(self, features: np.ndarray) -> np.ndarray:
        """Per-frame motion descriptors, [T, 54] -> [T, channels]."""
        return self.tcn.forward(features)

    def summarize(self, descriptors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.summarizer.forward(descriptors)

    def summary_descriptor(self, features: np.ndarray) -> np.ndarray:
        """Sequence descriptor: summarizer over the per-frame descriptors."""
        _, summary = self.summarizer.forward(self.tcn.forward(features))
        return summary

    def class_probabilities(self, z: np.ndarray) -> np.ndarray:
        """Linear classifier head: softmax(W z + b)."""
        if not self.labels:
            raise DimensionError("model has no linear classifier head")
        logits = z @ self.store["cls.w"].data + self.store["cls.b"].data
        shifted = logits - logits.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)

    def new_stream_state(self) -> StreamState:
        return self.tcn.new_stream_state()

    def stream_step(self, state: StreamState, frame: np.ndarray) -> np.ndarray:
        return self.tcn.stream_step(state, frame)

    # ------------------------------------------------------------------
    # training graph
    # ------------------------------------------------------------------

    def sequence_summary_graph(
        self, features: np.ndarray, dropout_rng: np.random.Generator | None = None
    ) -> Tensor:
        x = Tensor(np.asarray(features, dtype=self.dtype))
        descriptors = self.tcn.forward_graph(x, dropout_rng)
        _, summary = self.summarizer.forward_graph(descriptors)
        return summary

    def logits_graph(self, summary: Tensor) -> Tensor:
        if not self.labels:
            raise DimensionError("model has no linear classifier head")
        return nn.linear(summary, self.store["cls.w"], self.store["cls.b"])
