"""Temporal convolutional backbone: causal dilated residual stacks.

Produces one motion descriptor per input frame; the descriptor at time t
encodes the motion performed up to that frame only (strict causality via
left zero padding).

Three equivalent execution paths share the same kernel calls:
  * forward_graph — autodiff graph for training
  * forward       — frozen inference over plain arrays
  * stream_step   — stateful per-frame inference with per-layer ring buffers
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels, nn
from .errors import DimensionError
from .nn import ParamStore, Tensor, fan_in_uniform


@dataclass
class TcnConfig:
    input_dim: int = 54
    channels: int = 256
    kernel_size: int = 4
    dilations: tuple[int, ...] = (1, 2, 4)
    num_stacks: int = 2
    activation: str = "relu"
    dropout: float = 0.0

    def __post_init__(self):
        if min(self.input_dim, self.channels, self.kernel_size, self.num_stacks) < 1:
            raise DimensionError("all TCN dimensions must be positive")
        if any(d < 1 for d in self.dilations):
            raise DimensionError("dilations must be >= 1")
        if self.activation != "relu":
            raise DimensionError(f"unsupported activation {self.activation!r}")

    def block_specs(self) -> list[tuple[int, int, int]]:
        """(in_dim, out_dim, dilation) per residual block, in order."""
        specs = []
        in_dim = self.input_dim
        for _ in range(self.num_stacks):
            for dilation in self.dilations:
                specs.append((in_dim, self.channels, dilation))
                in_dim = self.channels
        return specs

    @property
    def receptive_field(self) -> int:
        """Frames that can influence one descriptor. Each residual block
        holds two dilated convolutions on its main path, so every block
        contributes 2*(K-1)*d frames of history."""
        k = self.kernel_size
        return 1 + sum(2 * (k - 1) * d for _, _, d in self.block_specs())

    def to_config_dict(self) -> dict[str, str]:
        return {
            "tcn.input_dim": str(self.input_dim),
            "tcn.channels": str(self.channels),
            "tcn.kernel_size": str(self.kernel_size),
            "tcn.dilations": ",".join(str(d) for d in self.dilations),
            "tcn.num_stacks": str(self.num_stacks),
            "tcn.activation": self.activation,
            "tcn.dropout": str(self.dropout),
        }

    @classmethod
    def from_config_dict(cls, cfg: dict[str, str]) -> "TcnConfig":
        return cls(
            input_dim=int(cfg["tcn.input_dim"]),
            channels=int(cfg["tcn.channels"]),
            kernel_size=int(cfg["tcn.kernel_size"]),
            dilations=tuple(int(d) for d in cfg["tcn.dilations"].split(",")),
            num_stacks=int(cfg["tcn.num_stacks"]),
            activation=cfg.get("tcn.activation", "relu"),
            dropout=float(cfg.get("tcn.dropout", "0.0")),
        )


@dataclass
class _LayerState:
    """Streaming state of one causal dilated conv layer."""

    ring: np.ndarray  # ((K-1)*d, C_in) past inputs; empty when K == 1
    taps: np.ndarray  # (K, C_in) scratch
    t: int = 0


class StreamState:
    """Ring buffers holding exactly the history each conv layer needs."""

    def __init__(self, tcn: "Tcn"):
        self._tcn = tcn
        self.layers: list[_LayerState] = []
        k = tcn.config.kernel_size
        for in_dim, out_dim, dilation in tcn.config.block_specs():
            for layer_in in (in_dim, out_dim):
                cap = (k - 1) * dilation
                self.layers.append(
                    _LayerState(
                        ring=np.zeros((cap, layer_in), dtype=tcn.dtype),
                        taps=np.zeros((k, layer_in), dtype=tcn.dtype),
                    )
                )
        self.frame_count = 0

    def reset(self) -> None:
        for layer in self.layers:
            layer.ring[...] = 0.0
            layer.taps[...] = 0.0
            layer.t = 0
        self.frame_count = 0


class Tcn:
    """Binds a TcnConfig to its parameters in a ParamStore."""

    def __init__(self, config: TcnConfig, store: ParamStore):
        self.config = config
        self.store = store

    @property
    def dtype(self):
        return self.store.dtype

    @staticmethod
    def init_params(config: TcnConfig, store: ParamStore, rng: np.random.Generator) -> None:
        k = config.kernel_size
        for i, (in_dim, out_dim, dilation) in enumerate(config.block_specs()):
            store.add(f"tcn.b{i}.conv1.w", fan_in_uniform(rng, (k, in_dim, out_dim), k * in_dim))
            store.add(f"tcn.b{i}.conv1.b", np.zeros(out_dim))
            store.add(f"tcn.b{i}.conv2.w", fan_in_uniform(rng, (k, out_dim, out_dim), k * out_dim))
            store.add(f"tcn.b{i}.conv2.b", np.zeros(out_dim))
            if in_dim != out_dim:
                store.add(f"tcn.b{i}.proj.w", fan_in_uniform(rng, (in_dim, out_dim), in_dim))

    def _block_params(self, i: int, in_dim: int, out_dim: int):
        s = self.store
        proj = s[f"tcn.b{i}.proj.w"] if in_dim != out_dim else None
        return (
            s[f"tcn.b{i}.conv1.w"],
            s[f"tcn.b{i}.conv1.b"],
            s[f"tcn.b{i}.conv2.w"],
            s[f"tcn.b{i}.conv2.b"],
            proj,
        )

    def forward_graph(self, x: Tensor, dropout_rng: np.random.Generator | None = None) -> Tensor:
        """Training-path forward: [T, input_dim] -> [T, channels]."""
        if x.data.ndim != 2 or x.data.shape[1] != self.config.input_dim:
            raise DimensionError(
                f"expected [T, {self.config.input_dim}] input, got {x.data.shape}"
            )
        h = x
        p = self.config.dropout
        for i, (in_dim, out_dim, dilation) in enumerate(self.config.block_specs()):
            w1, b1, w2, b2, proj = self._block_params(i, in_dim, out_dim)
            y = nn.relu(nn.causal_conv1d(h, w1, b1, dilation))
            if p > 0 and dropout_rng is not None:
                y = nn.dropout(y, p, dropout_rng)
            y = nn.relu(nn.causal_conv1d(y, w2, b2, dilation))
            if p > 0 and dropout_rng is not None:
                y = nn.dropout(y, p, dropout_rng)
            skip = h if proj is None else nn.matmul(h, proj)
            h = nn.add(y, skip)
        return h

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Frozen inference forward: [T, input_dim] -> [T, channels]."""
        x = np.ascontiguousarray(x, dtype=self.dtype)
        if x.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise DimensionError(f"expected [T, {self.config.input_dim}] input, got {x.shape}")
        h = x
        for i, (in_dim, out_dim, dilation) in enumerate(self.config.block_specs()):
            w1, b1, w2, b2, proj = self._block_params(i, in_dim, out_dim)
            y = np.maximum(_kernels.conv_forward(h, w1.data, b1.data, dilation), 0.0)
            y = np.maximum(_kernels.conv_forward(y, w2.data, b2.data, dilation), 0.0)
            skip = h if proj is None else h @ proj.data
            h = y + skip
        return h

    def new_stream_state(self) -> StreamState:
        return StreamState(self)

    @staticmethod
    def _layer_step(state: _LayerState, x: np.ndarray, w, b, dilation: int) -> np.ndarray:
        k = w.shape[0]
        cap = (k - 1) * dilation
        taps = state.taps
        taps[k - 1] = x
        t = state.t
        for m in range(1, k):
            j = t - m * dilation
            if j >= 0:
                taps[k - 1 - m] = state.ring[j % cap]
            else:
                taps[k - 1 - m] = 0.0
        y = _kernels.conv_step(taps, w, b)
        if cap:
            state.ring[t % cap] = x
        state.t += 1
        return y

    def stream_step(self, state: StreamState, frame: np.ndarray) -> np.ndarray:
        """One streaming step; returns exactly the descriptor forward() would
        produce at this position, updating the state in place."""
        x = np.ascontiguousarray(frame, dtype=self.dtype)
        if x.shape != (self.config.input_dim,):
            raise DimensionError(f"expected a [{self.config.input_dim}] frame, got {x.shape}")
        h = x
        li = 0
        for i, (in_dim, out_dim, dilation) in enumerate(self.config.block_specs()):
            w1, b1, w2, b2, proj = self._block_params(i, in_dim, out_dim)
            y = np.maximum(self._layer_step(state.layers[li], h, w1.data, b1.data, dilation), 0.0)
            li += 1
            y = np.maximum(self._layer_step(state.layers[li], y, w2.data, b2.data, dilation), 0.0)
            li += 1
            skip = h if proj is None else h @ proj.data
            h = y + skip
        state.frame_count += 1
        return h
