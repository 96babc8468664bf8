"""Named parameter storage with matching gradient slots."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from .tensor import Tensor


class ParamStore:
    """Holds the model's learnable tensors, keyed by unique names.

    Every parameter is a leaf Tensor with requires_grad=True, so it always
    carries a same-shaped gradient accumulator.
    """

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise DimensionError(f"duplicate parameter name: {name}")
        tensor = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True)
        tensor.name = name
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.zero_grad()

    def n_parameters(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, tensor in self._params.items():
            if name not in arrays:
                raise DimensionError(f"missing parameter in state: {name}")
            value = np.asarray(arrays[name], dtype=self.dtype)
            if value.shape != tensor.data.shape:
                raise DimensionError(
                    f"shape mismatch for {name}: {value.shape} vs {tensor.data.shape}"
                )
            tensor.data = value.copy()

    def astype(self, dtype) -> "ParamStore":
        out = ParamStore(dtype=dtype)
        for name, tensor in self._params.items():
            out.add(name, tensor.data.astype(dtype))
        return out


def fan_in_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    """Fan-in-scaled uniform init for conv and linear weights."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)
