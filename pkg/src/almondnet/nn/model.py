"""Sequential model container: forward/backward over an ordered layer list."""

from __future__ import annotations

import copy

import numpy as np

from ..errors import StaleCache
from ..rng import Rng
from .layers import Layer, Param, Softmax


class Model:
    """An ordered stack of layers with a shared dtype.

    forward() records which layers ran so backward() can retrace them; when
    the stack ends in Softmax, through_softmax=False stops just before it,
    returning logits for the fused cross-entropy loss.
    """

    def __init__(self, layers: list[Layer], dtype=np.float32):
        self.layers = layers
        self.dtype = np.dtype(dtype)
        self._ran: list[Layer] | None = None

    def forward(
        self,
        x: np.ndarray,
        training: bool = False,
        rng: Rng | None = None,
        update_stats: bool = True,
        through_softmax: bool = True,
    ) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        ran = []
        layers = self.layers
        if not through_softmax and layers and isinstance(layers[-1], Softmax):
            layers = layers[:-1]
        for layer in layers:
            x = layer.forward(x, training=training, rng=rng, update_stats=update_stats)
            ran.append(layer)
        self._ran = ran
        return x

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._ran is None:
            raise StaleCache("backward called without a preceding forward")
        ran, self._ran = self._ran, None
        for layer in reversed(ran):
            dout = layer.backward(dout)
        return dout

    def params(self) -> list[Param]:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def state(self) -> list[Param]:
        out = []
        for layer in self.layers:
            out.extend(layer.state())
        return out

    def tensors(self) -> list[Param]:
        """All persisted tensors in a stable order: learnables then state."""
        return self.params() + self.state()

    def param_count(self) -> int:
        return sum(p.value.size for p in self.params())

    def zero_grad(self) -> None:
        for p in self.params():
            p.grad = None

    def clone(self, dtype=None) -> "Model":
        """Deep copy with fresh caches, optionally cast to another dtype."""
        other = copy.deepcopy(self)
        other._ran = None
        for layer in other.layers:
            layer._cache = None
        if dtype is not None:
            other.dtype = np.dtype(dtype)
            for p in other.tensors():
                p.value = p.value.astype(other.dtype)
                p.grad = None
        return other

    def summary(self) -> str:
        lines = []
        for layer in self.layers:
            lines.append(f"{layer.name}: {layer.describe()}")
        return "\n".join(lines)
