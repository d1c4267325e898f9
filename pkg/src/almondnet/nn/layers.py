"""Layer vocabulary for the sequential network: conv, pool, dropout,
flatten, dense, batchnorm, relu, softmax.

Conventions, stated once:
  - Activations are numpy arrays in N,H,W,C row-major layout (dense layers
    take N,D).
  - forward(x, training, rng, update_stats) caches whatever backward needs;
    backward(dout) must follow a forward and returns the input gradient.
  - Learnable parameters are Param objects; gradients are written to
    param.grad by backward. Non-learnable persisted state (batchnorm running
    statistics) is reported by state().
  - Same padding pads symmetrically with the extra pixel on the bottom/right
    and yields H' = ceil(H / stride); valid windows must fit entirely inside.
"""

from __future__ import annotations

import numpy as np

from ..errors import (
    InvalidRate,
    ShapeMismatch,
    ShapeUnderflow,
    StaleCache,
    ZeroBatch,
)
from ..rng import Rng


class Param:
    """A named learnable tensor and its current gradient."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad: np.ndarray | None = None

    def __repr__(self) -> str:
        return f"Param({self.name}, shape={self.value.shape})"


def he_uniform(shape: tuple[int, ...], fan_in: int, rng: Rng, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    n = int(np.prod(shape))
    flat = np.array(rng.uniform_array(n, -limit, limit), dtype=dtype)
    return flat.reshape(shape)


def conv_out_len(size: int, kernel: int, stride: int, padding: str) -> int:
    if padding == "same":
        return -(-size // stride)
    if size < kernel:
        raise ShapeUnderflow(f"valid convolution: input {size} < kernel {kernel}")
    return (size - kernel) // stride + 1


def pool_out_len(size: int, pool: int, stride: int) -> int:
    if size < pool:
        raise ShapeUnderflow(f"pool window {pool} does not fit input extent {size}")
    return (size - pool) // stride + 1


def _same_pad(size: int, kernel: int, stride: int) -> tuple[int, int]:
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    lead = total // 2
    return lead, total - lead


class Layer:
    """Base class; concrete layers override forward/backward/output_shape."""

    def __init__(self, name: str):
        self.name = name
        self._cache = None

    def params(self) -> list[Param]:
        return []

    def state(self) -> list[Param]:
        return []

    def forward(
        self,
        x: np.ndarray,
        training: bool = False,
        rng: Rng | None = None,
        update_stats: bool = True,
    ) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        return shape

    def param_count(self) -> int:
        return sum(p.value.size for p in self.params())

    def describe(self) -> str:
        return type(self).__name__

    def _take_cache(self):
        if self._cache is None:
            raise StaleCache(f"{self.name}: backward called without a cached forward")
        cache, self._cache = self._cache, None
        return cache


class Conv2D(Layer):
    """2D convolution (cross-correlation), NHWC in, NHWC out.

    Weights have shape (kh, kw, in_channels, filters). The forward loops
    over the kh*kw kernel taps and lets one matrix product per tap do the
    channel contraction, which keeps results independent of any blocking
    scheme while staying fast enough for desk-scale inputs.
    """

    def __init__(
        self,
        name: str,
        in_channels: int,
        filters: int,
        kernel: tuple[int, int] = (3, 3),
        stride: int = 1,
        padding: str = "same",
        rng: Rng | None = None,
        dtype=np.float32,
    ):
        super().__init__(name)
        if padding not in ("same", "valid"):
            raise ShapeMismatch(f"unknown padding {padding!r}")
        self.in_channels = in_channels
        self.filters = filters
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        kh, kw = kernel
        fan_in = kh * kw * in_channels
        if rng is None:
            weight = np.zeros((kh, kw, in_channels, filters), dtype=dtype)
        else:
            weight = he_uniform((kh, kw, in_channels, filters), fan_in, rng, dtype)
        self.weight = Param(f"{name}.weight", weight)
        self.bias = Param(f"{name}.bias", np.zeros(filters, dtype=dtype))

    def params(self) -> list[Param]:
        return [self.weight, self.bias]

    def describe(self) -> str:
        kh, kw = self.kernel
        return f"Conv2D({self.filters}, {kh}x{kw}, stride {self.stride}, {self.padding})"

    def output_shape(self, shape):
        h, w, c = shape
        if c != self.in_channels:
            raise ShapeMismatch(
                f"{self.name}: expected {self.in_channels} input channels, got {c}"
            )
        return (
            conv_out_len(h, self.kernel[0], self.stride, self.padding),
            conv_out_len(w, self.kernel[1], self.stride, self.padding),
            self.filters,
        )

    def _pad(self, x: np.ndarray) -> np.ndarray:
        if self.padding == "valid":
            return x
        kh, kw = self.kernel
        top, bottom = _same_pad(x.shape[1], kh, self.stride)
        left, right = _same_pad(x.shape[2], kw, self.stride)
        return np.pad(x, ((0, 0), (top, bottom), (left, right), (0, 0)))

    def forward(self, x, training=False, rng=None, update_stats=True):
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ShapeMismatch(
                f"{self.name}: expected (N,H,W,{self.in_channels}), got {x.shape}"
            )
        kh, kw = self.kernel
        s = self.stride
        out_h = conv_out_len(x.shape[1], kh, s, self.padding)
        out_w = conv_out_len(x.shape[2], kw, s, self.padding)
        x_pad = self._pad(x)
        w = self.weight.value
        out = np.empty((x.shape[0], out_h, out_w, self.filters), dtype=x.dtype)
        out[...] = self.bias.value
        for i in range(kh):
            for j in range(kw):
                x_slice = x_pad[:, i : i + s * out_h : s, j : j + s * out_w : s, :]
                out += x_slice @ w[i, j]
        self._cache = (x.shape, x_pad)
        return out

    def backward(self, dout):
        x_shape, x_pad = self._take_cache()
        kh, kw = self.kernel
        s = self.stride
        out_h, out_w = dout.shape[1], dout.shape[2]
        w = self.weight.value
        dw = np.zeros_like(w)
        dx_pad = np.zeros_like(x_pad)
        dout_flat = dout.reshape(-1, self.filters)
        for i in range(kh):
            for j in range(kw):
                x_slice = x_pad[:, i : i + s * out_h : s, j : j + s * out_w : s, :]
                dw[i, j] = x_slice.reshape(-1, self.in_channels).T @ dout_flat
                dx_pad[:, i : i + s * out_h : s, j : j + s * out_w : s, :] += (
                    dout @ w[i, j].T
                )
        self.weight.grad = dw
        self.bias.grad = dout.sum(axis=(0, 1, 2))
        if self.padding == "valid":
            return dx_pad
        top, _ = _same_pad(x_shape[1], kh, s)
        left, _ = _same_pad(x_shape[2], kw, s)
        return dx_pad[
            :, top : top + x_shape[1], left : left + x_shape[2], :
        ]


class MaxPool2D(Layer):
    """Max pooling over valid windows; ties go to the first position in a
    row-major scan of the window so the backward routing is deterministic."""

    def __init__(self, name: str, pool: int, stride: int | None = None):
        super().__init__(name)
        if pool < 1:
            raise ShapeMismatch(f"pool size must be >= 1, got {pool}")
        self.pool = pool
        self.stride = pool if stride is None else stride

    def describe(self) -> str:
        return f"MaxPool2D({self.pool}x{self.pool}, stride {self.stride})"

    def output_shape(self, shape):
        h, w, c = shape
        return (
            pool_out_len(h, self.pool, self.stride),
            pool_out_len(w, self.pool, self.stride),
            c,
        )

    def forward(self, x, training=False, rng=None, update_stats=True):
        p, s = self.pool, self.stride
        if x.shape[1] < p or x.shape[2] < p:
            raise ShapeMismatch(
                f"{self.name}: pool {p} does not fit input {x.shape[1]}x{x.shape[2]}"
            )
        out_h = (x.shape[1] - p) // s + 1
        out_w = (x.shape[2] - p) // s + 1
        best = None
        best_tap = None
        for tap, (i, j) in enumerate(
            (i, j) for i in range(p) for j in range(p)
        ):
            x_slice = x[:, i : i + s * out_h : s, j : j + s * out_w : s, :]
            if best is None:
                best = x_slice.copy()
                best_tap = np.zeros(x_slice.shape, dtype=np.int16)
            else:
                better = x_slice > best
                np.copyto(best, x_slice, where=better)
                np.copyto(best_tap, tap, where=better)
        self._cache = (x.shape, best_tap)
        return best

    def backward(self, dout):
        x_shape, best_tap = self._take_cache()
        p, s = self.pool, self.stride
        out_h, out_w = dout.shape[1], dout.shape[2]
        dx = np.zeros(x_shape, dtype=dout.dtype)
        for tap, (i, j) in enumerate(
            (i, j) for i in range(p) for j in range(p)
        ):
            dx[:, i : i + s * out_h : s, j : j + s * out_w : s, :] += dout * (
                best_tap == tap
            )
        return dx


class Dropout(Layer):
    """Inverted dropout. The spatial variant zeroes whole channels per
    sample instead of individual elements.

    With no generator supplied (or outside training) the layer is the
    identity; gradient checking relies on that to stay deterministic.
    """

    def __init__(self, name: str, rate: float, spatial: bool = False):
        super().__init__(name)
        if not 0.0 <= rate < 1.0:
            raise InvalidRate(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.spatial = spatial

    def describe(self) -> str:
        kind = "SpatialDropout" if self.spatial else "Dropout"
        return f"{kind}({self.rate})"

    def forward(self, x, training=False, rng=None, update_stats=True):
        if not training or rng is None or self.rate == 0.0:
            self._cache = (None,)
            return x
        if self.spatial:
            if x.ndim != 4:
                raise ShapeMismatch(
                    f"{self.name}: spatial dropout needs N,H,W,C input, got {x.shape}"
                )
            mask_shape = (x.shape[0], 1, 1, x.shape[3])
        else:
            mask_shape = x.shape
        n = int(np.prod(mask_shape))
        draws = np.array(rng.uniform_array(n, 0.0, 1.0)).reshape(mask_shape)
        mask = (draws >= self.rate).astype(x.dtype) / (1.0 - self.rate)
        self._cache = (mask,)
        return x * mask

    def backward(self, dout):
        (mask,) = self._take_cache()
        if mask is None:
            return dout
        return dout * mask


class Flatten(Layer):
    def forward(self, x, training=False, rng=None, update_stats=True):
        self._cache = (x.shape,)
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        (x_shape,) = self._take_cache()
        return dout.reshape(x_shape)

    def output_shape(self, shape):
        return (int(np.prod(shape)),)


class Dense(Layer):
    def __init__(
        self,
        name: str,
        in_features: int,
        units: int,
        rng: Rng | None = None,
        dtype=np.float32,
    ):
        super().__init__(name)
        self.in_features = in_features
        self.units = units
        if rng is None:
            weight = np.zeros((in_features, units), dtype=dtype)
        else:
            weight = he_uniform((in_features, units), in_features, rng, dtype)
        self.weight = Param(f"{name}.weight", weight)
        self.bias = Param(f"{name}.bias", np.zeros(units, dtype=dtype))

    def params(self):
        return [self.weight, self.bias]

    def describe(self) -> str:
        return f"Dense({self.units})"

    def output_shape(self, shape):
        if len(shape) != 1 or shape[0] != self.in_features:
            raise ShapeMismatch(
                f"{self.name}: expected ({self.in_features},), got {shape}"
            )
        return (self.units,)

    def forward(self, x, training=False, rng=None, update_stats=True):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeMismatch(
                f"{self.name}: expected (N,{self.in_features}), got {x.shape}"
            )
        self._cache = (x,)
        return x @ self.weight.value + self.bias.value

    def backward(self, dout):
        (x,) = self._take_cache()
        self.weight.grad = x.T @ dout
        self.bias.grad = dout.sum(axis=0)
        return dout @ self.weight.value.T


class BatchNorm(Layer):
    """Normalizes over all axes except the last (per feature/channel).

    Train mode uses biased batch variance and updates the running averages
    as running <- momentum*running + (1-momentum)*batch; infer mode
    normalizes by the running statistics.
    """

    def __init__(
        self,
        name: str,
        features: int,
        momentum: float = 0.99,
        eps: float = 1e-3,
        dtype=np.float32,
    ):
        super().__init__(name)
        self.features = features
        self.momentum = momentum
        self.eps = eps
        self.gamma = Param(f"{name}.gamma", np.ones(features, dtype=dtype))
        self.beta = Param(f"{name}.beta", np.zeros(features, dtype=dtype))
        self.running_mean = Param(f"{name}.running_mean", np.zeros(features, dtype=dtype))
        self.running_var = Param(f"{name}.running_var", np.ones(features, dtype=dtype))

    def params(self):
        return [self.gamma, self.beta]

    def state(self):
        return [self.running_mean, self.running_var]

    def describe(self) -> str:
        return f"BatchNorm({self.features})"

    def forward(self, x, training=False, rng=None, update_stats=True):
        if x.shape[-1] != self.features:
            raise ShapeMismatch(
                f"{self.name}: expected {self.features} features, got {x.shape}"
            )
        if x.shape[0] == 0:
            raise ZeroBatch(f"{self.name}: empty batch")
        axes = tuple(range(x.ndim - 1))
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)  # biased
            if update_stats:
                m = self.momentum
                rm, rv = self.running_mean.value, self.running_var.value
                rm *= m
                rm += (1.0 - m) * mean
                rv *= m
                rv += (1.0 - m) * var
        else:
            mean = self.running_mean.value
            var = self.running_var.value
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, axes, training)
        return self.gamma.value * xhat + self.beta.value

    def backward(self, dout):
        xhat, inv_std, axes, training = self._take_cache()
        self.gamma.grad = (dout * xhat).sum(axis=axes)
        self.beta.grad = dout.sum(axis=axes)
        dxhat = dout * self.gamma.value
        if not training:
            return dxhat * inv_std
        n = int(np.prod([xhat.shape[a] for a in axes]))
        sum_dxhat = dxhat.sum(axis=axes)
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=axes)
        return (inv_std / n) * (n * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)


class ReLU(Layer):
    def forward(self, x, training=False, rng=None, update_stats=True):
        mask = x > 0
        self._cache = (mask,)
        return x * mask

    def backward(self, dout):
        (mask,) = self._take_cache()
        return dout * mask


class Softmax(Layer):
    """Row softmax with max-subtraction stabilization (last axis)."""

    def forward(self, x, training=False, rng=None, update_stats=True):
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        p = e / e.sum(axis=-1, keepdims=True)
        self._cache = (p,)
        return p

    def backward(self, dout):
        (p,) = self._take_cache()
        inner = (dout * p).sum(axis=-1, keepdims=True)
        return p * (dout - inner)
