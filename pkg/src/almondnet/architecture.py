"""The AlmondNet-20 stack, its desk-scale mini variant, shape tracing, and
checkpoint persistence.

The full stack, in order: Conv(64,3x3,same)+ReLU -> MaxPool(2x2) ->
Conv(128)+ReLU -> MaxPool(2x2) -> SpatialDropout -> Conv(512)+ReLU ->
MaxPool(2x2) -> Conv(256)+ReLU -> MaxPool(2x2, stride 2) -> Conv(256)+ReLU ->
MaxPool(3x3) -> Conv(128)+ReLU -> MaxPool(2x2) -> Conv(128)+ReLU ->
MaxPool(2x2) -> Dropout -> Flatten -> Dense(64)+ReLU -> BatchNorm ->
Dense(2)+Softmax. All conv strides are 1 ("stride 2 in the 256-filter
layer" names the pool that follows it, whose stride is 2 by default anyway).
Filter counts and the first dense width scale with the channel multiplier
(rounded half up, floor 1); the output width stays 2.

The mini variant ("mini-v1") ends the pooling cascade at the 3x3 pool: the
two trailing conv/pool blocks are dropped, and so is the pool after the
first 256-filter conv, which is what lets a 32x32 input reach the 3x3 pool
with 4x4 feature maps instead of underflowing.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import SchemaMismatch, ShapeMismatch, ShapeUnderflow, VersionMismatch
from .nn import (
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    MaxPool2D,
    Model,
    ReLU,
    Softmax,
    conv_out_len,
    pool_out_len,
)
from .rng import Rng

FULL = "almondnet-20"
MINI = "mini-v1"
_VARIANTS = (FULL, MINI)

_INIT_STREAM = 0x494E4954


@dataclass(frozen=True)
class ModelConfig:
    name: str = FULL
    input_height: int = 210
    input_width: int = 320
    channel_multiplier: float = 1.0
    spatial_drop_rate: float = 0.2
    dense_drop_rate: float = 0.5
    conv_kernel: int = 3

    def validate(self) -> None:
        if self.name not in _VARIANTS:
            raise SchemaMismatch(f"unknown variant {self.name!r}, expected {_VARIANTS}")
        if self.channel_multiplier <= 0:
            raise SchemaMismatch(
                f"channel multiplier must be > 0, got {self.channel_multiplier}"
            )
        if self.input_height < 1 or self.input_width < 1:
            raise SchemaMismatch("input dimensions must be positive")
        if self.conv_kernel < 1:
            raise SchemaMismatch(f"conv kernel must be >= 1, got {self.conv_kernel}")

    def scaled(self, width: int) -> int:
        return max(1, int(math.floor(width * self.channel_multiplier + 0.5)))


def mini_config(**overrides) -> ModelConfig:
    """Desk-scale default: 32x32 input, quarter-width channels."""
    base = ModelConfig(
        name=MINI, input_height=32, input_width=32, channel_multiplier=0.25
    )
    return replace(base, **overrides)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: int = 0
    kernel: int = 3
    stride: int = 1
    padding: str = "same"
    pool: int = 0
    rate: float = 0.0
    units: int = 0
    momentum: float = 0.99
    eps: float = 1e-3


def build_almondnet20(config: ModelConfig) -> list[LayerSpec]:
    """Emit the full stack as LayerSpec rows, widths scaled per config."""
    config.validate()
    k = config.conv_kernel
    s = config.scaled

    def conv(width):
        return LayerSpec("conv2d", filters=s(width), kernel=k)

    def pool(p, stride=None):
        return LayerSpec("maxpool2d", pool=p, stride=p if stride is None else stride)

    relu = LayerSpec("relu")
    return [
        conv(64), relu, pool(2),
        conv(128), relu, pool(2),
        LayerSpec("spatial_dropout", rate=config.spatial_drop_rate),
        conv(512), relu, pool(2),
        conv(256), relu, pool(2, stride=2),
        conv(256), relu, pool(3),
        conv(128), relu, pool(2),
        conv(128), relu, pool(2),
        LayerSpec("dropout", rate=config.dense_drop_rate),
        LayerSpec("flatten"),
        LayerSpec("dense", units=s(64)), relu,
        LayerSpec("batchnorm"),
        LayerSpec("dense", units=2),
        LayerSpec("softmax"),
    ]


def build_mini_v1(config: ModelConfig) -> list[LayerSpec]:
    """Emit the truncated stack: cascade ends at the 3x3 pool, and the pool
    between the two 256-width convs is omitted (see module docstring)."""
    config.validate()
    k = config.conv_kernel
    s = config.scaled

    def conv(width):
        return LayerSpec("conv2d", filters=s(width), kernel=k)

    def pool(p):
        return LayerSpec("maxpool2d", pool=p, stride=p)

    relu = LayerSpec("relu")
    return [
        conv(64), relu, pool(2),
        conv(128), relu, pool(2),
        LayerSpec("spatial_dropout", rate=config.spatial_drop_rate),
        conv(512), relu, pool(2),
        conv(256), relu,
        conv(256), relu, pool(3),
        LayerSpec("dropout", rate=config.dense_drop_rate),
        LayerSpec("flatten"),
        LayerSpec("dense", units=s(64)), relu,
        LayerSpec("batchnorm"),
        LayerSpec("dense", units=2),
        LayerSpec("softmax"),
    ]


def build_stack(config: ModelConfig) -> list[LayerSpec]:
    config.validate()
    if config.name == MINI:
        return build_mini_v1(config)
    return build_almondnet20(config)


@dataclass
class TraceRow:
    layer: str
    output_shape: tuple[int, ...]
    params: int


@dataclass
class ShapeTrace:
    rows: list[TraceRow] = field(default_factory=list)
    total_params: int = 0


def _spec_label(spec: LayerSpec) -> str:
    if spec.kind == "conv2d":
        return f"conv2d({spec.filters}, {spec.kernel}x{spec.kernel}, {spec.padding})"
    if spec.kind == "maxpool2d":
        return f"maxpool2d({spec.pool}x{spec.pool}, stride {spec.stride})"
    if spec.kind in ("dropout", "spatial_dropout"):
        return f"{spec.kind}({spec.rate})"
    if spec.kind == "dense":
        return f"dense({spec.units})"
    return spec.kind


def shape_trace(specs: list[LayerSpec], input_shape: tuple[int, int, int]) -> ShapeTrace:
    """Apply the layer shape formulas spec by spec.

    input_shape is (height, width, channels); rows record each layer's
    output shape and learnable parameter count, spatial shapes as (h, w, c)
    and post-flatten shapes as (features,).
    """
    shape: tuple[int, ...] = tuple(input_shape)
    trace = ShapeTrace()
    for spec in specs:
        params = 0
        if spec.kind == "conv2d":
            h, w, c = shape
            try:
                shape = (
                    conv_out_len(h, spec.kernel, spec.stride, spec.padding),
                    conv_out_len(w, spec.kernel, spec.stride, spec.padding),
                    spec.filters,
                )
            except ShapeUnderflow as e:
                raise ShapeUnderflow(f"{_spec_label(spec)}: {e}") from None
            params = spec.kernel * spec.kernel * c * spec.filters + spec.filters
        elif spec.kind == "maxpool2d":
            h, w, c = shape
            if h < spec.pool or w < spec.pool:
                raise ShapeUnderflow(
                    f"{_spec_label(spec)}: window does not fit {h}x{w} input"
                )
            shape = (
                pool_out_len(h, spec.pool, spec.stride),
                pool_out_len(w, spec.pool, spec.stride),
                c,
            )
        elif spec.kind == "flatten":
            shape = (int(np.prod(shape)),)
        elif spec.kind == "dense":
            (d,) = shape
            params = d * spec.units + spec.units
            shape = (spec.units,)
        elif spec.kind == "batchnorm":
            params = 2 * shape[-1]
        elif spec.kind not in ("relu", "softmax", "dropout", "spatial_dropout"):
            raise SchemaMismatch(f"unknown layer kind {spec.kind!r}")
        trace.rows.append(TraceRow(_spec_label(spec), shape, params))
        trace.total_params += params
    return trace


def format_trace(trace: ShapeTrace) -> str:
    lines = [f"{'layer':<34} {'output shape':<18} {'params':>10}"]
    for row in trace.rows:
        shape = "x".join(str(d) for d in row.output_shape)
        lines.append(f"{row.layer:<34} {shape:<18} {row.params:>10}")
    lines.append(f"{'total':<34} {'':<18} {trace.total_params:>10}")
    return "\n".join(lines)


def instantiate(config: ModelConfig, seed: int | None = 0) -> Model:
    """Build a runnable Model from the config.

    seed drives He-uniform weight initialization through one derived stream
    per learnable layer; seed=None leaves all weights zero (used when a
    checkpoint will overwrite them anyway).
    """
    specs = build_stack(config)
    input_shape = (config.input_height, config.input_width, 1)
    shape_trace(specs, input_shape)  # surfaces ShapeUnderflow before building
    init = Rng(seed).derive(_INIT_STREAM) if seed is not None else None
    layers = []
    shape: tuple[int, ...] = input_shape
    counters: dict[str, int] = {}

    def next_name(kind: str) -> str:
        counters[kind] = counters.get(kind, 0) + 1
        return f"{kind}{counters[kind]}"

    for i, spec in enumerate(specs):
        rng = init.derive(i) if init is not None else None
        if spec.kind == "conv2d":
            layer = Conv2D(
                next_name("conv"),
                in_channels=shape[2],
                filters=spec.filters,
                kernel=(spec.kernel, spec.kernel),
                stride=spec.stride,
                padding=spec.padding,
                rng=rng,
            )
        elif spec.kind == "maxpool2d":
            layer = MaxPool2D(next_name("pool"), spec.pool, spec.stride)
        elif spec.kind == "spatial_dropout":
            layer = Dropout(next_name("sdrop"), spec.rate, spatial=True)
        elif spec.kind == "dropout":
            layer = Dropout(next_name("drop"), spec.rate, spatial=False)
        elif spec.kind == "flatten":
            layer = Flatten(next_name("flatten"))
        elif spec.kind == "dense":
            layer = Dense(next_name("dense"), in_features=shape[0], units=spec.units, rng=rng)
        elif spec.kind == "batchnorm":
            layer = BatchNorm(next_name("bn"), features=shape[-1],
                              momentum=spec.momentum, eps=spec.eps)
        elif spec.kind == "relu":
            layer = ReLU(next_name("relu"))
        else:
            layer = Softmax(next_name("softmax"))
        shape = layer.output_shape(shape)
        layers.append(layer)
    return Model(layers)


CHECKPOINT_MAGIC = "almondnet-checkpoint"
CHECKPOINT_VERSION = "v1"

_CONFIG_FIELDS = (
    "name",
    "input_height",
    "input_width",
    "channel_multiplier",
    "spatial_drop_rate",
    "dense_drop_rate",
    "conv_kernel",
)


@dataclass
class Checkpoint:
    model: Model
    config: ModelConfig
    class_names: tuple[str, ...]
    metadata: dict[str, str] = field(default_factory=dict)
    optimizer_tensors: dict[str, np.ndarray] = field(default_factory=dict)


def _config_line(config: ModelConfig) -> str:
    parts = []
    for name in _CONFIG_FIELDS:
        value = getattr(config, name)
        parts.append(f"{name}={value!r}" if isinstance(value, str) else f"{name}={value}")
    return "config " + " ".join(parts)


def _parse_config_line(line: str) -> ModelConfig:
    fields: dict[str, object] = {}
    for token in line.split()[1:]:
        key, _, raw = token.partition("=")
        if key in ("input_height", "input_width", "conv_kernel"):
            fields[key] = int(raw)
        elif key in ("channel_multiplier", "spatial_drop_rate", "dense_drop_rate"):
            fields[key] = float(raw)
        elif key == "name":
            fields[key] = raw.strip("'\"")
        else:
            raise SchemaMismatch(f"unknown config field {key!r} in checkpoint")
    missing = set(_CONFIG_FIELDS) - set(fields)
    if missing:
        raise SchemaMismatch(f"checkpoint config missing fields {sorted(missing)}")
    return ModelConfig(**fields)  # type: ignore[arg-type]


def save_checkpoint(
    model: Model,
    path: str | Path,
    config: ModelConfig,
    class_names: tuple[str, ...],
    metadata: dict[str, str] | None = None,
    optimizer_tensors: list[tuple[str, np.ndarray]] | None = None,
) -> None:
    """Write a structured-text header plus a raw little-endian f32 blob.

    The write goes to a temp file in the same directory and is renamed into
    place, so a crash never leaves a half-written checkpoint at `path`.
    """
    path = Path(path)
    for name in class_names:
        if "," in name or any(ch.isspace() for ch in name):
            raise SchemaMismatch(f"class name {name!r} may not contain commas/spaces")
    lines = [
        f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}",
        _config_line(config),
        "classes " + ",".join(class_names),
    ]
    for key, value in (metadata or {}).items():
        if "\n" in str(value):
            raise SchemaMismatch(f"metadata value for {key!r} may not span lines")
        lines.append(f"meta {key}={value}")

    blobs: list[bytes] = []
    offset = 0
    entries: list[tuple[str, str, np.ndarray]] = [
        ("tensor", p.name, p.value) for p in model.tensors()
    ]
    for name, value in optimizer_tensors or []:
        entries.append(("opt", name, value))
    for kind, name, value in entries:
        data = np.ascontiguousarray(value, dtype="<f4")
        shape = ",".join(str(d) for d in data.shape) or "0"
        lines.append(f"{kind} {name} {shape} {offset}")
        blobs.append(data.tobytes())
        offset += len(blobs[-1])
    lines.append("end")

    payload = ("\n".join(lines) + "\n").encode("ascii") + b"".join(blobs)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def load_checkpoint(path: str | Path, expected_config: ModelConfig | None = None) -> Checkpoint:
    """Rebuild the model a checkpoint describes and fill in its tensors.

    expected_config, when given, must equal the stored config exactly; this
    guards pipelines that assume a particular variant/scale.
    """
    raw = Path(path).read_bytes()
    marker = b"\nend\n"
    cut = raw.find(marker)
    if cut < 0:
        raise SchemaMismatch(f"{path}: no header terminator; file truncated or not a checkpoint")
    header = raw[: cut + 1].decode("ascii")
    blob = raw[cut + len(marker) :]

    lines = header.splitlines()
    magic = lines[0].split()
    if len(magic) != 2 or magic[0] != CHECKPOINT_MAGIC:
        raise SchemaMismatch(f"{path}: not a checkpoint file")
    if magic[1] != CHECKPOINT_VERSION:
        raise VersionMismatch(
            f"{path}: checkpoint version {magic[1]!r}, expected {CHECKPOINT_VERSION!r}"
        )

    config: ModelConfig | None = None
    class_names: tuple[str, ...] = ()
    metadata: dict[str, str] = {}
    table: list[tuple[str, str, tuple[int, ...], int]] = []
    for line in lines[1:]:
        if line.startswith("config "):
            config = _parse_config_line(line)
        elif line.startswith("classes "):
            class_names = tuple(line[len("classes ") :].split(","))
        elif line.startswith("meta "):
            key, _, value = line[len("meta ") :].partition("=")
            metadata[key] = value
        elif line.startswith(("tensor ", "opt ")):
            kind, name, shape_s, offset_s = line.split()
            shape = tuple(int(d) for d in shape_s.split(",")) if shape_s != "0" else ()
            table.append((kind, name, shape, int(offset_s)))
        else:
            raise SchemaMismatch(f"{path}: unrecognized header line {line!r}")
    if config is None:
        raise SchemaMismatch(f"{path}: checkpoint has no config line")
    if expected_config is not None and expected_config != config:
        raise ShapeMismatch(
            f"{path}: checkpoint config {config} does not match expected {expected_config}"
        )

    expected_bytes = sum(4 * int(np.prod(shape)) for _, _, shape, _ in table)
    if len(blob) != expected_bytes:
        raise ShapeMismatch(
            f"{path}: blob holds {len(blob)} bytes, header promises {expected_bytes}"
        )

    model = instantiate(config, seed=None)
    by_name = {p.name: p for p in model.tensors()}
    seen = set()
    optimizer_tensors: dict[str, np.ndarray] = {}
    for kind, name, shape, offset in table:
        count = int(np.prod(shape))
        values = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        values = values.reshape(shape).copy()
        if kind == "opt":
            optimizer_tensors[name] = values
            continue
        param = by_name.get(name)
        if param is None:
            raise ShapeMismatch(f"{path}: tensor {name!r} not present in {config.name}")
        if param.value.shape != shape:
            raise ShapeMismatch(
                f"{path}: tensor {name!r} shape {shape} != model shape {param.value.shape}"
            )
        param.value = values.astype(np.float32)
        seen.add(name)
    missing = set(by_name) - seen
    if missing:
        raise ShapeMismatch(f"{path}: checkpoint missing tensors {sorted(missing)}")
    return Checkpoint(model, config, class_names, metadata, optimizer_tensors)
