"""Dataset construction: balanced class weights, stratified splits,
synthetic two-class imagery, and manifest persistence.

All randomness flows through the package's own generator (rng.Rng), so a
fixed seed reproduces splits and synthetic images byte-for-byte on any
platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyClass, InvalidSize, SchemaMismatch, TooFewSamples
from .imgio import write_pgm
from .rng import Rng

ALMOND = "almond"
SHELL = "shell"
DEFAULT_CLASSES = (ALMOND, SHELL)

# Stream tags for derived generators; keep stable or saved seeds change meaning.
_STREAM_SPLIT = 0x5350
_STREAM_SYNTH = 0x53594E


@dataclass
class Sample:
    label_index: int
    label_name: str
    path: str | None = None
    image: np.ndarray | None = None


@dataclass
class DatasetManifest:
    samples: list[Sample] = field(default_factory=list)
    class_names: tuple[str, ...] = DEFAULT_CLASSES
    split_tag: str = "all"

    def class_counts(self) -> list[int]:
        counts = [0] * len(self.class_names)
        for sample in self.samples:
            counts[sample.label_index] += 1
        return counts

    def validate(self) -> None:
        if len(set(self.class_names)) != len(self.class_names):
            raise SchemaMismatch(f"duplicate class names: {self.class_names}")
        for sample in self.samples:
            if not 0 <= sample.label_index < len(self.class_names):
                raise SchemaMismatch(
                    f"label index {sample.label_index} outside "
                    f"[0, {len(self.class_names)})"
                )
            if self.class_names[sample.label_index] != sample.label_name:
                raise SchemaMismatch(
                    f"label {sample.label_name!r} does not match index "
                    f"{sample.label_index} in {self.class_names}"
                )

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class ClassWeights:
    weights: tuple[float, ...]


def compute_class_weights(class_counts: list[int]) -> ClassWeights:
    """Frequency-inverse "balanced" weights: w_c = n_total / (K * count_c).

    Equal counts give all-ones; rarer classes weigh proportionally more.
    """
    if any(count <= 0 for count in class_counts):
        raise EmptyClass(f"every class needs at least one sample, got {class_counts}")
    n_total = sum(class_counts)
    n_classes = len(class_counts)
    return ClassWeights(tuple(n_total / (n_classes * count) for count in class_counts))


def _round_half_down(x: float) -> int:
    return math.ceil(x - 0.5)


def split_dataset(
    manifest: DatasetManifest,
    val_fraction: float,
    test_fraction: float,
    seed: int,
) -> tuple[DatasetManifest, DatasetManifest, DatasetManifest]:
    """Stratified train/val/test split.

    Within each class the samples are shuffled by a per-class generator
    derived from `seed`, then partitioned test-first; the validation count
    is a fraction of what remains after test removal (so val_fraction 0.2
    means "20% of the training data"). Per-split class counts use
    round-half-down and are therefore identical for every seed.
    """
    if not (0 <= val_fraction < 1 and 0 <= test_fraction < 1):
        raise TooFewSamples(
            f"fractions must lie in [0, 1), got val={val_fraction} test={test_fraction}"
        )
    if val_fraction + test_fraction >= 1:
        raise TooFewSamples("val_fraction + test_fraction must stay below 1")
    manifest.validate()

    base = Rng(seed).derive(_STREAM_SPLIT)
    train: list[Sample] = []
    val: list[Sample] = []
    test: list[Sample] = []
    for class_index in range(len(manifest.class_names)):
        members = [s for s in manifest.samples if s.label_index == class_index]
        if not members:
            continue
        base.derive(class_index).shuffle(members)
        n_test = _round_half_down(test_fraction * len(members))
        n_val = _round_half_down(val_fraction * (len(members) - n_test))
        n_train = len(members) - n_test - n_val
        if n_train <= 0:
            raise TooFewSamples(
                f"class {manifest.class_names[class_index]!r} has {len(members)} "
                f"samples, not enough for the requested partitions"
            )
        test.extend(members[:n_test])
        val.extend(members[n_test : n_test + n_val])
        train.extend(members[n_test + n_val :])

    make = lambda samples, tag: DatasetManifest(samples, manifest.class_names, tag)
    return make(train, "train"), make(val, "val"), make(test, "test")


def _ellipse_mask(
    height: int, width: int, cy: float, cx: float, ay: float, ax: float
) -> np.ndarray:
    ys = (np.arange(height)[:, None] - cy) / ay
    xs = (np.arange(width)[None, :] - cx) / ax
    return ys * ys + xs * xs <= 1.0


def _synthetic_image(class_index: int, height: int, width: int, rng: Rng) -> np.ndarray:
    """One sample: class 0 is a filled ellipse, class 1 an elliptical ring."""
    background = rng.uniform(20.0, 60.0)
    foreground = rng.uniform(150.0, 230.0)
    cy = rng.uniform(0.40 * height, 0.60 * height)
    cx = rng.uniform(0.40 * width, 0.60 * width)
    ay = rng.uniform(0.22 * height, 0.34 * height)
    ax = rng.uniform(0.22 * width, 0.34 * width)
    canvas = np.full((height, width), background, dtype=np.float64)
    outer = _ellipse_mask(height, width, cy, cx, ay, ax)
    if class_index == 0:
        canvas[outer] = foreground
    else:
        inner = _ellipse_mask(height, width, cy, cx, 0.55 * ay, 0.55 * ax)
        canvas[outer & ~inner] = foreground
    noise_sigma = rng.uniform(4.0, 10.0)
    noise = np.array(rng.normal_array(height * width)).reshape(height, width)
    canvas += noise_sigma * noise
    return np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8)


def generate_synthetic(
    n_per_class: int,
    image_size: tuple[int, int],
    seed: int,
    class_names: tuple[str, ...] = DEFAULT_CLASSES,
) -> DatasetManifest:
    """Generate n_per_class in-memory samples for each of the two classes.

    Sample i of class c draws from a generator derived from (seed, c, i),
    so the images are independent of generation order and reproducible.
    """
    height, width = image_size
    if n_per_class < 1:
        raise InvalidSize(f"n_per_class must be >= 1, got {n_per_class}")
    if height < 16 or width < 16:
        raise InvalidSize(f"image size must be at least 16x16, got {height}x{width}")
    base = Rng(seed).derive(_STREAM_SYNTH)
    samples = []
    for class_index, name in enumerate(class_names):
        for i in range(n_per_class):
            rng = base.derive(class_index, i)
            samples.append(
                Sample(
                    label_index=class_index,
                    label_name=name,
                    image=_synthetic_image(class_index, height, width, rng),
                )
            )
    return DatasetManifest(samples, class_names, "all")


def materialize(manifest: DatasetManifest, out_dir: str | Path) -> DatasetManifest:
    """Write in-memory sample images as PGM files under out_dir.

    Returns a manifest whose samples carry paths relative to out_dir.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    counters = [0] * len(manifest.class_names)
    on_disk = []
    for sample in manifest.samples:
        if sample.image is None:
            on_disk.append(sample)
            continue
        name = f"{sample.label_name}_{counters[sample.label_index]:04d}.pgm"
        counters[sample.label_index] += 1
        write_pgm(out_dir / name, sample.image)
        on_disk.append(Sample(sample.label_index, sample.label_name, path=name))
    return DatasetManifest(on_disk, manifest.class_names, manifest.split_tag)


MANIFEST_VERSION = "v1"


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write header line plus one record per sample: split, label, path."""
    manifest.validate()
    lines = [f"{MANIFEST_VERSION} classes={','.join(manifest.class_names)}"]
    for sample in manifest.samples:
        if sample.path is None:
            raise SchemaMismatch(
                "manifest persistence needs path-backed samples; "
                "materialize() in-memory images first"
            )
        lines.append(f"{manifest.split_tag}\t{sample.label_name}\t{sample.path}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_manifest(path: str | Path) -> DatasetManifest:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise SchemaMismatch(f"{path}: empty manifest file")
    header = lines[0].split()
    if len(header) != 2 or not header[1].startswith("classes="):
        raise SchemaMismatch(f"{path}: bad manifest header {lines[0]!r}")
    if header[0] != MANIFEST_VERSION:
        raise SchemaMismatch(f"{path}: unknown manifest version {header[0]!r}")
    class_names = tuple(header[1][len("classes=") :].split(","))
    index_of = {name: i for i, name in enumerate(class_names)}
    samples = []
    split_tags = set()
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise SchemaMismatch(f"{path}:{line_no}: expected 'split<TAB>label<TAB>path'")
        split, label, sample_path = parts
        if label not in index_of:
            raise SchemaMismatch(f"{path}:{line_no}: unknown label {label!r}")
        split_tags.add(split)
        samples.append(Sample(index_of[label], label, path=sample_path))
    tag = split_tags.pop() if len(split_tags) == 1 else "all"
    manifest = DatasetManifest(samples, class_names, tag)
    manifest.validate()
    return manifest
