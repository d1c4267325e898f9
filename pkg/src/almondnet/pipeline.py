"""Training, evaluation, and single-image prediction over manifests.

Every source of randomness (weight init, shuffling, dropout, augmentation)
derives from TrainConfig.seed through named streams, so a run is bit-for-bit
reproducible: same config + same data -> identical history file, identical
checkpoints.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .architecture import (
    ModelConfig,
    instantiate,
    load_checkpoint,
    mini_config,
    save_checkpoint,
)
from .dataset import DatasetManifest, Sample, compute_class_weights
from .errors import (
    DivergedLoss,
    EmptyTestSet,
    LabelMismatch,
    SchemaMismatch,
    TooFewSamples,
)
from .imageproc import STAGE_NAMES, PreprocessParams, run_stages
from .imgio import read_image, resize_nearest
from .metrics import ConfusionMatrix, EvalReport, metrics_from_confusion
from .nn import Adam, SGD, Model, one_hot, softmax_cross_entropy
from .rng import Rng

_SHUFFLE_STREAM = 0x53485546
_DROPOUT_STREAM = 0x44524F50
_AUGMENT_STREAM = 0x41554746

AUGMENT_MODES = ("none", "hflip")


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=mini_config)
    epochs: int = 30
    batch_size: int = 32
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 42
    val_fraction: float = 0.2
    feed_stage: str = "denoise"
    preprocess: PreprocessParams = field(default_factory=PreprocessParams)
    checkpoint_dir: str = "checkpoints"
    history_path: str | None = None
    record_time: bool = False
    augment: str = "none"
    checkpoint_every_epoch: bool = False

    def validate(self) -> None:
        if self.epochs < 1:
            raise SchemaMismatch(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise SchemaMismatch(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in ("adam", "sgd"):
            raise SchemaMismatch(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        if self.feed_stage not in STAGE_NAMES:
            raise SchemaMismatch(
                f"feed_stage must be one of {STAGE_NAMES}, got {self.feed_stage!r}"
            )
        if self.augment not in AUGMENT_MODES:
            raise SchemaMismatch(
                f"augment must be one of {AUGMENT_MODES}, got {self.augment!r}"
            )
        if not 0 <= self.val_fraction < 1:
            raise SchemaMismatch(f"val_fraction must lie in [0,1), got {self.val_fraction}")
        self.model.validate()
        self.preprocess.validate()


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    seconds: float = 0.0


def sample_image(sample: Sample, base_dir: str | Path = ".") -> np.ndarray:
    if sample.image is not None:
        return sample.image
    if sample.path is None:
        raise SchemaMismatch("sample carries neither an image nor a path")
    return read_image(Path(base_dir) / sample.path)


def prepare_input(
    image: np.ndarray,
    params: PreprocessParams,
    feed_stage: str,
    input_height: int,
    input_width: int,
) -> np.ndarray:
    """Image -> the network's input tensor slice (H, W, 1) in [0, 1]."""
    stages = run_stages(image, params, through=feed_stage)
    feed = stages[-1][1]
    resized = resize_nearest(feed, input_height, input_width)
    return resized.astype(np.float32)[..., None] / np.float32(255.0)


def manifest_arrays(
    manifest: DatasetManifest,
    config: TrainConfig,
    base_dir: str | Path = ".",
) -> tuple[np.ndarray, np.ndarray]:
    """Preprocess every sample once; returns (X: N,H,W,1 f32, y: N int)."""
    h, w = config.model.input_height, config.model.input_width
    xs = np.empty((len(manifest.samples), h, w, 1), dtype=np.float32)
    ys = np.empty(len(manifest.samples), dtype=np.int64)
    for i, sample in enumerate(manifest.samples):
        image = sample_image(sample, base_dir)
        xs[i] = prepare_input(image, config.preprocess, config.feed_stage, h, w)
        ys[i] = sample.label_index
    return xs, ys


def _dataset_metrics(
    model: Model,
    xs: np.ndarray,
    ys: np.ndarray,
    class_weights: np.ndarray,
    batch_size: int,
) -> tuple[float, float]:
    """Weighted loss and accuracy from a full infer-mode pass."""
    k = class_weights.shape[0]
    total_loss = 0.0
    correct = 0
    for start in range(0, xs.shape[0], batch_size):
        xb = xs[start : start + batch_size]
        yb = ys[start : start + batch_size]
        logits = model.forward(xb, training=False, through_softmax=False)
        loss, _ = softmax_cross_entropy(logits, one_hot(yb, k), class_weights)
        total_loss += loss * xb.shape[0]
        correct += int((logits.argmax(axis=1) == yb).sum())
    return total_loss / xs.shape[0], correct / xs.shape[0]


def _preprocess_metadata(config: TrainConfig) -> dict[str, str]:
    p = config.preprocess
    return {
        "feed_stage": config.feed_stage,
        "gaussian_kernel": str(p.gaussian_kernel),
        "gaussian_sigma": str(p.gaussian_sigma),
        "nlm_h": str(p.nlm_h),
        "nlm_template_radius": str(p.nlm_template_radius),
        "nlm_search_radius": str(p.nlm_search_radius),
        "thresh_block": str(p.thresh_block),
        "thresh_c": str(p.thresh_c),
        "canny_low": str(p.canny_low),
        "canny_high": str(p.canny_high),
    }


def preprocess_from_metadata(metadata: dict[str, str]) -> tuple[PreprocessParams, str]:
    """Invert _preprocess_metadata; missing keys fall back to defaults."""
    p = PreprocessParams()
    p = replace(
        p,
        gaussian_kernel=int(metadata.get("gaussian_kernel", p.gaussian_kernel)),
        gaussian_sigma=float(metadata.get("gaussian_sigma", p.gaussian_sigma)),
        nlm_h=float(metadata.get("nlm_h", p.nlm_h)),
        nlm_template_radius=int(metadata.get("nlm_template_radius", p.nlm_template_radius)),
        nlm_search_radius=int(metadata.get("nlm_search_radius", p.nlm_search_radius)),
        thresh_block=int(metadata.get("thresh_block", p.thresh_block)),
        thresh_c=float(metadata.get("thresh_c", p.thresh_c)),
        canny_low=float(metadata.get("canny_low", p.canny_low)),
        canny_high=float(metadata.get("canny_high", p.canny_high)),
    )
    return p, metadata.get("feed_stage", "denoise")


def train(
    config: TrainConfig,
    train_manifest: DatasetManifest,
    val_manifest: DatasetManifest,
    base_dir: str | Path = ".",
) -> tuple[list[EpochRecord], str]:
    """Train per config; returns (history, path of the best-val checkpoint).

    Per epoch: seeded shuffle, class-weighted softmax-CE batches, then a
    dedicated infer-mode pass over train and val sets for the reported
    metrics (so history numbers are dropout-free and reproducible from
    checkpoints). The checkpoint with the best validation accuracy is kept,
    earlier epoch winning ties. A non-finite training loss aborts with
    DivergedLoss; history up to the abort is still written.
    """
    config.validate()
    if not train_manifest.samples:
        raise TooFewSamples("training manifest is empty")
    if not val_manifest.samples:
        raise TooFewSamples("validation manifest is empty")
    if train_manifest.class_names != val_manifest.class_names:
        raise LabelMismatch(
            f"train classes {train_manifest.class_names} != "
            f"val classes {val_manifest.class_names}"
        )

    class_names = train_manifest.class_names
    k = len(class_names)
    weights = np.array(
        compute_class_weights(train_manifest.class_counts()).weights, dtype=np.float64
    )
    x_train, y_train = manifest_arrays(train_manifest, config, base_dir)
    x_val, y_val = manifest_arrays(val_manifest, config, base_dir)

    model = instantiate(config.model, seed=config.seed)
    if config.optimizer == "adam":
        optimizer = Adam(
            model.params(),
            lr=config.learning_rate,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.adam_eps,
        )
    else:
        optimizer = SGD(model.params(), lr=config.learning_rate)

    ckpt_dir = Path(config.checkpoint_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    best_path = ckpt_dir / "best.ckpt"
    history_path = Path(config.history_path or ckpt_dir / "history.csv")

    root = Rng(config.seed)
    history: list[EpochRecord] = []
    best_acc = -1.0
    best_saved = False

    def flush_history(aborted_epoch: int | None = None) -> None:
        write_history(history, history_path, aborted_epoch=aborted_epoch)

    def save_best(epoch: int, val_acc: float) -> None:
        metadata = {
            "epoch": str(epoch),
            "seed": str(config.seed),
            "val_accuracy": f"{val_acc:.6f}",
            **_preprocess_metadata(config),
        }
        save_checkpoint(model, best_path, config.model, class_names, metadata)

    n = x_train.shape[0]
    for epoch in range(1, config.epochs + 1):
        started = time.monotonic()
        order = list(range(n))
        root.derive(_SHUFFLE_STREAM, epoch).shuffle(order)
        flip_rng = (
            root.derive(_AUGMENT_STREAM, epoch) if config.augment == "hflip" else None
        )
        for batch_index, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            xb = x_train[idx]
            yb = y_train[idx]
            if flip_rng is not None:
                flips = [flip_rng.random() < 0.5 for _ in range(xb.shape[0])]
                if any(flips):
                    xb = xb.copy()
                    xb[np.array(flips)] = xb[np.array(flips)][:, :, ::-1, :]
            drop_rng = root.derive(_DROPOUT_STREAM, epoch, batch_index)
            logits = model.forward(
                xb, training=True, rng=drop_rng, update_stats=True, through_softmax=False
            )
            loss, dlogits = softmax_cross_entropy(logits, one_hot(yb, k), weights)
            if not math.isfinite(loss):
                flush_history(aborted_epoch=epoch)
                raise DivergedLoss(
                    f"training loss became {loss} in epoch {epoch}",
                    epoch=epoch,
                    checkpoint_path=str(best_path) if best_saved else None,
                )
            model.backward(dlogits)
            optimizer.step()
            optimizer.zero_grad()

        train_loss, train_acc = _dataset_metrics(
            model, x_train, y_train, weights, config.batch_size
        )
        val_loss, val_acc = _dataset_metrics(
            model, x_val, y_val, weights, config.batch_size
        )
        seconds = time.monotonic() - started if config.record_time else 0.0
        history.append(EpochRecord(epoch, train_loss, train_acc, val_loss, val_acc, seconds))
        if val_acc > best_acc:
            best_acc = val_acc
            save_best(epoch, val_acc)
            best_saved = True
        if config.checkpoint_every_epoch:
            metadata = {
                "epoch": str(epoch),
                "seed": str(config.seed),
                "val_accuracy": f"{val_acc:.6f}",
                **_preprocess_metadata(config),
            }
            save_checkpoint(
                model, ckpt_dir / f"epoch_{epoch:04d}.ckpt", config.model,
                class_names, metadata,
            )

    flush_history()
    return history, str(best_path)


HISTORY_HEADER = "epoch,train_loss,train_acc,val_loss,val_acc,seconds"


def write_history(
    records: list[EpochRecord], path: str | Path, aborted_epoch: int | None = None
) -> None:
    """One CSV row per epoch. The seconds column is 0.000 unless timing was
    explicitly recorded, keeping repeated runs byte-identical."""
    lines = [HISTORY_HEADER]
    for r in records:
        lines.append(
            f"{r.epoch},{r.train_loss:.6f},{r.train_acc:.6f},"
            f"{r.val_loss:.6f},{r.val_acc:.6f},{r.seconds:.3f}"
        )
    if aborted_epoch is not None:
        lines.append(f"# diverged at epoch {aborted_epoch}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_history(path: str | Path) -> list[EpochRecord]:
    records = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "epoch":
                continue
            records.append(
                EpochRecord(
                    epoch=int(row[0]),
                    train_loss=float(row[1]),
                    train_acc=float(row[2]),
                    val_loss=float(row[3]),
                    val_acc=float(row[4]),
                    seconds=float(row[5]),
                )
            )
    return records


def evaluate(
    checkpoint_path: str | Path,
    test_manifest: DatasetManifest,
    base_dir: str | Path = ".",
    params: PreprocessParams | None = None,
    feed_stage: str | None = None,
    batch_size: int = 64,
) -> tuple[ConfusionMatrix, EvalReport]:
    """Infer-mode pass over the test manifest; argmax ties go to the lower
    class index (argmax's first-occurrence rule)."""
    if not test_manifest.samples:
        raise EmptyTestSet("test manifest is empty")
    ckpt = load_checkpoint(checkpoint_path)
    if tuple(test_manifest.class_names) != tuple(ckpt.class_names):
        raise LabelMismatch(
            f"manifest classes {test_manifest.class_names} != "
            f"checkpoint classes {ckpt.class_names}"
        )
    stored_params, stored_stage = preprocess_from_metadata(ckpt.metadata)
    params = params or stored_params
    feed_stage = feed_stage or stored_stage

    h, w = ckpt.config.input_height, ckpt.config.input_width
    matrix = ConfusionMatrix(tuple(ckpt.class_names))
    batch_x: list[np.ndarray] = []
    batch_y: list[int] = []

    def flush():
        if not batch_x:
            return
        logits = ckpt.model.forward(np.stack(batch_x), training=False, through_softmax=False)
        for true_idx, pred_idx in zip(batch_y, logits.argmax(axis=1)):
            matrix.add(true_idx, int(pred_idx))
        batch_x.clear()
        batch_y.clear()

    for sample in test_manifest.samples:
        image = sample_image(sample, base_dir)
        batch_x.append(prepare_input(image, params, feed_stage, h, w))
        batch_y.append(sample.label_index)
        if len(batch_x) == batch_size:
            flush()
    flush()
    return matrix, metrics_from_confusion(matrix)


def predict(
    checkpoint_path: str | Path,
    image_path: str | Path,
    params: PreprocessParams | None = None,
    feed_stage: str | None = None,
) -> tuple[str, np.ndarray]:
    """Classify one image file; returns (label, probabilities over classes)."""
    ckpt = load_checkpoint(checkpoint_path)
    stored_params, stored_stage = preprocess_from_metadata(ckpt.metadata)
    params = params or stored_params
    feed_stage = feed_stage or stored_stage
    image = read_image(image_path)
    x = prepare_input(
        image, params, feed_stage, ckpt.config.input_height, ckpt.config.input_width
    )
    probs = ckpt.model.forward(x[None], training=False, through_softmax=True)[0]
    label = ckpt.class_names[int(probs.argmax())]
    return label, probs
