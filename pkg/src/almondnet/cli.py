"""Command-line front end: preprocess, synth, split, train, evaluate,
predict, trace.

Every subcommand accepts --config FILE, a line-based `key = value` text
file whose keys are the option names (underscores for dashes). Precedence
is built-in default < config file < explicit flag. Exit codes: 0 success,
1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from .annotations import extract_crops, scan_dataset
from .architecture import (
    ModelConfig,
    build_stack,
    format_trace,
    load_checkpoint,
    mini_config,
    shape_trace,
)
from .dataset import (
    DatasetManifest,
    Sample,
    generate_synthetic,
    load_manifest,
    materialize,
    save_manifest,
    split_dataset,
)
from .errors import AlmondNetError
from .imageproc import PreprocessParams, preprocess_chain, to_grayscale
from .imgio import read_image, write_pgm
from .metrics import format_report
from .pipeline import TrainConfig, evaluate, predict, train

_FULL_DEFAULT = ModelConfig()
_MINI_DEFAULT = mini_config()


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parse_bool(raw: str) -> bool:
    lowered = str(raw).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise _UsageError(f"expected a boolean, got {raw!r}")


class _Command:
    """One subcommand: its parser plus the option registry used to merge
    config-file values with flag overrides."""

    def __init__(self, parser: argparse.ArgumentParser):
        self.parser = parser
        self.registry: dict[str, tuple[object, object]] = {}
        parser.add_argument(
            "--config", dest="config", default=argparse.SUPPRESS,
            help="key = value file supplying defaults for any option",
        )

    def add(self, name, default, *, kind=str, flag=False, choices=None, help=""):
        arg = "--" + name.replace("_", "-")
        if flag:
            self.parser.add_argument(
                arg, dest=name, action="store_true", default=argparse.SUPPRESS, help=help
            )
            self.registry[name] = (default, _parse_bool)
        else:
            self.parser.add_argument(
                arg, dest=name, type=kind, default=argparse.SUPPRESS,
                choices=choices, help=help,
            )
            self.registry[name] = (default, kind)

    def resolve(self, ns: argparse.Namespace) -> tuple[dict, set]:
        settings = {name: default for name, (default, _) in self.registry.items()}
        explicit: set[str] = set()
        given = {k: v for k, v in vars(ns).items() if k != "command"}
        config_path = given.pop("config", None)
        if config_path is not None:
            for key, raw in _read_config_file(config_path).items():
                if key not in self.registry:
                    raise _UsageError(f"{config_path}: unknown option {key!r}")
                settings[key] = self.registry[key][1](raw)
                explicit.add(key)
        settings.update(given)
        explicit.update(given)
        return settings, explicit


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise _UsageError(f"cannot read config file: {e}") from None
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise _UsageError(f"{path}:{line_no}: expected 'key = value'")
        values[key.strip()] = value.strip()
    return values


def _require(settings: dict, *names: str) -> None:
    for name in names:
        if settings[name] is None:
            raise _UsageError(f"--{name.replace('_', '-')} is required")


def _add_preprocess_opts(cmd: _Command) -> None:
    cmd.add("gaussian_kernel", 5, kind=int, help="Gaussian kernel size (odd)")
    cmd.add("gaussian_sigma", 0.0, kind=float, help="Gaussian sigma; <=0 derives from kernel")
    cmd.add("nlm_h", 10.0, kind=float, help="NLM filtering strength")
    cmd.add("nlm_template_radius", 3, kind=int, help="NLM patch radius")
    cmd.add("nlm_search_radius", 10, kind=int, help="NLM search window radius")
    cmd.add("thresh_block", 11, kind=int, help="adaptive threshold block size (odd)")
    cmd.add("thresh_c", 2.0, kind=float, help="adaptive threshold offset")
    cmd.add("canny_low", 50.0, kind=float, help="Canny low threshold")
    cmd.add("canny_high", 150.0, kind=float, help="Canny high threshold")


def _preprocess_params(settings: dict) -> PreprocessParams:
    return PreprocessParams(
        gaussian_kernel=settings["gaussian_kernel"],
        gaussian_sigma=settings["gaussian_sigma"],
        nlm_h=settings["nlm_h"],
        nlm_template_radius=settings["nlm_template_radius"],
        nlm_search_radius=settings["nlm_search_radius"],
        thresh_block=settings["thresh_block"],
        thresh_c=settings["thresh_c"],
        canny_low=settings["canny_low"],
        canny_high=settings["canny_high"],
    )


def _add_model_opts(cmd: _Command) -> None:
    cmd.add("variant", "mini-v1", choices=("mini-v1", "almondnet-20"),
            help="architecture variant")
    cmd.add("height", None, kind=int, help="input height (default per variant)")
    cmd.add("width", None, kind=int, help="input width (default per variant)")
    cmd.add("multiplier", None, kind=float, help="channel multiplier (default per variant)")
    cmd.add("spatial_drop", 0.2, kind=float, help="spatial dropout rate")
    cmd.add("dense_drop", 0.5, kind=float, help="dense dropout rate")
    cmd.add("conv_kernel", 3, kind=int, help="conv kernel size")


def _model_config(settings: dict, explicit: set) -> ModelConfig:
    base = _MINI_DEFAULT if settings["variant"] == "mini-v1" else _FULL_DEFAULT
    overrides = {}
    if settings["height"] is not None:
        overrides["input_height"] = settings["height"]
    if settings["width"] is not None:
        overrides["input_width"] = settings["width"]
    if settings["multiplier"] is not None:
        overrides["channel_multiplier"] = settings["multiplier"]
    if "spatial_drop" in explicit:
        overrides["spatial_drop_rate"] = settings["spatial_drop"]
    if "dense_drop" in explicit:
        overrides["dense_drop_rate"] = settings["dense_drop"]
    if "conv_kernel" in explicit:
        overrides["conv_kernel"] = settings["conv_kernel"]
    return replace(base, **overrides)


def build_parser() -> tuple[_Parser, dict[str, _Command]]:
    parser = _Parser(
        prog="almondnet",
        description="Two-class nut/shell image classification pipeline.",
    )
    subparsers = parser.add_subparsers(dest="command", parser_class=_Parser)
    commands: dict[str, _Command] = {}

    def command(name: str, help_text: str) -> _Command:
        sub = subparsers.add_parser(name, help=help_text)
        cmd = _Command(sub)
        commands[name] = cmd
        return cmd

    cmd = command("preprocess", "run the five-stage chain on one image")
    cmd.add("image", None, help="input image (PNG or PGM)")
    cmd.add("out_dir", ".", help="directory for stage outputs")
    cmd.add("prefix", None, help="output name prefix (default: image stem)")
    _add_preprocess_opts(cmd)

    cmd = command("synth", "generate a synthetic two-class dataset")
    cmd.add("n_per_class", 200, kind=int, help="samples per class")
    cmd.add("height", 32, kind=int, help="image height")
    cmd.add("width", 32, kind=int, help="image width")
    cmd.add("seed", 42, kind=int, help="generator seed")
    cmd.add("out_dir", None, help="directory for images + manifest")

    cmd = command("split", "split a manifest into train/val/test")
    cmd.add("manifest", None, help="input manifest file")
    cmd.add("voc_images", None, help="image directory (VOC ingest route)")
    cmd.add("voc_annotations", None, help="annotation XML directory (VOC ingest route)")
    cmd.add("whole_image", False, flag=True,
            help="VOC route: use whole images labeled by their first object")
    cmd.add("val_fraction", 0.2, kind=float, help="validation fraction of post-test data")
    cmd.add("test_fraction", 1.0 / 6.0, kind=float, help="test fraction")
    cmd.add("seed", 42, kind=int, help="shuffle seed")
    cmd.add("out_dir", None, help="directory for the three output manifests")

    cmd = command("train", "train a model from manifests")
    cmd.add("train_manifest", None, help="training manifest")
    cmd.add("val_manifest", None, help="validation manifest")
    cmd.add("manifest", None, help="single manifest; val split off by --val-fraction")
    cmd.add("epochs", 30, kind=int, help="training epochs")
    cmd.add("batch_size", 32, kind=int, help="batch size")
    cmd.add("optimizer", "adam", choices=("adam", "sgd"), help="optimizer")
    cmd.add("learning_rate", 1e-3, kind=float, help="learning rate")
    cmd.add("seed", 42, kind=int, help="master seed")
    cmd.add("val_fraction", 0.2, kind=float, help="val fraction when using --manifest")
    cmd.add("feed_stage", "denoise",
            choices=("gray", "blur", "denoise", "thresh", "canny"),
            help="preprocessing stage fed to the network")
    cmd.add("checkpoint_dir", "checkpoints", help="checkpoint directory")
    cmd.add("history", None, help="history CSV path (default <checkpoint-dir>/history.csv)")
    cmd.add("record_time", False, flag=True, help="record real epoch seconds in history")
    cmd.add("augment", "none", choices=("none", "hflip"), help="training augmentation")
    cmd.add("checkpoint_every_epoch", False, flag=True, help="also save per-epoch checkpoints")
    _add_model_opts(cmd)
    _add_preprocess_opts(cmd)

    cmd = command("evaluate", "evaluate a checkpoint on a test manifest")
    cmd.add("checkpoint", None, help="checkpoint file")
    cmd.add("manifest", None, help="test manifest")
    cmd.add("feed_stage", None, help="override the checkpoint's feed stage")
    cmd.add("out", None, help="write the report text here as well")

    cmd = command("predict", "classify a single image")
    cmd.add("checkpoint", None, help="checkpoint file")
    cmd.add("image", None, help="image file (PNG or PGM)")
    cmd.add("feed_stage", None, help="override the checkpoint's feed stage")
    cmd.add("out", None, help="write the prediction text here as well")

    cmd = command("trace", "print the layer-by-layer shape table")
    _add_model_opts(cmd)

    return parser, commands


def _cmd_preprocess(settings: dict, explicit: set) -> int:
    _require(settings, "image")
    image = read_image(settings["image"])
    params = _preprocess_params(settings)
    stages = preprocess_chain(image, params)
    out_dir = Path(settings["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = settings["prefix"] or Path(settings["image"]).stem
    for name, stage_image in stages:
        path = out_dir / f"{prefix}_{name}.pgm"
        write_pgm(path, stage_image)
        print(path)
    return 0


def _cmd_synth(settings: dict, explicit: set) -> int:
    _require(settings, "out_dir")
    manifest = generate_synthetic(
        settings["n_per_class"],
        (settings["height"], settings["width"]),
        settings["seed"],
    )
    out_dir = Path(settings["out_dir"])
    on_disk = materialize(manifest, out_dir)
    manifest_path = out_dir / "manifest.tsv"
    save_manifest(on_disk, manifest_path)
    print(f"wrote {len(on_disk.samples)} images and {manifest_path}")
    return 0


def _manifest_from_voc(settings: dict) -> DatasetManifest:
    result = scan_dataset(settings["voc_images"], settings["voc_annotations"])
    for issue in result.issues:
        print(f"warning: {issue.path}: {issue.message}", file=sys.stderr)
    samples: list[Sample] = []
    labels = sorted({
        obj.label for _, annotation in result.pairs for obj in annotation.objects
    })
    index_of = {name: i for i, name in enumerate(labels)}
    for image_path, annotation in result.pairs:
        image = read_image(image_path)
        gray = image if image.ndim == 2 else to_grayscale(image)
        if settings["whole_image"]:
            label = annotation.objects[0].label
            samples.append(Sample(index_of[label], label, image=gray))
        else:
            for label, crop in extract_crops(gray, annotation):
                samples.append(Sample(index_of[label], label, image=crop))
    return DatasetManifest(samples, tuple(labels), "all")


def _rebase_paths(manifest: DatasetManifest, src_dir: Path, out_dir: Path) -> DatasetManifest:
    samples = []
    for s in manifest.samples:
        if s.path is None or os.path.isabs(s.path):
            samples.append(s)
            continue
        rebased = os.path.relpath(src_dir / s.path, out_dir)
        samples.append(Sample(s.label_index, s.label_name, path=rebased))
    return DatasetManifest(samples, manifest.class_names, manifest.split_tag)


def _cmd_split(settings: dict, explicit: set) -> int:
    _require(settings, "out_dir")
    out_dir = Path(settings["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    if settings["manifest"] is not None:
        manifest = load_manifest(settings["manifest"])
        src_dir = Path(settings["manifest"]).resolve().parent
        manifest = _rebase_paths(manifest, src_dir, out_dir.resolve())
    elif settings["voc_images"] is not None and settings["voc_annotations"] is not None:
        manifest = materialize(_manifest_from_voc(settings), out_dir)
    else:
        raise _UsageError("provide --manifest, or --voc-images with --voc-annotations")
    parts = split_dataset(
        manifest, settings["val_fraction"], settings["test_fraction"], settings["seed"]
    )
    for part in parts:
        path = out_dir / f"{part.split_tag}.tsv"
        save_manifest(part, path)
        print(f"{path}: {len(part.samples)} samples {part.class_counts()}")
    return 0


def _cmd_train(settings: dict, explicit: set) -> int:
    if settings["manifest"] is not None:
        whole = load_manifest(settings["manifest"])
        base_dir = Path(settings["manifest"]).resolve().parent
        train_part, val_part, _ = split_dataset(
            whole, settings["val_fraction"], 0.0, settings["seed"]
        )
    else:
        _require(settings, "train_manifest", "val_manifest")
        train_part = load_manifest(settings["train_manifest"])
        val_part = load_manifest(settings["val_manifest"])
        train_dir = Path(settings["train_manifest"]).resolve().parent
        val_dir = Path(settings["val_manifest"]).resolve().parent
        if train_dir != val_dir:
            raise _UsageError("train and val manifests must live in the same directory")
        base_dir = train_dir
        train_part = replace_tag(train_part, "train")
        val_part = replace_tag(val_part, "val")

    config = TrainConfig(
        model=_model_config(settings, explicit),
        epochs=settings["epochs"],
        batch_size=settings["batch_size"],
        optimizer=settings["optimizer"],
        learning_rate=settings["learning_rate"],
        seed=settings["seed"],
        val_fraction=settings["val_fraction"],
        feed_stage=settings["feed_stage"],
        preprocess=_preprocess_params(settings),
        checkpoint_dir=settings["checkpoint_dir"],
        history_path=settings["history"],
        record_time=settings["record_time"],
        augment=settings["augment"],
        checkpoint_every_epoch=settings["checkpoint_every_epoch"],
    )
    history, best_path = train(config, train_part, val_part, base_dir)
    last = history[-1]
    print(
        f"epoch {last.epoch}: train_loss={last.train_loss:.6f} "
        f"train_acc={last.train_acc:.6f} val_loss={last.val_loss:.6f} "
        f"val_acc={last.val_acc:.6f}"
    )
    print(f"best checkpoint: {best_path}")
    return 0


def replace_tag(manifest: DatasetManifest, tag: str) -> DatasetManifest:
    return DatasetManifest(manifest.samples, manifest.class_names, tag)


def _cmd_evaluate(settings: dict, explicit: set) -> int:
    _require(settings, "checkpoint", "manifest")
    manifest = load_manifest(settings["manifest"])
    base_dir = Path(settings["manifest"]).resolve().parent
    matrix, report = evaluate(
        settings["checkpoint"], manifest, base_dir, feed_stage=settings["feed_stage"]
    )
    text = format_report(matrix, report)
    print(text)
    if settings["out"]:
        Path(settings["out"]).write_text(text + "\n")
    return 0


def _cmd_predict(settings: dict, explicit: set) -> int:
    _require(settings, "checkpoint", "image")
    label, probs = predict(
        settings["checkpoint"], settings["image"], feed_stage=settings["feed_stage"]
    )
    names = load_checkpoint(settings["checkpoint"]).class_names
    lines = [f"label: {label}"]
    for name, p in zip(names, probs):
        lines.append(f"p({name}) = {p:.6f}")
    text = "\n".join(lines)
    print(text)
    if settings["out"]:
        Path(settings["out"]).write_text(text + "\n")
    return 0


def _cmd_trace(settings: dict, explicit: set) -> int:
    config = _model_config(settings, explicit)
    trace = shape_trace(
        build_stack(config), (config.input_height, config.input_width, 1)
    )
    print(f"{config.name} at {config.input_height}x{config.input_width}x1:")
    print(format_trace(trace))
    return 0


_HANDLERS = {
    "preprocess": _cmd_preprocess,
    "synth": _cmd_synth,
    "split": _cmd_split,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "trace": _cmd_trace,
}


def run_cli(argv: list[str] | None = None) -> int:
    parser, commands = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise _UsageError("a subcommand is required")
        settings, explicit = commands[ns.command].resolve(ns)
        return _HANDLERS[ns.command](settings, explicit)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as e:  # argparse --help
        code = e.code if isinstance(e.code, int) else 0
        return code
    except (AlmondNetError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
