"""Training loop, evaluation, history, and prediction tests.

Everything here runs on tiny synthetic manifests with the eighth-width mini
variant and feed_stage="gray", which keeps each training call well under a
second while exercising the full code path.
"""

import numpy as np
import pytest

from almondnet.architecture import instantiate, load_checkpoint, mini_config, save_checkpoint
from almondnet.dataset import DatasetManifest, compute_class_weights, generate_synthetic
from almondnet.errors import (
    DivergedLoss,
    EmptyTestSet,
    LabelMismatch,
    SchemaMismatch,
    TooFewSamples,
)
from almondnet.imageproc import PreprocessParams
from almondnet.imgio import write_pgm
from almondnet.pipeline import (
    EpochRecord,
    TrainConfig,
    _dataset_metrics,
    _preprocess_metadata,
    evaluate,
    load_history,
    manifest_arrays,
    predict,
    prepare_input,
    preprocess_from_metadata,
    sample_image,
    train,
    write_history,
)
from almondnet.rng import Rng


def synth_manifests(per_class_train=6, per_class_val=2, seed=5):
    full = generate_synthetic(per_class_train + per_class_val, (16, 16), seed)
    by_class = [
        [s for s in full.samples if s.label_index == c] for c in (0, 1)
    ]
    train_m = DatasetManifest(
        by_class[0][:per_class_train] + by_class[1][:per_class_train],
        full.class_names,
        "train",
    )
    val_m = DatasetManifest(
        by_class[0][per_class_train:] + by_class[1][per_class_train:],
        full.class_names,
        "val",
    )
    return train_m, val_m


def fast_config(tmp_path, **overrides):
    fields = dict(
        model=mini_config(channel_multiplier=0.125),
        epochs=1,
        batch_size=8,
        seed=9,
        feed_stage="gray",
        checkpoint_dir=str(tmp_path / "ckpt"),
    )
    fields.update(overrides)
    return TrainConfig(**fields)


def always_class0_checkpoint(tmp_path):
    """All-zero weights except a final bias of [1, 0]: argmax is always 0."""
    config = mini_config(channel_multiplier=0.125)
    model = instantiate(config, seed=None)
    bias = next(p for p in model.params() if p.name == "dense2.bias")
    bias.value = np.array([1.0, 0.0], dtype=np.float32)
    path = tmp_path / "degenerate.ckpt"
    save_checkpoint(
        model, path, config, ("almond", "shell"), metadata={"feed_stage": "gray"}
    )
    return path


# input preparation


def test_prepare_input_shape_and_range():
    image = np.full((16, 16), 255, dtype=np.uint8)
    x = prepare_input(image, PreprocessParams(), "gray", 32, 32)
    assert x.shape == (32, 32, 1)
    assert x.dtype == np.float32
    assert (x == 1.0).all()
    assert (prepare_input(np.zeros((16, 16), np.uint8), PreprocessParams(), "gray", 32, 32) == 0.0).all()


def test_manifest_arrays(tmp_path):
    train_m, _ = synth_manifests()
    config = fast_config(tmp_path)
    xs, ys = manifest_arrays(train_m, config)
    assert xs.shape == (12, 32, 32, 1)
    assert xs.dtype == np.float32
    assert 0.0 <= xs.min() and xs.max() <= 1.0
    assert ys.tolist() == [0] * 6 + [1] * 6


def test_sample_image_sources(tmp_path):
    g = Rng(70)
    image = np.array(
        [[g.below(256) for _ in range(4)] for _ in range(4)], dtype=np.uint8
    )
    assert sample_image_from(image) is image
    write_pgm(tmp_path / "a.pgm", image)
    from almondnet.dataset import Sample

    loaded = sample_image(Sample(0, "almond", path="a.pgm"), base_dir=tmp_path)
    assert np.array_equal(loaded, image)
    with pytest.raises(SchemaMismatch):
        sample_image(Sample(0, "almond"))


def sample_image_from(image):
    from almondnet.dataset import Sample

    return sample_image(Sample(0, "almond", image=image))


# config validation


def test_train_config_validate():
    TrainConfig().validate()
    bad = [
        dict(epochs=0),
        dict(batch_size=0),
        dict(optimizer="rmsprop"),
        dict(feed_stage="fourier"),
        dict(augment="rot90"),
        dict(val_fraction=1.0),
        dict(val_fraction=-0.1),
    ]
    for overrides in bad:
        with pytest.raises(SchemaMismatch):
            TrainConfig(**overrides).validate()


# training


def test_train_one_epoch(tmp_path):
    train_m, val_m = synth_manifests()
    config = fast_config(tmp_path)
    history, best = train(config, train_m, val_m)
    assert len(history) == 1
    record = history[0]
    assert record.epoch == 1
    assert np.isfinite(record.train_loss) and np.isfinite(record.val_loss)
    assert 0.0 <= record.train_acc <= 1.0
    assert 0.0 <= record.val_acc <= 1.0
    assert record.seconds == 0.0
    assert best.endswith("best.ckpt")
    ckpt_dir = tmp_path / "ckpt"
    assert (ckpt_dir / "best.ckpt").exists()
    lines = (ckpt_dir / "history.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,train_acc,val_loss,val_acc,seconds"
    assert len(lines) == 2
    assert lines[1].endswith(",0.000")


def test_train_runs_are_byte_identical(tmp_path):
    train_m, val_m = synth_manifests()
    paths = []
    for name in ("a", "b"):
        config = fast_config(tmp_path / name, epochs=2)
        train(config, train_m, val_m)
        paths.append(tmp_path / name / "ckpt")
    assert (paths[0] / "history.csv").read_bytes() == (paths[1] / "history.csv").read_bytes()
    assert (paths[0] / "best.ckpt").read_bytes() == (paths[1] / "best.ckpt").read_bytes()


def test_train_seed_changes_outcome(tmp_path):
    train_m, val_m = synth_manifests()
    train(fast_config(tmp_path / "a", epochs=1, seed=9), train_m, val_m)
    train(fast_config(tmp_path / "b", epochs=1, seed=10), train_m, val_m)
    a = (tmp_path / "a" / "ckpt" / "history.csv").read_text()
    b = (tmp_path / "b" / "ckpt" / "history.csv").read_text()
    assert a != b


def test_train_rejects_bad_manifests(tmp_path):
    train_m, val_m = synth_manifests()
    config = fast_config(tmp_path)
    empty = DatasetManifest([], train_m.class_names, "train")
    with pytest.raises(TooFewSamples):
        train(config, empty, val_m)
    with pytest.raises(TooFewSamples):
        train(config, train_m, empty)
    renamed = DatasetManifest(val_m.samples, ("nut", "husk"), "val")
    with pytest.raises(LabelMismatch):
        train(config, train_m, renamed)


def test_train_diverges_on_huge_learning_rate(tmp_path):
    train_m, val_m = synth_manifests()
    config = fast_config(
        tmp_path, epochs=5, optimizer="sgd", learning_rate=1e12
    )
    with pytest.raises(DivergedLoss) as err, np.errstate(all="ignore"):
        train(config, train_m, val_m)
    assert err.value.epoch >= 1
    text = (tmp_path / "ckpt" / "history.csv").read_text()
    assert f"# diverged at epoch {err.value.epoch}" in text
    assert len(load_history(tmp_path / "ckpt" / "history.csv")) < config.epochs


def test_augment_hflip_is_deterministic_but_differs(tmp_path):
    train_m, val_m = synth_manifests()
    texts = {}
    for name, augment in (("a", "none"), ("b", "hflip"), ("c", "hflip")):
        config = fast_config(tmp_path / name, augment=augment)
        train(config, train_m, val_m)
        texts[name] = (tmp_path / name / "ckpt" / "history.csv").read_text()
    assert texts["b"] == texts["c"]
    assert texts["a"] != texts["b"]


def test_record_time(tmp_path):
    train_m, val_m = synth_manifests()
    config = fast_config(tmp_path, record_time=True)
    history, _ = train(config, train_m, val_m)
    assert history[0].seconds > 0.0
    row = (tmp_path / "ckpt" / "history.csv").read_text().splitlines()[1]
    assert not row.endswith(",0.000")


def test_checkpoint_every_epoch_reproduces_history_metrics(tmp_path):
    train_m, val_m = synth_manifests()
    config = fast_config(tmp_path, epochs=2, checkpoint_every_epoch=True)
    history, _ = train(config, train_m, val_m)
    ckpt_dir = tmp_path / "ckpt"
    assert (ckpt_dir / "epoch_0001.ckpt").exists()
    assert (ckpt_dir / "epoch_0002.ckpt").exists()

    ckpt = load_checkpoint(ckpt_dir / "epoch_0002.ckpt")
    assert ckpt.metadata["epoch"] == "2"
    weights = np.array(
        compute_class_weights(train_m.class_counts()).weights, dtype=np.float64
    )
    x_val, y_val = manifest_arrays(val_m, config)
    val_loss, val_acc = _dataset_metrics(
        ckpt.model, x_val, y_val, weights, config.batch_size
    )
    assert abs(val_loss - history[1].val_loss) < 1e-12
    assert val_acc == history[1].val_acc


# history files


def test_history_round_trip(tmp_path):
    records = [
        EpochRecord(1, 0.693147, 0.5, 0.70001, 0.25, 0.0),
        EpochRecord(2, 0.401, 0.875, 0.39, 0.75, 1.25),
    ]
    path = tmp_path / "history.csv"
    write_history(records, path)
    assert load_history(path) == records


def test_history_aborted_marker(tmp_path):
    path = tmp_path / "history.csv"
    write_history([EpochRecord(1, 1.0, 0.5, 1.0, 0.5)], path, aborted_epoch=2)
    assert path.read_text().splitlines()[-1] == "# diverged at epoch 2"
    assert len(load_history(path)) == 1  # comment line is skipped


# evaluation


def test_evaluate_degenerate_model(tmp_path):
    path = always_class0_checkpoint(tmp_path)
    test_m, _ = synth_manifests(per_class_train=5, per_class_val=1, seed=77)
    matrix, report = evaluate(path, test_m)
    assert matrix.counts.tolist() == [[5, 0], [5, 0]]
    assert report.accuracy == 0.5
    assert report.per_class[0].recall == 1.0
    assert report.per_class[1].recall == 0.0


def test_evaluate_validations(tmp_path):
    path = always_class0_checkpoint(tmp_path)
    with pytest.raises(EmptyTestSet):
        evaluate(path, DatasetManifest([], ("almond", "shell"), "test"))
    test_m, _ = synth_manifests(per_class_train=2, per_class_val=1, seed=78)
    renamed = DatasetManifest(test_m.samples, ("nut", "husk"), "test")
    with pytest.raises(LabelMismatch):
        evaluate(path, renamed)


def test_evaluate_after_training(tmp_path):
    train_m, val_m = synth_manifests()
    config = fast_config(tmp_path, epochs=2)
    _, best = train(config, train_m, val_m)
    matrix, report = evaluate(best, val_m)
    assert matrix.total == len(val_m)
    assert 0.0 <= report.accuracy <= 1.0


# preprocess metadata round trip


def test_preprocess_metadata_round_trip(tmp_path):
    params = PreprocessParams(
        gaussian_kernel=7,
        gaussian_sigma=2.0,
        nlm_h=8.0,
        nlm_template_radius=2,
        nlm_search_radius=4,
        thresh_block=15,
        thresh_c=3.5,
        canny_low=40.0,
        canny_high=120.0,
    )
    config = fast_config(tmp_path, feed_stage="thresh", preprocess=params)
    restored, stage = preprocess_from_metadata(_preprocess_metadata(config))
    assert restored == params
    assert stage == "thresh"


def test_preprocess_metadata_defaults():
    params, stage = preprocess_from_metadata({})
    assert params == PreprocessParams()
    assert stage == "denoise"


# prediction


def test_predict_degenerate_model(tmp_path):
    path = always_class0_checkpoint(tmp_path)
    sample = generate_synthetic(1, (16, 16), 80).samples[1]  # a shell image
    image_path = tmp_path / "sample.pgm"
    write_pgm(image_path, sample.image)
    label, probs = predict(path, image_path)
    assert label == "almond"  # the degenerate model ignores its input
    assert probs.shape == (2,)
    assert abs(probs.sum() - 1.0) < 1e-6
    assert probs[0] > 0.5
    again = predict(path, image_path)
    assert again[0] == label
    assert np.array_equal(again[1], probs)
