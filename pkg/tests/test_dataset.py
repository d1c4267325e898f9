"""Class weights, stratified splits, synthetic data, and manifest files."""

import numpy as np
import pytest

from almondnet.dataset import (
    DEFAULT_CLASSES,
    DatasetManifest,
    Sample,
    compute_class_weights,
    generate_synthetic,
    load_manifest,
    materialize,
    save_manifest,
    split_dataset,
)
from almondnet.errors import EmptyClass, InvalidSize, SchemaMismatch, TooFewSamples
from almondnet.imgio import read_pgm
from almondnet.rng import Rng
from helpers import make_manifest, order_digest


# class weights


def test_weights_balanced_counts_are_ones():
    assert compute_class_weights([300, 300]).weights == (1.0, 1.0)


def test_weights_canonical_example_exact():
    assert compute_class_weights([500, 100]).weights == (0.6, 3.0)


def test_weights_single_class():
    assert compute_class_weights([42]).weights == (1.0,)


def test_weights_identity_random_vectors():
    g = Rng(1)
    for _ in range(100):
        k = g.randrange(1, 7)
        counts = [g.randrange(1, 5001) for _ in range(k)]
        weights = compute_class_weights(counts).weights
        total = sum(w * c for w, c in zip(weights, counts))
        n = sum(counts)
        assert abs(total - n) <= 1e-12 * n


def test_weights_rarer_class_weighs_more():
    w = compute_class_weights([900, 100]).weights
    assert w[1] > w[0]


def test_weights_reject_empty_class():
    with pytest.raises(EmptyClass):
        compute_class_weights([10, 0])


def test_weights_match_sklearn():
    sklearn = pytest.importorskip("sklearn")
    from sklearn.utils.class_weight import compute_class_weight

    g = Rng(2)
    for _ in range(20):
        k = g.randrange(2, 5)
        counts = [g.randrange(1, 200) for _ in range(k)]
        y = np.repeat(np.arange(k), counts)
        ref = compute_class_weight("balanced", classes=np.arange(k), y=y)
        mine = compute_class_weights(counts).weights
        assert np.allclose(mine, ref, rtol=1e-12)


# stratified split


def test_split_counts_match_published_partition():
    # 736 samples, test fraction 106/736, val 20% of the remainder.
    train, val, test = split_dataset(make_manifest(368), 0.2, 106 / 736, seed=42)
    assert [len(p) for p in (train, val, test)] == [504, 126, 106]
    for part, per_class in zip((train, val, test), (252, 63, 53)):
        assert part.class_counts() == [per_class, per_class]
    assert (train.split_tag, val.split_tag, test.split_tag) == ("train", "val", "test")


def test_split_byte_stable_digests():
    # Frozen when the splitter was written; any change to the shuffle or
    # partition order breaks saved splits and must show up here.
    train, val, test = split_dataset(make_manifest(368), 0.2, 106 / 736, seed=42)
    assert order_digest(train) == "860227bc908774e1"
    assert order_digest(val) == "59f027faa3515802"
    assert order_digest(test) == "5678731e5e65bfa6"


def test_split_disjoint_union_complete():
    manifest = make_manifest(50)
    train, val, test = split_dataset(manifest, 0.25, 0.2, seed=7)
    parts = [s.path for s in train.samples + val.samples + test.samples]
    assert len(parts) == len(set(parts)) == 100
    assert set(parts) == {s.path for s in manifest.samples}


def test_split_same_seed_identical_other_seed_differs():
    m = make_manifest(40)
    a = split_dataset(m, 0.2, 0.2, seed=5)
    b = split_dataset(m, 0.2, 0.2, seed=5)
    c = split_dataset(m, 0.2, 0.2, seed=6)
    for pa, pb in zip(a, b):
        assert [s.path for s in pa.samples] == [s.path for s in pb.samples]
    assert [len(p) for p in a] == [len(p) for p in c]  # counts seed-free
    assert any(
        [s.path for s in pa.samples] != [s.path for s in pc.samples]
        for pa, pc in zip(a, c)
    )


def test_split_does_not_mutate_input():
    m = make_manifest(20)
    before = [s.path for s in m.samples]
    split_dataset(m, 0.2, 0.2, seed=1)
    assert [s.path for s in m.samples] == before


def test_split_zero_fractions_all_train():
    train, val, test = split_dataset(make_manifest(10), 0.0, 0.0, seed=1)
    assert (len(train), len(val), len(test)) == (20, 0, 0)


def test_split_round_half_down():
    # 10 per class, test 0.25 -> 2.5 rounds down to 2; val 0.25 of 8 -> 2.
    train, val, test = split_dataset(make_manifest(10), 0.25, 0.25, seed=3)
    assert test.class_counts() == [2, 2]
    assert val.class_counts() == [2, 2]
    assert train.class_counts() == [6, 6]


def test_split_rejects_bad_fractions():
    m = make_manifest(10)
    with pytest.raises(TooFewSamples):
        split_dataset(m, 0.5, 0.5, seed=1)
    with pytest.raises(TooFewSamples):
        split_dataset(m, -0.1, 0.2, seed=1)
    with pytest.raises(TooFewSamples):
        split_dataset(m, 0.2, 1.0, seed=1)


def test_split_rejects_too_small_class():
    with pytest.raises(TooFewSamples):
        split_dataset(make_manifest(1), 0.0, 0.6, seed=1)


# synthetic generation


def test_synthetic_counts_and_types():
    m = generate_synthetic(5, (32, 32), seed=9)
    assert m.class_counts() == [5, 5]
    for s in m.samples:
        assert s.image is not None and s.path is None
        assert s.image.shape == (32, 32) and s.image.dtype == np.uint8


def test_synthetic_deterministic_and_diverse():
    a = generate_synthetic(3, (32, 32), seed=11)
    b = generate_synthetic(3, (32, 32), seed=11)
    c = generate_synthetic(3, (32, 32), seed=12)
    for sa, sb in zip(a.samples, b.samples):
        assert np.array_equal(sa.image, sb.image)
    assert not all(
        np.array_equal(sa.image, sc.image) for sa, sc in zip(a.samples, c.samples)
    )
    # Every sample within a run is distinct.
    images = [s.image.tobytes() for s in a.samples]
    assert len(set(images)) == len(images)


def test_synthetic_classes_differ_at_center():
    # Class 0 is filled (bright center); class 1 is a ring (dark center).
    m = generate_synthetic(20, (32, 32), seed=13)
    center = {0: [], 1: []}
    for s in m.samples:
        center[s.label_index].append(float(s.image[14:18, 14:18].mean()))
    assert np.mean(center[0]) - np.mean(center[1]) > 50.0


def test_synthetic_rejects_bad_arguments():
    with pytest.raises(InvalidSize):
        generate_synthetic(0, (32, 32), seed=1)
    with pytest.raises(InvalidSize):
        generate_synthetic(3, (8, 32), seed=1)


# materialization and manifest files


def test_materialize_writes_readable_pgms(tmp_path):
    m = generate_synthetic(2, (16, 16), seed=21)
    on_disk = materialize(m, tmp_path)
    assert [s.path for s in on_disk.samples] == [
        "almond_0000.pgm",
        "almond_0001.pgm",
        "shell_0000.pgm",
        "shell_0001.pgm",
    ]
    for mem, disk in zip(m.samples, on_disk.samples):
        assert np.array_equal(read_pgm(tmp_path / disk.path), mem.image)


def test_manifest_round_trip(tmp_path):
    m = make_manifest(4)
    path = tmp_path / "all.tsv"
    save_manifest(m, path)
    back = load_manifest(path)
    assert back.class_names == m.class_names
    assert back.split_tag == "all"
    assert [(s.label_index, s.label_name, s.path) for s in back.samples] == [
        (s.label_index, s.label_name, s.path) for s in m.samples
    ]


def test_manifest_line_count(tmp_path):
    path = tmp_path / "big.tsv"
    save_manifest(make_manifest(368), path)
    lines = path.read_text().splitlines()
    assert len(lines) == 736 + 1
    assert lines[0] == "v1 classes=almond,shell"


def test_manifest_preserves_split_tag(tmp_path):
    train, _, _ = split_dataset(make_manifest(10), 0.2, 0.2, seed=1)
    path = tmp_path / "train.tsv"
    save_manifest(train, path)
    assert load_manifest(path).split_tag == "train"


def test_manifest_rejects_in_memory_samples(tmp_path):
    m = generate_synthetic(1, (16, 16), seed=1)
    with pytest.raises(SchemaMismatch):
        save_manifest(m, tmp_path / "x.tsv")


def test_load_manifest_rejects_bad_files(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("")
    with pytest.raises(SchemaMismatch):
        load_manifest(path)
    path.write_text("v2 classes=a,b\n")
    with pytest.raises(SchemaMismatch):
        load_manifest(path)
    path.write_text("v1 classes=a,b\nall\tc\tx.pgm\n")
    with pytest.raises(SchemaMismatch):
        load_manifest(path)
    path.write_text("v1 classes=a,b\nall only-two-fields\n")
    with pytest.raises(SchemaMismatch):
        load_manifest(path)


def test_manifest_validate_rejects_inconsistencies():
    bad_index = DatasetManifest([Sample(5, "almond", path="x")], DEFAULT_CLASSES)
    with pytest.raises(SchemaMismatch):
        bad_index.validate()
    bad_name = DatasetManifest([Sample(0, "shell", path="x")], DEFAULT_CLASSES)
    with pytest.raises(SchemaMismatch):
        bad_name.validate()
    dup = DatasetManifest([], ("a", "a"))
    with pytest.raises(SchemaMismatch):
        dup.validate()
