import hashlib
import struct

import numpy as np
import pytest

from peal.datasets import (
    AnnotationError,
    Annotator,
    BadMagicError,
    BudgetExceededError,
    Dataset,
    LabelRangeError,
    NonFiniteFeatureError,
    SyntheticSpec,
    TrailingBytesError,
    TruncatedFileError,
    UnsupportedVersionError,
    annotate,
    export_csv,
    generate_synthetic,
    load_dataset,
    save_dataset,
)

SMALL = SyntheticSpec(num_classes=3, per_class=20, tokens=2, dim=4, seed=5)


@pytest.mark.parametrize("kind", ["tokens", "embeddings"])
def test_round_trip_is_bit_exact(tmp_path, kind):
    ds = generate_synthetic(SyntheticSpec(num_classes=4, per_class=15, tokens=3, dim=5, kind=kind, seed=1))
    path = tmp_path / "d.bin"
    save_dataset(ds, path)
    loaded = load_dataset(path, test_fraction=0.2, split_seed=1)
    assert loaded == ds
    assert loaded.samples.tobytes() == ds.samples.tobytes()


def test_hand_built_embedding_file(tmp_path):
    # two samples, f = 2, K = 3: labels (2, 0), features (1.5, -2), (0.25, 8)
    raw = (
        b"PEMB" + b"\x01\x00\x00\x00" + b"\x02" + b"\x00" * 7 + b"\x02\x00\x00\x00" + b"\x03\x00\x00\x00"
        + b"\x02\x00\x00\x00" + b"\x00\x00\x00\x00"
        + b"\x00\x00\xc0\x3f" + b"\x00\x00\x00\xc0" + b"\x00\x00\x80\x3e" + b"\x00\x00\x00\x41"
    )
    path = tmp_path / "two.pemb"
    path.write_bytes(raw)
    ds = load_dataset(path, test_fraction=0.0)
    assert ds.kind == "embeddings" and ds.num_classes == 3 and len(ds) == 2
    np.testing.assert_array_equal(ds.samples, [[1.5, -2.0], [0.25, 8.0]])
    assert Annotator(ds).annotate([0, 1]).tolist() == [2, 0]


def test_hand_built_token_file(tmp_path):
    header = b"PTOK" + struct.pack("<IQIII", 1, 1, 2, 1, 2)
    path = tmp_path / "one.ptok"
    path.write_bytes(header + struct.pack("<I", 1) + struct.pack("<2f", 3.0, -0.5))
    ds = load_dataset(path, test_fraction=0.0)
    assert ds.samples.shape == (1, 2, 1)
    np.testing.assert_array_equal(ds.samples.ravel(), [3.0, -0.5])


def _saved(tmp_path, ds=None):
    path = tmp_path / "d.ptok"
    save_dataset(ds or generate_synthetic(SMALL), path)
    return path, path.read_bytes()


def test_distinct_format_errors(tmp_path):
    path, raw = _saved(tmp_path)
    cases = {
        BadMagicError: b"XXXX" + raw[4:],
        UnsupportedVersionError: raw[:4] + struct.pack("<I", 2) + raw[8:],
        TruncatedFileError: raw[:-3],
        TrailingBytesError: raw + b"\x00",
    }
    for err, data in cases.items():
        path.write_bytes(data)
        with pytest.raises(err):
            load_dataset(path)
    path.write_bytes(raw[:10])
    with pytest.raises(TruncatedFileError):
        load_dataset(path)


def test_label_out_of_range_names_record(tmp_path):
    path, raw = _saved(tmp_path)
    hsize = 4 + struct.calcsize("<IQIII")
    bad = bytearray(raw)
    bad[hsize + 4 * 7: hsize + 4 * 8] = struct.pack("<I", 3)  # label K at record 7
    path.write_bytes(bytes(bad))
    with pytest.raises(LabelRangeError) as err:
        load_dataset(path)
    assert err.value.record == 7
    assert "7" in str(err.value)


def test_nan_feature_names_record(tmp_path):
    path, raw = _saved(tmp_path)
    n = 60
    off = 4 + struct.calcsize("<IQIII") + 4 * n + 4 * (2 * 4 * 11)  # first value of record 11
    bad = bytearray(raw)
    bad[off: off + 4] = struct.pack("<f", float("nan"))
    path.write_bytes(bytes(bad))
    with pytest.raises(NonFiniteFeatureError) as err:
        load_dataset(path)
    assert err.value.record == 11


def test_dataset_invariants():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 3)), [0, 1], 2, [0], [0])
    with pytest.raises(LabelRangeError):
        Dataset(np.zeros((2, 3)), [0, 2], 2, [0], [1])


def test_generator_determinism():
    a, b = generate_synthetic(SMALL), generate_synthetic(SMALL)
    assert a == b and a.samples.tobytes() == b.samples.tobytes()
    assert generate_synthetic(SyntheticSpec(num_classes=3, per_class=20, tokens=2, dim=4, seed=6)) != a


def test_generator_rejects_degenerate_specs():
    for bad in (dict(num_classes=0), dict(per_class=0), dict(noise=0.0), dict(separation=-1.0)):
        with pytest.raises(ValueError):
            generate_synthetic(SyntheticSpec(**bad))


def test_split_is_stratified_and_disjoint():
    ds = generate_synthetic(SyntheticSpec(num_classes=5, per_class=40, tokens=1, dim=3))
    assert np.intersect1d(ds.pool_ids, ds.test_ids).size == 0
    assert len(ds.pool_ids) + len(ds.test_ids) == 200
    np.testing.assert_array_equal(np.bincount(ds.test_labels, minlength=5), [8] * 5)


def test_imbalance_ratios_are_tiled():
    spec = SyntheticSpec(num_classes=4, per_class=100, imbalance=(5.0, 1.0))
    assert spec.class_sizes().tolist() == [100, 20, 100, 20]


def _mean_pooled(ds, ids):
    return ds.samples[ids].mean(axis=1)


def test_noise_limit_is_nearest_mean_separable():
    ds = generate_synthetic(SyntheticSpec(num_classes=10, per_class=30, noise=1e-4, seed=3))
    pool_y = Annotator(ds).annotate(ds.pool_ids)
    means = np.stack([_mean_pooled(ds, ds.pool_ids[pool_y == c]).mean(axis=0) for c in range(10)])
    x = _mean_pooled(ds, ds.test_ids)
    pred = np.argmin(((x[:, None, :] - means[None]) ** 2).sum(-1), axis=1)
    assert np.mean(pred == ds.test_labels) == 1.0


def test_logistic_regression_oracle_at_separation_four():
    from sklearn.linear_model import LogisticRegression

    ds = generate_synthetic(SyntheticSpec(num_classes=10, per_class=250, separation=4.0, noise=1.0, seed=0))
    y = Annotator(ds).annotate(ds.pool_ids)
    clf = LogisticRegression(max_iter=2000).fit(_mean_pooled(ds, ds.pool_ids), y)
    assert clf.score(_mean_pooled(ds, ds.test_ids), ds.test_labels) > 0.95


def test_export_csv(tmp_path):
    ds = generate_synthetic(SMALL)
    export_csv(ds, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0].split(",")[:4] == ["id", "split", "label", "x0"]
    assert len(lines) == 61 and len(lines[1].split(",")) == 3 + 8


# annotation ------------------------------------------------------------------------


def test_annotate_empty_leaves_budget():
    ann = Annotator(generate_synthetic(SMALL), budget=10)
    assert annotate(ann, []).size == 0 and ann.consumed == 0


def test_annotate_ledger_and_hygiene():
    ds = generate_synthetic(SMALL)
    ann = Annotator(ds, budget=10)
    ids = ds.pool_ids[:7]
    labels = ann.annotate(ids)
    assert ann.consumed == 7 and len(labels) == 7
    assert sorted(ann.labeled) == sorted(ids.tolist())
    with pytest.raises(AnnotationError):
        ann.annotate([int(ds.test_ids[0])])
    with pytest.raises(AnnotationError):
        ann.annotate([int(ids[0])])
    with pytest.raises(AnnotationError):
        ann.annotate([int(ds.pool_ids[8])] * 2)
    with pytest.raises(BudgetExceededError):
        ann.annotate(ds.pool_ids[7:11])
    assert ann.consumed == 7


def test_pool_labels_not_exposed_as_public_attribute():
    ds = generate_synthetic(SMALL)
    public = [a for a in vars(ds) if not a.startswith("_")]
    for name in public:
        value = getattr(ds, name)
        if isinstance(value, np.ndarray) and value.shape == (len(ds),):
            pytest.fail(f"attribute {name} has one entry per sample")


def test_file_checksum_is_stable(tmp_path):
    p1, p2 = tmp_path / "a", tmp_path / "b"
    save_dataset(generate_synthetic(SMALL), p1)
    save_dataset(generate_synthetic(SMALL), p2)
    assert hashlib.sha256(p1.read_bytes()).digest() == hashlib.sha256(p2.read_bytes()).digest()
