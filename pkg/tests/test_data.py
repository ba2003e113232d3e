"""Dataset generation and ingestion."""

import struct

import numpy as np
import pytest

from flipsim import qnn


def test_blobs_deterministic():
    a = qnn.gaussian_blobs(seed=5)
    b = qnn.gaussian_blobs(seed=5)
    assert np.array_equal(a.x_train, b.x_train)
    assert np.array_equal(a.y_test, b.y_test)


def test_blobs_shapes_and_labels():
    ds = qnn.gaussian_blobs(classes=6, shape=(1, 4, 4), train_per_class=10,
                            test_per_class=4, seed=0)
    assert ds.x_train.shape == (60, 1, 4, 4)
    assert ds.x_test.shape == (24, 1, 4, 4)
    assert set(ds.y_train.tolist()) == set(range(6))
    assert ds.input_shape == (1, 4, 4)


def test_mixed_batch_is_stratified():
    ds = qnn.gaussian_blobs(seed=1)
    x, y = ds.batch(256, seed=9)
    counts = np.bincount(y, minlength=10)
    assert counts.min() >= 25 and counts.max() <= 26
    x2, y2 = ds.batch(256, seed=9)
    assert np.array_equal(x, x2) and np.array_equal(y, y2)


def test_single_class_batch():
    ds = qnn.gaussian_blobs(seed=1)
    x, y = ds.batch(64, seed=3, from_class=7)
    assert np.all(y == 7)
    with pytest.raises(ValueError):
        ds.batch(8, seed=3, from_class=99)


def _write_idx_images(path, images):
    n, h, w = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">BBBB", 0, 0, 0x08, 3))
        fh.write(struct.pack(">III", n, h, w))
        fh.write(images.astype(np.uint8).tobytes())


def _write_idx_labels(path, labels):
    with open(path, "wb") as fh:
        fh.write(struct.pack(">BBBB", 0, 0, 0x08, 1))
        fh.write(struct.pack(">I", len(labels)))
        fh.write(labels.astype(np.uint8).tobytes())


def test_idx_dataset_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    xtr = rng.integers(0, 256, size=(20, 6, 6), dtype=np.uint8)
    ytr = rng.integers(0, 3, size=20, dtype=np.uint8)
    xte = rng.integers(0, 256, size=(8, 6, 6), dtype=np.uint8)
    yte = rng.integers(0, 3, size=8, dtype=np.uint8)
    paths = {name: str(tmp_path / name) for name in
             ("tri", "trl", "tei", "tel")}
    _write_idx_images(paths["tri"], xtr)
    _write_idx_labels(paths["trl"], ytr)
    _write_idx_images(paths["tei"], xte)
    _write_idx_labels(paths["tel"], yte)
    ds = qnn.load_idx_dataset(paths["tri"], paths["trl"],
                              paths["tei"], paths["tel"])
    assert ds.x_train.shape == (20, 1, 6, 6)
    assert ds.x_train.max() <= 1.0
    assert np.array_equal(ds.y_test, yte)
    assert ds.class_count == 3


def test_idx_bad_magic_rejected(tmp_path):
    bad = tmp_path / "bad.idx"
    bad.write_bytes(b"\x01\x02\x03\x04")
    with pytest.raises(ValueError):
        qnn.load_idx_dataset(str(bad), str(bad), str(bad), str(bad))
