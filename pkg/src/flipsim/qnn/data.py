"""Datasets: seeded Gaussian-blob classification and IDX image files."""

import struct
from dataclasses import dataclass

import numpy as np


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    class_count: int

    @property
    def input_shape(self):
        return self.x_train.shape[1:]

    def batch(self, size, seed, from_class=None):
        """A fixed seeded batch from the test split.

        Mixed batches are stratified: every class contributes an equal share
        (up to rounding), so per-class prevalence in the batch is flat rather
        than multinomially noisy.  ``from_class`` restricts sampling to one
        label (used by the targeted search).  Sampling is without replacement
        when possible.
        """
        rng = np.random.default_rng(seed)
        if from_class is not None:
            pool = np.flatnonzero(self.y_test == from_class)
            if pool.size == 0:
                raise ValueError(f"no test samples of class {from_class}")
            idx = rng.choice(pool, size=size, replace=pool.size < size)
            return self.x_test[idx], self.y_test[idx]
        per_class, extra = divmod(size, self.class_count)
        picks = []
        for c in range(self.class_count):
            pool = np.flatnonzero(self.y_test == c)
            want = per_class + (1 if c < extra else 0)
            if want == 0:
                continue
            picks.append(rng.choice(pool, size=want, replace=pool.size < want))
        idx = rng.permutation(np.concatenate(picks))
        return self.x_test[idx], self.y_test[idx]


def gaussian_blobs(classes=10, shape=(1, 8, 8), train_per_class=205,
                   test_per_class=51, noise=1.0, seed=0):
    """Ten-blob toy classification: one Gaussian cluster per class.

    Class means are standard-normal patterns; samples add isotropic noise.
    Everything derives from ``seed``, so two calls are bit-identical.
    """
    rng = np.random.default_rng(seed)
    dim = int(np.prod(shape))
    means = rng.normal(0.0, 1.0, size=(classes, dim))

    def split(per_class):
        xs, ys = [], []
        for c in range(classes):
            xs.append(means[c] + rng.normal(0.0, noise, size=(per_class, dim)))
            ys.append(np.full(per_class, c, dtype=np.int64))
        x = np.concatenate(xs).reshape(-1, *shape)
        y = np.concatenate(ys)
        order = rng.permutation(len(y))
        return x[order], y[order]

    x_tr, y_tr = split(train_per_class)
    x_te, y_te = split(test_per_class)
    return Dataset(x_tr, y_tr, x_te, y_te, classes)


def _read_idx(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[0] != 0 or blob[1] != 0:
        raise ValueError(f"{path}: not an IDX file")
    dtype_tag, ndim = blob[2], blob[3]
    dtypes = {0x08: np.uint8, 0x09: np.int8, 0x0B: ">i2", 0x0C: ">i4",
              0x0D: ">f4", 0x0E: ">f8"}
    if dtype_tag not in dtypes:
        raise ValueError(f"{path}: unknown IDX dtype 0x{dtype_tag:02x}")
    dims = struct.unpack(f">{ndim}I", blob[4:4 + 4 * ndim])
    data = np.frombuffer(blob, dtype=dtypes[dtype_tag], offset=4 + 4 * ndim)
    return data.reshape(dims)


def load_idx_dataset(train_images, train_labels, test_images, test_labels,
                     normalize=True):
    """MNIST-style dataset from four IDX files; images become (1, H, W)."""
    x_tr = _read_idx(train_images).astype(np.float64)
    y_tr = _read_idx(train_labels).astype(np.int64)
    x_te = _read_idx(test_images).astype(np.float64)
    y_te = _read_idx(test_labels).astype(np.int64)
    if normalize:
        x_tr /= 255.0
        x_te /= 255.0
    x_tr = x_tr[:, None, :, :]
    x_te = x_te[:, None, :, :]
    classes = int(max(y_tr.max(), y_te.max())) + 1
    return Dataset(x_tr, y_tr, x_te, y_te, classes)
