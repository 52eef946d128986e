#!/usr/bin/env python3
"""Write a small MNIST subset as gzip-compressed IDX files.

The public MNIST mirrors are not always reachable. The mlxtend wheel on PyPI
ships 5000 MNIST digits (500 per class) as CSV; this script shuffles them with
a fixed seed and splits them 4000 / 1000 into train and test files using the
standard MNIST file names, so the IDX loader can read them like the real thing.

    pip download --no-deps mlxtend==0.24.0 -d /tmp/mlxtend
    python3 scripts/mnist_subset.py /tmp/mlxtend/mlxtend-0.24.0-py3-none-any.whl data/mnist
"""

import gzip
import io
import struct
import sys
import zipfile

import numpy as np

CSV_MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"
SEED = 20240229
TEST_PER_CLASS = 100


def idx_images(images):
    n = images.shape[0]
    return struct.pack(">IIII", 0x00000803, n, 28, 28) + images.astype(np.uint8).tobytes()


def idx_labels(labels):
    return struct.pack(">II", 0x00000801, labels.shape[0]) + labels.astype(np.uint8).tobytes()


def write_gz(path, payload):
    # mtime=0 keeps the archives byte-reproducible
    with open(path, "wb") as raw:
        with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as gz:
            gz.write(payload)


def main():
    wheel, out_dir = sys.argv[1], sys.argv[2]
    with zipfile.ZipFile(wheel) as zf:
        with gzip.open(io.BytesIO(zf.read(CSV_MEMBER))) as fh:
            table = np.loadtxt(fh, delimiter=",")
    x = table[:, :-1].astype(np.uint8)
    y = table[:, -1].astype(np.int64)

    rng = np.random.default_rng(SEED)
    test_idx, train_idx = [], []
    for c in range(10):
        rows = np.flatnonzero(y == c)
        rng.shuffle(rows)
        test_idx.extend(rows[:TEST_PER_CLASS])
        train_idx.extend(rows[TEST_PER_CLASS:])
    train_idx = rng.permutation(np.array(train_idx))
    test_idx = rng.permutation(np.array(test_idx))

    import os

    os.makedirs(out_dir, exist_ok=True)
    write_gz(f"{out_dir}/train-images-idx3-ubyte.gz", idx_images(x[train_idx]))
    write_gz(f"{out_dir}/train-labels-idx1-ubyte.gz", idx_labels(y[train_idx]))
    write_gz(f"{out_dir}/t10k-images-idx3-ubyte.gz", idx_images(x[test_idx]))
    write_gz(f"{out_dir}/t10k-labels-idx1-ubyte.gz", idx_labels(y[test_idx]))
    print(f"wrote {len(train_idx)} train / {len(test_idx)} test digits to {out_dir}")


if __name__ == "__main__":
    main()
