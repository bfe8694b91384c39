#!/usr/bin/env python3
"""Build the 6,000/1,000 MNIST subset used by the accuracy experiments.

Source: the `mnist` npm package (v1.1.0), which ships 10,000 MNIST digits as
JSON arrays of pixel intensities in [0, 1]. The digits are shuffled with a
fixed seed, the first 6,000 become the training set and the next 1,000 the
test set. Output is gzipped IDX (the standard MNIST container format).

    curl -sO https://registry.npmjs.org/mnist/-/mnist-1.1.0.tgz
    tar xzf mnist-1.1.0.tgz
    python3 scripts/make_mnist_subset.py package/src/digits data/mnist-subset
"""
import gzip
import json
import struct
import sys
from pathlib import Path

import numpy as np

TRAIN, TEST, SEED = 6000, 1000, 20221


def write_idx_images(path, images):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main(src, dst):
    src, dst = Path(src), Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    images, labels = [], []
    for digit in range(10):
        raw = np.asarray(json.loads((src / f"{digit}.json").read_text())["data"])
        raw = raw.reshape(-1, 784)
        images.append(np.rint(raw * 255.0).clip(0, 255))
        labels.append(np.full(len(raw), digit))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    order = np.random.default_rng(SEED).permutation(len(labels))
    images, labels = images[order], labels[order]
    assert len(labels) >= TRAIN + TEST
    write_idx_images(dst / "train-images-idx3-ubyte.gz", images[:TRAIN])
    write_idx_labels(dst / "train-labels-idx1-ubyte.gz", labels[:TRAIN])
    write_idx_images(dst / "t10k-images-idx3-ubyte.gz", images[TRAIN:TRAIN + TEST])
    write_idx_labels(dst / "t10k-labels-idx1-ubyte.gz", labels[TRAIN:TRAIN + TEST])
    print("train", np.bincount(labels[:TRAIN]), "test", np.bincount(labels[TRAIN:TRAIN + TEST]))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
