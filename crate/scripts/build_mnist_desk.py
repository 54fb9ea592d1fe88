#!/usr/bin/env python3
"""Build the desk-scale MNIST subset as IDX files.

Source: the `mnist` npm package (v1.1.0, MIT), which bundles 10,000 real MNIST
digits as per-class JSON arrays of pixel/255 values rounded to 3 decimals.
Every value maps back to a unique byte, so the IDX payload is exact.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/build_mnist_desk.py package/src/digits data/mnist-desk

Records are interleaved with a fixed permutation (numpy seed 20230101), the
first 8,000 go to the training files and the remaining 2,000 to the test files.
"""
import json
import struct
import sys
from pathlib import Path

import numpy as np

SEED = 20230101
TRAIN = 8000


def main(src: Path, dst: Path) -> None:
    images, labels = [], []
    for digit in range(10):
        raw = json.loads((src / f"{digit}.json").read_text())["data"]
        px = np.rint(np.asarray(raw) * 255.0).astype(np.int64)
        assert px.min() >= 0 and px.max() <= 255
        px = px.astype(np.uint8).reshape(-1, 784)
        images.append(px)
        labels.append(np.full(len(px), digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    perm = np.random.default_rng(SEED).permutation(len(labels))
    images, labels = images[perm], labels[perm]

    dst.mkdir(parents=True, exist_ok=True)
    for name, sl in (("train", slice(0, TRAIN)), ("t10k", slice(TRAIN, None))):
        im, lb = images[sl], labels[sl]
        with open(dst / f"{name}-images-idx3-ubyte", "wb") as f:
            f.write(struct.pack(">IIII", 0x803, len(im), 28, 28))
            f.write(im.tobytes())
        with open(dst / f"{name}-labels-idx1-ubyte", "wb") as f:
            f.write(struct.pack(">II", 0x801, len(lb)))
            f.write(lb.tobytes())
        print(name, len(lb), np.bincount(lb, minlength=10).tolist())


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
