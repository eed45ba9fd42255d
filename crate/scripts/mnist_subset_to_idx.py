#!/usr/bin/env python3
"""Convert the digit arrays bundled in the npm `mnist` package (10,000 MNIST
digits stored as JSON, pixel values scaled to [0, 1] and rounded to three
decimals) into gzip-compressed IDX files.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_subset_to_idx.py package/src/digits data/mnist-subset

Digits are shuffled with a fixed seed and split 8000 / 2000 into
train / t10k files. Pixels are restored to bytes with round(v * 255).
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

ROWS = COLS = 28
TRAIN = 8000


def write_images(path, images):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), ROWS, COLS))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main(src, dst):
    src, dst = Path(src), Path(dst)
    samples = []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        n = len(data) // (ROWS * COLS)
        for k in range(n):
            chunk = data[k * ROWS * COLS:(k + 1) * ROWS * COLS]
            samples.append(([min(255, max(0, round(v * 255))) for v in chunk], digit))
    random.Random(20240601).shuffle(samples)
    dst.mkdir(parents=True, exist_ok=True)
    splits = {"train": samples[:TRAIN], "t10k": samples[TRAIN:]}
    for name, rows in splits.items():
        write_images(dst / f"{name}-images-idx3-ubyte.gz", [s[0] for s in rows])
        write_labels(dst / f"{name}-labels-idx1-ubyte.gz", [s[1] for s in rows])
        print(f"{name}: {len(rows)} examples")


if __name__ == "__main__":
    main(*sys.argv[1:3])
