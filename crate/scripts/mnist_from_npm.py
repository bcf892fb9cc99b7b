#!/usr/bin/env python3
"""Rebuild a 10,000-digit MNIST subset as gzip IDX files.

The npm package `mnist@1.1.0` ships 10,000 MNIST digits as JSON arrays of
pixel/255 values rounded to three decimals; rounding back to bytes is exact.

    cd /tmp && npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/mnist_from_npm.py /tmp/package data/mnist
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

SIDE = 28


def main(pkg: Path, out: Path) -> None:
    samples = []
    for digit in range(10):
        raw = json.loads((pkg / "src" / "digits" / f"{digit}.json").read_text())["data"]
        n = len(raw) // (SIDE * SIDE)
        for k in range(n):
            px = raw[k * SIDE * SIDE:(k + 1) * SIDE * SIDE]
            samples.append((bytes(round(v * 255) for v in px), digit))
    random.Random(20240101).shuffle(samples)
    out.mkdir(parents=True, exist_ok=True)
    n = len(samples)
    with gzip.GzipFile(out / "mnist10k-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 2051, n, SIDE, SIDE))
        for px, _ in samples:
            f.write(px)
    with gzip.GzipFile(out / "mnist10k-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 2049, n))
        f.write(bytes(label for _, label in samples))
    print(f"wrote {n} samples to {out}")


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
