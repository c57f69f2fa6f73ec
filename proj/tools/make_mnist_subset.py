#!/usr/bin/env python3
"""Build the 10k-sample MNIST subset in IDX format.

Source: the `mnist` npm package (MIT), which ships 10,000 MNIST digits as
per-class JSON files (src/digits/<d>.json, {"data": [784 floats per sample]}).

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_subset.py package/src/digits data/mnist10k

Samples are interleaved with a fixed shuffle (seed 0) so any prefix of the
files is class-balanced.
"""

import argparse
import json
import random
import struct
from pathlib import Path


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir", type=Path)
    ap.add_argument("out_dir", type=Path)
    args = ap.parse_args()

    samples = []
    for digit in range(10):
        values = json.loads((args.digits_dir / f"{digit}.json").read_text())["data"]
        if len(values) % 784:
            raise SystemExit(f"{digit}.json: {len(values)} values is not a multiple of 784")
        for i in range(0, len(values), 784):
            pixels = bytes(max(0, min(255, round(v * 255))) for v in values[i : i + 784])
            samples.append((pixels, digit))

    random.Random(0).shuffle(samples)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    n = len(samples)
    with open(args.out_dir / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        for pixels, _ in samples:
            f.write(pixels)
    with open(args.out_dir / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(bytes(label for _, label in samples))
    print(f"wrote {n} samples to {args.out_dir}")


if __name__ == "__main__":
    main()
