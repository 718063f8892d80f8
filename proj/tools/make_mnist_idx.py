#!/usr/bin/env python3
"""Convert a CSV digit dump (784 pixel columns + label column) into IDX files.

The default source is the 5000-image MNIST subset bundled with mlxtend
(mlxtend/data/data/mnist_5k.csv.gz). The rows are shuffled with a fixed
seed and split into train/test IDX pairs:

    <out>/train-images-idx3-ubyte  <out>/train-labels-idx1-ubyte
    <out>/test-images-idx3-ubyte   <out>/test-labels-idx1-ubyte
"""
import argparse
import gzip
import os
import random
import struct


def locate_default_csv():
    try:
        import mlxtend.data as d
        return os.path.join(os.path.dirname(d.__file__), "data", "mnist_5k.csv.gz")
    except ImportError:
        return None


def read_rows(path):
    opener = gzip.open if path.endswith(".gz") else open
    rows = []
    with opener(path, "rt") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            vals = [int(float(v)) for v in line.split(",")]
            if len(vals) != 785:
                raise ValueError(f"expected 785 columns, got {len(vals)}")
            rows.append((bytes(vals[:784]), vals[784]))
    return rows


def write_pair(prefix, rows):
    with open(prefix + "-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
        for pixels, _ in rows:
            f.write(pixels)
    with open(prefix + "-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(rows)))
        f.write(bytes(label for _, label in rows))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--csv", default=locate_default_csv())
    ap.add_argument("--out", default="data/mnist5k")
    ap.add_argument("--test", type=int, default=1500)
    ap.add_argument("--seed", type=int, default=20230613)
    args = ap.parse_args()
    if not args.csv:
        ap.error("no --csv given and mlxtend is not installed")

    rows = read_rows(args.csv)
    random.Random(args.seed).shuffle(rows)
    os.makedirs(args.out, exist_ok=True)
    write_pair(os.path.join(args.out, "train"), rows[args.test:])
    write_pair(os.path.join(args.out, "test"), rows[: args.test])
    print(f"wrote {len(rows) - args.test} train / {args.test} test images to {args.out}")


if __name__ == "__main__":
    main()
