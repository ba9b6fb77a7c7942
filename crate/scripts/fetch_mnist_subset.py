#!/usr/bin/env python3
"""Build a 10k-image MNIST subset in the standard IDX format.

The digits come from the `mnist` npm package, which bundles 10,000 MNIST
samples as JSON (pixel intensities rounded to three decimals). They are
shuffled with a fixed seed and split 8,000 train / 2,000 test, then written
as gzipped IDX files named like the official distribution:

    <out>/train-images-idx3-ubyte.gz   <out>/train-labels-idx1-ubyte.gz
    <out>/t10k-images-idx3-ubyte.gz    <out>/t10k-labels-idx1-ubyte.gz

Usage:
    python3 scripts/fetch_mnist_subset.py [--package DIR] [--out data/mnist-subset]

Without --package the script runs `npm pack mnist` in a temp dir.
"""
import argparse
import gzip
import json
import os
import struct
import subprocess
import tarfile
import tempfile

import numpy as np

N_TRAIN = 8000
SEED = 20230501


def locate_package(path):
    if path:
        return path
    tmp = tempfile.mkdtemp()
    subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True,
                   stdout=subprocess.DEVNULL)
    tgz = [f for f in os.listdir(tmp) if f.endswith(".tgz")][0]
    with tarfile.open(os.path.join(tmp, tgz)) as tar:
        tar.extractall(tmp)
    return os.path.join(tmp, "package")


def write_idx(path, magic, dims, payload):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(payload.tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--package", default=None)
    ap.add_argument("--out", default="data/mnist-subset")
    args = ap.parse_args()

    pkg = locate_package(args.package)
    images, labels = [], []
    for digit in range(10):
        with open(os.path.join(pkg, "src", "digits", f"{digit}.json")) as f:
            raw = np.asarray(json.load(f)["data"], dtype=np.float64)
        raw = raw.reshape(-1, 28 * 28)
        images.append(np.clip(np.rint(raw * 255.0), 0, 255).astype(np.uint8))
        labels.append(np.full(raw.shape[0], digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)

    order = np.random.default_rng(SEED).permutation(len(labels))
    images, labels = images[order], labels[order]

    os.makedirs(args.out, exist_ok=True)
    splits = {"train": slice(0, N_TRAIN), "t10k": slice(N_TRAIN, None)}
    for name, sl in splits.items():
        im, lb = images[sl], labels[sl]
        write_idx(os.path.join(args.out, f"{name}-images-idx3-ubyte.gz"),
                  0x00000803, (len(lb), 28, 28), im)
        write_idx(os.path.join(args.out, f"{name}-labels-idx1-ubyte.gz"),
                  0x00000801, (len(lb),), lb)
        counts = np.bincount(lb, minlength=10)
        print(f"{name}: {len(lb)} images, class counts {counts.tolist()}")


if __name__ == "__main__":
    main()
