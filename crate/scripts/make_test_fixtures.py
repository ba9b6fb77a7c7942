#!/usr/bin/env python3
"""Writes the small IDX and CIFAR-10 binary fixtures used by the loader tests."""

import gzip
import struct
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "tests" / "fixtures"


def idx(magic, dims, payload):
    return struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims) + bytes(payload)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    # two 3x4 images: pixel (n, r, c) = 40*n + 10*r + c, with the last pixel forced to 255
    pixels = [40 * n + 10 * r + c for n in range(2) for r in range(3) for c in range(4)]
    pixels[-1] = 255
    images = idx(0x00000803, [2, 3, 4], pixels)
    labels = idx(0x00000801, [2], [7, 2])
    (OUT / "tiny-images-idx3-ubyte").write_bytes(images)
    (OUT / "tiny-labels-idx1-ubyte").write_bytes(labels)
    (OUT / "tiny-images-idx3-ubyte.gz").write_bytes(gzip.compress(images, mtime=0))
    (OUT / "tiny-labels-idx1-ubyte.gz").write_bytes(gzip.compress(labels, mtime=0))

    # one CIFAR record: label 3, channel c pixel i = (i + 85*c) % 256
    record = bytes([3]) + bytes((i + 85 * c) % 256 for c in range(3) for i in range(1024))
    (OUT / "one_record.bin").write_bytes(record)


if __name__ == "__main__":
    main()
