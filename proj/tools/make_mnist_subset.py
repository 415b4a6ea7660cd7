#!/usr/bin/env python3
"""Write the 5000-image MNIST subset shipped inside the mlxtend wheel as IDX files.

Usage: make_mnist_subset.py <mlxtend-wheel-or-unpacked-dir> <out-dir>
"""
import gzip
import io
import pathlib
import struct
import sys
import zipfile

import numpy as np


def load_csv_bytes(src: pathlib.Path) -> bytes:
    member = "mlxtend/data/data/mnist_5k.csv.gz"
    if src.is_dir():
        return (src / member).read_bytes()
    with zipfile.ZipFile(src) as zf:
        return zf.read(member)


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__, file=sys.stderr)
        return 2
    raw = load_csv_bytes(pathlib.Path(sys.argv[1]))
    table = np.loadtxt(io.TextIOWrapper(gzip.GzipFile(fileobj=io.BytesIO(raw))), delimiter=",")
    pixels = table[:, :-1].astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)
    n = pixels.shape[0]
    out = pathlib.Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "train-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        f.write(pixels.tobytes())
    with open(out / "train-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(labels.tobytes())
    print(f"wrote {n} images to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
