"""Convert the 5,000-image MNIST sample shipped inside the mlxtend wheel to IDX files.

Usage: python3 scripts/mnist5k_to_idx.py path/to/mlxtend-*.whl data/mnist-5k

Writes train-images-idx3-ubyte / train-labels-idx1-ubyte (4,000 images) and
t10k-images-idx3-ubyte / t10k-labels-idx1-ubyte (1,000 images). The split is a
fixed permutation (numpy seed 0) so the files are reproducible.
"""
import gzip
import io
import os
import struct
import sys
import zipfile

import numpy as np


def write_idx(prefix, images, labels):
    n = len(labels)
    with open(prefix + "-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        f.write(images.astype(np.uint8).tobytes())
    with open(prefix + "-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    wheel, out = sys.argv[1], sys.argv[2]
    os.makedirs(out, exist_ok=True)
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    rows = np.loadtxt(io.StringIO(gzip.decompress(raw).decode()), delimiter=",", dtype=np.int64)
    perm = np.random.RandomState(0).permutation(len(rows))
    rows = rows[perm]
    images, labels = rows[:, :-1], rows[:, -1]
    write_idx(os.path.join(out, "train"), images[:4000], labels[:4000])
    write_idx(os.path.join(out, "t10k"), images[4000:], labels[4000:])


if __name__ == "__main__":
    main()
