#!/usr/bin/env python3
"""Write a 5,000-image MNIST subset as IDX files.

The subset ships inside the mlxtend wheel (mlxtend/data/data/mnist_5k.csv.gz,
one row per image: 784 pixel values followed by the label). The wheel is
fetched with `pip download` unless --wheel points at a local copy.

    python3 tools/fetch_mnist_subset.py --out data/mnist5k
"""
import argparse
import glob
import gzip
import os
import struct
import subprocess
import sys
import tempfile
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def find_wheel(explicit):
    if explicit:
        return explicit
    tmp = tempfile.mkdtemp(prefix="mlxtend-")
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps",
                    "--only-binary=:all:", "mlxtend", "-d", tmp], check=True)
    wheels = glob.glob(os.path.join(tmp, "mlxtend-*.whl"))
    if not wheels:
        sys.exit("pip did not produce an mlxtend wheel")
    return wheels[0]


def write_idx(path, dims, payload):
    with open(path, "wb") as f:
        f.write(bytes([0, 0, 0x08, len(dims)]))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(payload)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/mnist5k")
    ap.add_argument("--wheel", default=None)
    args = ap.parse_args()

    with zipfile.ZipFile(find_wheel(args.wheel)) as z:
        text = gzip.decompress(z.read(MEMBER)).decode()

    images = bytearray()
    labels = bytearray()
    rows = 0
    for line in text.splitlines():
        if not line.strip():
            continue
        values = [int(float(v)) for v in line.split(",")]
        if len(values) != 785:
            sys.exit(f"unexpected row width {len(values)}")
        images.extend(values[:784])
        labels.append(values[784])
        rows += 1

    os.makedirs(args.out, exist_ok=True)
    write_idx(os.path.join(args.out, "train-images-idx3-ubyte"), [rows, 28, 28], bytes(images))
    write_idx(os.path.join(args.out, "train-labels-idx1-ubyte"), [rows], bytes(labels))
    print(f"wrote {rows} images to {args.out}")


if __name__ == "__main__":
    main()
