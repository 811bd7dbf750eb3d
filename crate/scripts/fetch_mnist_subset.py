#!/usr/bin/env python3
"""Build an MNIST subset in IDX format from the `mnist` npm package.

The npm package (mnist@1.1.0) ships 10,000 real MNIST digits as JSON with
pixels stored as round(p / 255, 3). Those round-trip exactly to the original
bytes. The digits are split per class: the first 80% of each class go to the
training files, the rest to the test files. Both splits are interleaved with a
fixed-seed shuffle so that file order does not group classes.

Usage:
    scripts/fetch_mnist_subset.py [--package mnist-1.1.0.tgz] [--out data/mnist]

Without --package the tarball is fetched with `npm pack`.
"""

import argparse
import gzip
import io
import json
import random
import struct
import subprocess
import tarfile
import tempfile
from pathlib import Path

TRAIN_FRACTION = 0.8
SHUFFLE_SEED = 20200713


def load_digits(tarball: Path):
    digits = {}
    with tarfile.open(tarball, "r:gz") as tar:
        for d in range(10):
            member = tar.extractfile(f"package/src/digits/{d}.json")
            flat = json.load(member)["data"]
            if len(flat) % 784 != 0:
                raise SystemExit(f"digit {d}: {len(flat)} values is not a multiple of 784")
            images = []
            for k in range(len(flat) // 784):
                px = [int(round(v * 255)) for v in flat[k * 784:(k + 1) * 784]]
                for v, p in zip(flat[k * 784:(k + 1) * 784], px):
                    if abs(round(p / 255, 3) - v) > 1e-9:
                        raise SystemExit(f"digit {d} image {k}: pixel {v} does not round-trip")
                images.append(bytes(px))
            digits[d] = images
    return digits


def write_gz(path: Path, payload: bytes):
    with open(path, "wb") as raw:
        with gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz:
            gz.write(payload)


def write_split(out: Path, prefix: str, samples):
    images = io.BytesIO()
    images.write(struct.pack(">IIII", 0x00000803, len(samples), 28, 28))
    labels = io.BytesIO()
    labels.write(struct.pack(">II", 0x00000801, len(samples)))
    for label, pixels in samples:
        images.write(pixels)
        labels.write(bytes([label]))
    write_gz(out / f"{prefix}-images-idx3-ubyte.gz", images.getvalue())
    write_gz(out / f"{prefix}-labels-idx1-ubyte.gz", labels.getvalue())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--package", type=Path)
    ap.add_argument("--out", type=Path, default=Path("data/mnist"))
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        tarball = args.package
        if tarball is None:
            subprocess.run(["npm", "pack", "mnist@1.1.0", "--pack-destination", tmp],
                           check=True, stdout=subprocess.DEVNULL)
            tarball = Path(tmp) / "mnist-1.1.0.tgz"
        digits = load_digits(tarball)

    train, test = [], []
    for d in range(10):
        cut = int(len(digits[d]) * TRAIN_FRACTION)
        train += [(d, img) for img in digits[d][:cut]]
        test += [(d, img) for img in digits[d][cut:]]
    rng = random.Random(SHUFFLE_SEED)
    rng.shuffle(train)
    rng.shuffle(test)

    args.out.mkdir(parents=True, exist_ok=True)
    write_split(args.out, "train", train)
    write_split(args.out, "t10k", test)
    for d in range(10):
        print(f"digit {d}: {len(digits[d])} images")
    print(f"train {len(train)}  test {len(test)}  -> {args.out}")


if __name__ == "__main__":
    main()
