"""Convert the digits bundled in the npm `mnist` package into gzipped IDX files.

The package ships ~1,000 genuine MNIST digits per class as JSON arrays of
pixel intensities in [0, 1] rounded to three decimals. This script restores
the byte values, splits each class 80/20 into train/test, interleaves the
classes with a fixed seed and writes the four standard IDX files.

usage: python3 scripts/mnist_sample_from_npm.py PATH/TO/package OUT_DIR
"""
import gzip
import json
import os
import random
import struct
import sys

SIDE = 28
PIXELS = SIDE * SIDE


def write_images(path, images):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), SIDE, SIDE))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    pkg, out = sys.argv[1], sys.argv[2]
    train, test = [], []
    for digit in range(10):
        with open(os.path.join(pkg, "src", "digits", f"{digit}.json")) as f:
            raw = json.load(f)["data"]
        count = len(raw) // PIXELS
        samples = []
        for k in range(count):
            px = raw[k * PIXELS:(k + 1) * PIXELS]
            samples.append(([min(255, max(0, round(v * 255))) for v in px], digit))
        cut = (count * 4) // 5
        train.extend(samples[:cut])
        test.extend(samples[cut:])
    rng = random.Random(20191101)
    rng.shuffle(train)
    rng.shuffle(test)
    os.makedirs(out, exist_ok=True)
    for name, split in (("train", train), ("t10k", test)):
        write_images(os.path.join(out, f"{name}-images-idx3-ubyte.gz"), [s[0] for s in split])
        write_labels(os.path.join(out, f"{name}-labels-idx1-ubyte.gz"), [s[1] for s in split])
    print(f"train={len(train)} test={len(test)}")


if __name__ == "__main__":
    main()
