#!/usr/bin/env python3
"""Convert a CSV digit sample (784 pixel columns then the label) into MNIST IDX files.

The CSV may be plain, gzip-compressed, or read from inside a zip/wheel archive
with --member. Every --test-every'th row goes to the t10k files and the rest
to the train files, so class-sorted sources still yield balanced splits. Each
split is then shuffled with a fixed seed so any contiguous slice stays balanced.
"""
import argparse
import csv
import gzip
import io
import pathlib
import random
import struct
import zipfile


def read_rows(path, member):
    if member:
        with zipfile.ZipFile(path) as zf:
            raw = zf.read(member)
    else:
        raw = pathlib.Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    rows = []
    for rec in csv.reader(io.StringIO(raw.decode("ascii"))):
        if not rec:
            continue
        values = [int(float(v)) for v in rec]
        if len(values) != 785:
            raise SystemExit(f"expected 785 columns, got {len(values)}")
        rows.append((bytes(values[:784]), values[784]))
    return rows


def write_idx(out, prefix, rows):
    with open(out / f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(rows), 28, 28))
        for px, _ in rows:
            f.write(px)
    with open(out / f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(rows)))
        f.write(bytes(label for _, label in rows))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("source", help="CSV file or archive containing it")
    ap.add_argument("--member", default=None, help="path of the CSV inside a zip/wheel archive")
    ap.add_argument("--out", default="data/mnist", help="output directory")
    ap.add_argument("--test-every", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rows = read_rows(args.source, args.member)
    if args.test_every < 2:
        raise SystemExit("--test-every must be at least 2")
    test = [r for i, r in enumerate(rows) if i % args.test_every == args.test_every - 1]
    train = [r for i, r in enumerate(rows) if i % args.test_every != args.test_every - 1]
    rng = random.Random(args.seed)
    rng.shuffle(train)
    rng.shuffle(test)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out, "train", train)
    write_idx(out, "t10k", test)
    print(f"wrote {len(train)} train and {len(test)} test digits to {out}")


if __name__ == "__main__":
    main()
