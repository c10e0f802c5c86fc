"""Convert mlxtend's mnist_5k.csv.gz (784 pixels + label per row) into IDX files."""

import argparse
import gzip
import struct
from pathlib import Path


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv_gz", type=Path)
    ap.add_argument("out_dir", type=Path)
    args = ap.parse_args()

    with gzip.open(args.csv_gz, "rt") as f:
        rows = [line.strip().split(",") for line in f if line.strip()]
    pixels = bytearray()
    labels = bytearray()
    for row in rows:
        if len(row) != 785:
            raise SystemExit(f"expected 785 columns, got {len(row)}")
        pixels.extend(int(v) for v in row[:784])
        labels.append(int(row[784]))

    args.out_dir.mkdir(parents=True, exist_ok=True)
    n = len(rows)
    (args.out_dir / "images-idx3-ubyte").write_bytes(struct.pack(">IIII", 0x803, n, 28, 28) + pixels)
    (args.out_dir / "labels-idx1-ubyte").write_bytes(struct.pack(">II", 0x801, n) + labels)
    print(f"wrote {n} images to {args.out_dir}")


if __name__ == "__main__":
    main()
