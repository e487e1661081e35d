"""Convert the npm `mnist` / `fashion-mnist` JSON payloads into IDX files.

The npm packages store one JSON file per class. `mnist` holds flat arrays of
[0, 1] floats (length n*784); `fashion-mnist` holds nested 784-length rows of
0..255 ints, with a couple of malformed empty rows per file that get filtered.

Usage:
    python tools/make_idx.py --mnist-dir PATH --fashion-dir PATH --out data/

Produces {mnist,fashion}-images-idx3-ubyte.gz and matching label files in the
standard IDX encoding (big-endian magic + dims header, uint8 payload).
"""

import argparse
import gzip
import json
import struct
from pathlib import Path

import numpy as np


def write_idx_images(path: Path, images: np.ndarray) -> None:
    n, h, w = images.shape
    with gzip.open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, h, w))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path: Path, labels: np.ndarray) -> None:
    with gzip.open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def load_mnist_class(path: Path) -> np.ndarray:
    flat = np.asarray(json.loads(path.read_text())["data"], dtype=np.float64)
    imgs = flat.reshape(-1, 28, 28)
    return np.round(imgs * 255.0).astype(np.uint8)


def load_fashion_class(path: Path, limit: int) -> np.ndarray:
    rows = [r for r in json.loads(path.read_text())["data"] if len(r) == 784]
    imgs = np.asarray(rows[:limit], dtype=np.float64).reshape(-1, 28, 28)
    return imgs.astype(np.uint8)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mnist-dir", type=Path, help="npm mnist src/digits directory")
    ap.add_argument("--fashion-dir", type=Path, help="npm fashion-mnist src/clothes directory")
    ap.add_argument("--fashion-per-class", type=int, default=2000)
    ap.add_argument("--out", type=Path, default=Path("data"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    if args.mnist_dir:
        imgs, labs = [], []
        for d in range(10):
            cls = load_mnist_class(args.mnist_dir / f"{d}.json")
            imgs.append(cls)
            labs.append(np.full(len(cls), d, dtype=np.uint8))
        write_idx_images(args.out / "mnist-images-idx3-ubyte.gz", np.concatenate(imgs))
        write_idx_labels(args.out / "mnist-labels-idx1-ubyte.gz", np.concatenate(labs))
        print(f"mnist: {sum(len(i) for i in imgs)} images")

    if args.fashion_dir:
        imgs, labs = [], []
        for d in range(10):
            cls = load_fashion_class(args.fashion_dir / f"{d}.json", args.fashion_per_class)
            imgs.append(cls)
            labs.append(np.full(len(cls), d, dtype=np.uint8))
        write_idx_images(args.out / "fashion-images-idx3-ubyte.gz", np.concatenate(imgs))
        write_idx_labels(args.out / "fashion-labels-idx1-ubyte.gz", np.concatenate(labs))
        print(f"fashion: {sum(len(i) for i in imgs)} images")


if __name__ == "__main__":
    main()
