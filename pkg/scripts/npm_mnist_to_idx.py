"""Convert the digits bundled in the npm ``mnist`` package to IDX files.

The npm package (``npm pack mnist``) ships 10,000 MNIST digits as
``src/digits/<d>.json``, each holding a flat list of 28x28 pixels already
divided by 255 and rounded to three decimals. Rounding ``v * 255`` recovers
the original bytes exactly (the rounding error is at most 0.1275).

    python scripts/npm_mnist_to_idx.py path/to/package data/mnist10k
"""

import argparse
import json
from pathlib import Path

import numpy as np

from foxtsage.datasets import write_idx


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("package_dir")
    ap.add_argument("out_dir")
    args = ap.parse_args()

    images, labels = [], []
    for digit in range(10):
        raw = json.loads((Path(args.package_dir) / "src" / "digits" / f"{digit}.json").read_text())
        px = np.asarray(raw["data"], dtype=np.float64)
        if px.size % 784:
            raise SystemExit(f"digit {digit}: {px.size} values is not a multiple of 784")
        px = np.rint(px * 255.0)
        assert px.min() >= 0 and px.max() <= 255
        imgs = px.astype(np.uint8).reshape(-1, 28, 28)
        images.append(imgs)
        labels.append(np.full(len(imgs), digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(images, labels, out / "mnist10k-images-idx3-ubyte.gz",
              out / "mnist10k-labels-idx1-ubyte.gz", compress=True)
    print(f"wrote {len(labels)} images to {out}")


if __name__ == "__main__":
    main()
