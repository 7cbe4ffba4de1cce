#!/usr/bin/env python3
"""Generate a synthetic sharp-image corpus for experiments.

Images mix oriented sinusoids, Gaussian blobs, a step edge and sensor
noise, so they carry enough local structure for the naturalness model
to latch onto. Output is 8-bit PGM.
"""

import argparse
from pathlib import Path

import numpy as np

from lightcom.fileio import write_image
from lightcom.source_codec import Image


def synth_image(seed: int, size: int) -> Image:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    acc = np.zeros((size, size))
    for _ in range(6):
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(0.02, 0.2)
        amp = rng.uniform(5, 25)
        acc += amp * np.sin(2 * np.pi * freq *
                            (np.cos(theta) * xx + np.sin(theta) * yy)
                            + rng.uniform(0, 2 * np.pi))
    for _ in range(40):
        cx, cy = rng.uniform(0, size, 2)
        s = rng.uniform(2, 14)
        amp = rng.uniform(-60, 60)
        acc += amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * s * s))
    acc += np.where(xx > rng.uniform(0.3, 0.7) * size, 20.0, -20.0)
    acc += rng.normal(0, 6, acc.shape)
    lo, hi = acc.min(), acc.max()
    samples = np.round((acc - lo) / (hi - lo) * 255).astype(np.int64)
    return Image(width=size, height=size, channels=1, bit_depth=8,
                 samples=samples[:, :, None])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--n", type=int, default=10, help="number of images")
    ap.add_argument("--size", type=int, default=384, help="square side in px")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.n):
        path = out / f"synth_{i:03d}.pgm"
        write_image(synth_image(args.seed + i, args.size), path)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
