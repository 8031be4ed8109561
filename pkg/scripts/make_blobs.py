"""Generate two-class Gaussian blob CSVs for the evidnet CLI.

Points are drawn in 2D around class means placed on the diagonal, then
pushed through a fixed random linear embedding into d_in dimensions so
the feature-reduction layer has structure to recover. Writes train.csv,
val.csv and test.csv into --out-dir; a fraction of the training labels
can be masked out (written as `?`) for semi-supervised runs.

Usage:
    python3 scripts/make_blobs.py --out-dir data --separation 4 --seed 0
"""

from __future__ import annotations

import argparse
import pathlib

import numpy as np

from evidnet import FeatureDataset, write_csv

CLASS_NAMES = ("positive", "negative")


def make_split(rng, n_per_class, separation, embedding, labeled_fraction=1.0):
    means = np.array([[0.0, 0.0], [separation, separation]])
    pts = np.vstack([rng.standard_normal((n_per_class, 2)) + m for m in means])
    y = np.repeat(np.arange(2), n_per_class)
    order = rng.permutation(len(y))
    pts, y = pts[order], y[order]
    labels = [int(c) for c in y]
    if labeled_fraction < 1.0:
        keep = int(round(labeled_fraction * len(y)))
        chosen = set(rng.choice(len(y), size=keep, replace=False).tolist())
        labels = [lab if i in chosen else None for i, lab in enumerate(labels)]
    return FeatureDataset(features=pts @ embedding, labels=labels,
                          class_names=CLASS_NAMES)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", required=True)
    ap.add_argument("--n-train", type=int, default=100,
                    help="training points per class")
    ap.add_argument("--n-val", type=int, default=50)
    ap.add_argument("--n-test", type=int, default=50)
    ap.add_argument("--separation", type=float, default=4.0,
                    help="offset of the second class mean along the diagonal")
    ap.add_argument("--labeled-fraction", type=float, default=1.0,
                    help="fraction of training rows that keep their label")
    ap.add_argument("--d-in", type=int, default=16,
                    help="embedded feature dimension")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    embedding = np.random.default_rng(1234).standard_normal((2, args.d_in))
    rng = np.random.default_rng(args.seed)
    write_csv(make_split(rng, args.n_train, args.separation, embedding,
                         args.labeled_fraction), out / "train.csv")
    write_csv(make_split(rng, args.n_val, args.separation, embedding),
              out / "val.csv")
    write_csv(make_split(rng, args.n_test, args.separation, embedding),
              out / "test.csv")
    total = 2 * (args.n_train + args.n_val + args.n_test)
    print(f"wrote {total} rows across train/val/test to {out}")


if __name__ == "__main__":
    main()
