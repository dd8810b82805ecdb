"""Write train/valid/test splits sampled from a random logistic Bayesian network."""
import argparse
from pathlib import Path

from sdpc.dataset import save_dataset
from sdpc.synthetic import bn_splits


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--name", default="synthetic")
    p.add_argument("--out-dir", default="data")
    p.add_argument("--vars", type=int, default=16)
    p.add_argument("--sizes", type=int, nargs=3, default=(16181, 2157, 3236), metavar=("TRAIN", "VALID", "TEST"))
    p.add_argument("--max-parents", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = bn_splits(args.vars, tuple(args.sizes), seed=args.seed, max_parents=args.max_parents)
    for split, d in zip(("train", "valid", "test"), splits):
        path = out / f"{args.name}.{split}.data"
        save_dataset(d, path)
        print(f"{path}: {d.num_samples} x {d.num_vars}")


if __name__ == "__main__":
    main()
