"""End-to-end run on one Twenty-Datasets benchmark: learn, tree-only baseline,
EM over a grid of k, flow benchmark. Prints a compact report."""
import argparse
import time

import numpy as np

from sdpc.cli import bench_flows, bpd
from sdpc.dataset import load_splits
from sdpc.ensemble import EM_GRID, em_grid
from sdpc.flows import compute_flows, log_likelihood
from sdpc.search import SearchConfig, learn_circuit


def lls(c, d):
    return log_likelihood(c, compute_flows(c, d))[0]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--data-dir", default="data")
    p.add_argument("--name", default="nltcs")
    p.add_argument("--seed", type=int, default=1337)
    p.add_argument("--skip-em", action="store_true")
    args = p.parse_args()

    train, valid, test = load_splits(args.data_dir, args.name)
    m = train.num_vars
    t0 = time.perf_counter()
    res = learn_circuit(train, valid, SearchConfig(seed=args.seed))
    secs = time.perf_counter() - t0
    c = res.circuit
    tree = learn_circuit(train, valid, SearchConfig(max_iters=0)).circuit
    single = lls(c, test)
    print(f"{args.name}: m={m}, |train|={train.num_samples}")
    print(f"learned: {c.num_edges()} edges, best iteration {res.best_iteration}, {secs:.1f}s")
    print(f"  test mean LL {single.mean():.4f}  bpd {bpd(single, m):.4f}")
    tl = lls(tree, test)
    print(f"tree only: test mean LL {tl.mean():.4f}  valid {lls(tree, valid).mean():.4f} "
          f"vs learned valid {lls(c, valid).mean():.4f}")
    if not args.skip_em:
        mix, scores = em_grid(c, train, valid, EM_GRID, seed=args.seed)
        print("EM valid LL by k: " + ", ".join(f"{k}:{v:.4f}" for k, v in scores.items()))
        print(f"  selected k={mix.k}: test mean LL {np.mean(mix.log_likelihood(test)):.4f}")
    for k, ft, ct, speedup, _ in bench_flows(c, test, (1, 10, 50), repeats=3):
        print(f"flows k={k}: {ft:.4f}s vs classical {ct:.4f}s, speedup {speedup:.1f}x")


if __name__ == "__main__":
    main()
