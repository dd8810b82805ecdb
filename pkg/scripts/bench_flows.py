"""Shared-flow mixture evaluation vs k classical passes on a learned circuit.

Learns a circuit on the training split (or loads ``--circuit``), then times
mixture log-likelihood on the test split for each k.
"""
import argparse
import csv
import sys

from sdpc.circuit import read_circuit
from sdpc.cli import BENCH_COMPONENTS, bench_flows
from sdpc.dataset import load_splits
from sdpc.search import SearchConfig, learn_circuit


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--data-dir", default="data")
    p.add_argument("--name", required=True)
    p.add_argument("--circuit", help="use this circuit instead of learning one")
    p.add_argument("--max-iters", type=int, default=10000)
    p.add_argument("--components", type=int, nargs="+", default=list(BENCH_COMPONENTS))
    p.add_argument("--repeats", type=int, default=3)
    args = p.parse_args()

    train, valid, test = load_splits(args.data_dir, args.name)
    if args.circuit:
        c = read_circuit(args.circuit)
    else:
        c = learn_circuit(train, valid, SearchConfig(max_iters=args.max_iters)).circuit
    print(f"circuit: {c.num_nodes} nodes, {c.num_params} parameters", file=sys.stderr)
    w = csv.writer(sys.stdout)
    w.writerow(["k", "flow_seconds", "classical_seconds", "speedup", "max_abs_diff"])
    for k, ft, ct, speedup, diff in bench_flows(c, test, args.components, repeats=args.repeats):
        w.writerow([k, f"{ft:.5f}", f"{ct:.5f}", f"{speedup:.2f}", f"{diff:.2e}"])
        sys.stdout.flush()


if __name__ == "__main__":
    main()
