"""Command-line entry points: learn, eval, em, bem, bench-flows, validate."""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .circuit import check_structure, evaluate_classical, read_circuit, write_circuit
from .dataset import Dataset, load_dataset
from .ensemble import EM_GRID, SharedMixture, bem_fit, em_fit, em_grid, normalize_log_params, read_mixture, write_mixture
from .flows import compute_flows, mixture_log_likelihood
from .search import HEURISTICS, SearchConfig, learn_circuit
from .vtree import read_vtree, validate_vtree, write_vtree

log = logging.getLogger("sdpc")

BENCH_COMPONENTS = (1, 2, 5, 10, 20, 50, 100)


def bpd(lls: np.ndarray, num_vars: int) -> float:
    """Bits per dimension of a vector of per-sample log-likelihoods (nats)."""
    return float(-np.sum(lls) / (math.log(2) * len(lls) * num_vars))


def metrics(lls: np.ndarray, num_vars: int) -> dict[str, float]:
    return {"mean_ll": float(np.mean(lls)), "total_ll": float(np.sum(lls)), "bpd": bpd(lls, num_vars)}


def _print_metrics(name: str, m: dict[str, float], out=None) -> None:
    out = out or sys.stdout
    print(f"{name}: mean_ll={m['mean_ll']:.6f} total_ll={m['total_ll']:.6f} bpd={m['bpd']:.6f}", file=out)


def _check_vars(d: Dataset, num_vars: int, path) -> None:
    if d.num_vars != num_vars:
        raise ValueError(f"{path}: dataset has {d.num_vars} variables, circuit has {num_vars}")


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("expected positive integers")
    return vals


# commands ------------------------------------------------------------------------


def cmd_learn(args) -> int:
    train = load_dataset(args.train)
    valid = load_dataset(args.valid) if args.valid else None
    cfg = SearchConfig(
        heuristic=args.heuristic,
        depth_bound=args.depth_bound,
        patience=args.patience,
        max_iters=args.max_iters,
        seed=args.seed,
        pseudocount=args.pseudocount,
        alpha=args.alpha,
        threads=args.threads,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = out.with_name(out.name + ".log.csv")
    with open(log_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "train_ll", "valid_ll", "size", "seconds"])

        def record(entry, circ):
            writer.writerow(
                [entry.iteration, f"{entry.train_ll:.6f}", f"{entry.valid_ll:.6f}", entry.size, f"{entry.seconds:.3f}"]
            )
            if entry.iteration % 50 == 0:
                log.info(
                    "iter %d train %.4f valid %.4f size %d (%.1fs)",
                    entry.iteration, entry.train_ll, entry.valid_ll, entry.size, entry.seconds,
                )

        result = learn_circuit(train, valid, cfg, callback=record)
    write_circuit(result.circuit, out.with_name(out.name + ".psc"))
    write_vtree(result.vtree, out.with_name(out.name + ".vtree"))
    last = result.history[-1]
    print(
        f"learned circuit: {result.circuit.num_edges()} edges, best iteration {result.best_iteration} "
        f"of {last.iteration}, {last.seconds:.1f}s"
    )
    return 0


def _load_model(args) -> SharedMixture:
    return read_mixture(args.circuit, getattr(args, "params", None))


def cmd_eval(args) -> int:
    mix = _load_model(args)
    for path in args.data:
        d = load_dataset(path)
        _check_vars(d, mix.structure.num_vars, path)
        _print_metrics(str(path), metrics(mix.log_likelihood(d), d.num_vars))
    return 0


def _em_common(args, bagged: bool) -> int:
    structure = read_circuit(args.circuit)
    train = load_dataset(args.train)
    _check_vars(train, structure.num_vars, args.train)
    em_kwargs = dict(iters=args.iters, tol=args.tol, seed=args.seed, pseudocount=args.pseudocount)
    bags = args.bags if bagged else None
    if args.grid:
        if not args.valid:
            raise ValueError("--grid needs --valid for model selection")
        valid = load_dataset(args.valid)
        mix, scores = em_grid(structure, train, valid, args.grid, bags=bags, **em_kwargs)
        for k, ll in scores.items():
            print(f"k={k}: valid mean_ll={ll:.6f}")
        print(f"selected k={mix.k if bags is None else mix.k // bags}")
    elif bagged:
        mix = bem_fit(structure, train, args.bags, args.components, **em_kwargs)
    else:
        mix = em_fit(structure, train, args.components, **em_kwargs)
    print(f"mixture: {mix.k} components")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_mixture(mix, out.with_name(out.name + ".psc"), out.with_name(out.name + ".params"))
    for name, path in (("train", args.train), ("valid", args.valid), ("test", args.test)):
        if path:
            d = load_dataset(path)
            _check_vars(d, structure.num_vars, path)
            _print_metrics(name, metrics(mix.log_likelihood(d), d.num_vars))
    return 0


def cmd_em(args) -> int:
    return _em_common(args, bagged=False)


def cmd_bem(args) -> int:
    return _em_common(args, bagged=True)


def random_mixture(structure, k: int, rng, scale: float = 1.0) -> SharedMixture:
    noise = rng.normal(scale=scale, size=(structure.num_params, k))
    params = normalize_log_params(structure, structure.log_theta[:, None] + noise)
    return SharedMixture(structure, params, np.full(k, -np.log(k)))


def bench_flows(structure, d: Dataset, components=BENCH_COMPONENTS, seed: int = 1337, repeats: int = 1):
    """Time shared-flow mixture evaluation against k classical bottom-up passes.

    Yields one row per k: (k, flow_seconds, classical_seconds, speedup, max_abs_diff).
    Each timing is the best of ``repeats`` runs.
    """
    rng = np.random.default_rng(seed)
    for k in components:
        mix = random_mixture(structure, k, rng)
        flow_t = classical_t = math.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            f = compute_flows(structure, d)
            ll_flow = mixture_log_likelihood(structure, mix.log_params, mix.log_weights, f)
            flow_t = min(flow_t, time.perf_counter() - t0)

            t0 = time.perf_counter()
            comp = np.stack(
                [evaluate_classical(structure, d.samples, mix.log_params[:, i]) for i in range(k)], axis=1
            )
            ll_classic = logsumexp(comp + mix.log_weights[None, :], axis=1)
            classical_t = min(classical_t, time.perf_counter() - t0)
        diff = float(np.max(np.abs(ll_flow - ll_classic)))
        yield k, flow_t, classical_t, classical_t / flow_t, diff


def cmd_bench_flows(args) -> int:
    structure = read_circuit(args.circuit)
    d = load_dataset(args.data)
    _check_vars(d, structure.num_vars, args.data)
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(["k", "flow_seconds", "classical_seconds", "speedup", "max_abs_diff"])
        for k, ft, ct, speedup, diff in bench_flows(structure, d, args.components, args.seed, args.repeats):
            writer.writerow([k, f"{ft:.6f}", f"{ct:.6f}", f"{speedup:.3f}", f"{diff:.3e}"])
            fh.flush()
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def cmd_validate(args) -> int:
    vt = read_vtree(args.vtree) if args.vtree else None
    c = read_circuit(args.circuit)
    ok = True
    if vt is not None:
        problem = validate_vtree(vt, c.num_vars)
        print(f"vtree: {'ok' if problem is None else problem}")
        ok = problem is None
    report = check_structure(c, vt)
    print(
        f"smooth={report.smooth} decomposable={report.decomposable} "
        f"deterministic={report.deterministic} structured={report.structured}"
    )
    if report.first_violation:
        node, reason = report.first_violation
        print(f"first violation: node {node}: {reason}")
    ok = ok and report.smooth and report.decomposable and report.deterministic
    if vt is not None:
        ok = ok and report.structured
    return 0 if ok else 1


# parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdpc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=1337)
        sp.add_argument("--threads", type=int, default=1, help="worker threads for flow passes")

    sp = sub.add_parser("learn", help="learn a circuit with greedy splits")
    sp.add_argument("--train", required=True)
    sp.add_argument("--valid")
    sp.add_argument("--out", required=True, help="output prefix for .psc, .vtree and .log.csv")
    sp.add_argument("--heuristic", choices=HEURISTICS, default="eflow-vmi")
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--pseudocount", type=float, default=1.0)
    sp.add_argument("--depth-bound", type=int, default=1)
    sp.add_argument("--patience", type=int, default=100)
    sp.add_argument("--max-iters", type=int, default=10000)
    common(sp)
    sp.set_defaults(func=cmd_learn)

    sp = sub.add_parser("eval", help="report mean LL, total LL and bpd")
    sp.add_argument("--circuit", required=True)
    sp.add_argument("--params", help="mixture parameter file")
    sp.add_argument("--data", required=True, nargs="+")
    common(sp)
    sp.set_defaults(func=cmd_eval)

    for name, func, bagged in (("em", cmd_em, False), ("bem", cmd_bem, True)):
        sp = sub.add_parser(name, help=("bagged " if bagged else "") + "EM over a shared structure")
        sp.add_argument("--circuit", required=True)
        sp.add_argument("--train", required=True)
        sp.add_argument("--valid")
        sp.add_argument("--test")
        sp.add_argument("--components", type=int, default=5)
        sp.add_argument("--grid", type=_int_list, help=f"comma-separated k values, e.g. {','.join(map(str, EM_GRID))}")
        if bagged:
            sp.add_argument("--bags", type=int, default=10)
        sp.add_argument("--iters", type=int, default=100)
        sp.add_argument("--tol", type=float, default=1e-4)
        sp.add_argument("--pseudocount", type=float, default=1.0)
        sp.add_argument("--out", help="output prefix for .psc and .params")
        common(sp)
        sp.set_defaults(func=func)

    sp = sub.add_parser("bench-flows", help="time shared-flow vs classical mixture evaluation")
    sp.add_argument("--circuit", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--components", type=_int_list, default=list(BENCH_COMPONENTS))
    sp.add_argument("--repeats", type=int, default=1)
    sp.add_argument("--out", help="CSV path (default: stdout)")
    common(sp)
    sp.set_defaults(func=cmd_bench_flows)

    sp = sub.add_parser("validate", help="check circuit structure and vtree")
    sp.add_argument("--circuit", required=True)
    sp.add_argument("--vtree")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"sdpc: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
