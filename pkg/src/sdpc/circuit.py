"""Probabilistic circuits over binary variables.

A :class:`Circuit` is an array of nodes in topological order (children before
parents, root last). Literal nodes are indicators, products have exactly two
children, and sum nodes carry log-weights on their outgoing edges. Every sum
edge owns one entry of the flat parameter vector ``log_theta``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .cltree import ChowLiuTree
from .vtree import Vtree

LITERAL, PRODUCT, SUM = 0, 1, 2
_TAG = {LITERAL: "L", PRODUCT: "P", SUM: "S"}

__all__ = [
    "LITERAL",
    "PRODUCT",
    "SUM",
    "Circuit",
    "CircuitBuilder",
    "CircuitFormatError",
    "StructureReport",
    "compile_clt",
    "evaluate_classical",
    "check_structure",
    "write_circuit",
    "read_circuit",
    "format_circuit",
]


class CircuitFormatError(ValueError):
    pass


class Circuit:
    """Immutable-by-convention node array. Structure edits build a new circuit.

    ``literal[i]`` is ``+(v+1)`` / ``-(v+1)`` for the indicator of variable
    ``v`` being 1 / 0, and 0 for non-literal nodes.
    """

    def __init__(self, kind, literal, children, vtree, log_theta, num_vars: int):
        self.kind = list(kind)
        self.literal = list(literal)
        self.children = [tuple(c) for c in children]
        self.vtree = list(vtree)
        self.num_vars = int(num_vars)
        offsets = np.full(len(self.kind), -1, dtype=np.int64)
        n_params = 0
        for i, k in enumerate(self.kind):
            if k == SUM:
                offsets[i] = n_params
                n_params += len(self.children[i])
        self.param_offset = offsets
        log_theta = np.array(log_theta, dtype=np.float64)
        if log_theta.shape != (n_params,):
            raise ValueError(f"expected {n_params} parameters, got {log_theta.shape}")
        log_theta.setflags(write=False)
        self.log_theta = log_theta

    # basic shape ---------------------------------------------------------
    @property
    def num_nodes(self) -> int:
        return len(self.kind)

    @property
    def num_params(self) -> int:
        return self.log_theta.shape[0]

    @property
    def root(self) -> int:
        return self.num_nodes - 1

    def num_edges(self) -> int:
        return sum(len(c) for c in self.children)

    def with_params(self, log_theta) -> "Circuit":
        out = Circuit.__new__(Circuit)
        out.__dict__.update({k: v for k, v in self.__dict__.items() if k != "log_theta"})
        log_theta = np.array(log_theta, dtype=np.float64)
        if log_theta.shape != self.log_theta.shape:
            raise ValueError("parameter vector shape mismatch")
        log_theta.setflags(write=False)
        out.log_theta = log_theta
        return out

    def params_of(self, node: int) -> np.ndarray:
        o = self.param_offset[node]
        return self.log_theta[o : o + len(self.children[node])]

    # derived structure ----------------------------------------------------
    @cached_property
    def edge_parent(self) -> np.ndarray:
        """Sum node owning each parameter."""
        out = np.empty(self.num_params, dtype=np.int64)
        for i in np.flatnonzero(self.param_offset >= 0):
            o = self.param_offset[i]
            out[o : o + len(self.children[i])] = i
        return out

    @cached_property
    def edge_child(self) -> np.ndarray:
        """Child node reached by each parameter's edge."""
        out = np.empty(self.num_params, dtype=np.int64)
        for i in np.flatnonzero(self.param_offset >= 0):
            o = self.param_offset[i]
            out[o : o + len(self.children[i])] = self.children[i]
        return out

    @cached_property
    def sum_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.param_offset >= 0)

    @cached_property
    def scopes(self) -> list[int]:
        """Variable bitmask per node."""
        sc = [0] * self.num_nodes
        for i, k in enumerate(self.kind):
            if k == LITERAL:
                sc[i] = 1 << (abs(self.literal[i]) - 1)
            else:
                acc = 0
                for c in self.children[i]:
                    acc |= sc[c]
                sc[i] = acc
        return sc

    @cached_property
    def implied_literals(self) -> list[tuple[int, int]]:
        """(positive, negative) variable bitmasks every support point of a node satisfies.

        Literals imply themselves, products the union of their children,
        sums the intersection.
        """
        out = [(0, 0)] * self.num_nodes
        for i, k in enumerate(self.kind):
            if k == LITERAL:
                bit = 1 << (abs(self.literal[i]) - 1)
                out[i] = (bit, 0) if self.literal[i] > 0 else (0, bit)
            elif k == PRODUCT:
                pos = neg = 0
                for c in self.children[i]:
                    pos |= out[c][0]
                    neg |= out[c][1]
                out[i] = (pos, neg)
            else:
                pos = neg = -1
                for c in self.children[i]:
                    pos &= out[c][0]
                    neg &= out[c][1]
                out[i] = (max(pos, 0), max(neg, 0)) if self.children[i] else (0, 0)
        return out

    def parameter_table(self) -> list[tuple[int, int, float]]:
        """(sum node, child, log-weight) for every parameter, in index order."""
        return list(zip(self.edge_parent.tolist(), self.edge_child.tolist(), self.log_theta.tolist()))

    def __repr__(self):
        return f"Circuit(nodes={self.num_nodes}, params={self.num_params}, vars={self.num_vars})"


class CircuitBuilder:
    """Append-only node list that produces a :class:`Circuit`."""

    def __init__(self, num_vars: int):
        self.num_vars = num_vars
        self.kind, self.literal, self.children, self.vtree, self.weights = [], [], [], [], []

    def _add(self, kind, literal, children, vtree, weights=()):
        self.kind.append(kind)
        self.literal.append(literal)
        self.children.append(tuple(children))
        self.vtree.append(vtree)
        self.weights.append(list(weights))
        return len(self.kind) - 1

    def literal_node(self, var: int, positive: bool, vtree: int) -> int:
        return self._add(LITERAL, (var + 1) if positive else -(var + 1), (), vtree)

    def product(self, left: int, right: int, vtree: int) -> int:
        return self._add(PRODUCT, 0, (left, right), vtree)

    def sum(self, children, log_weights, vtree: int) -> int:
        if len(children) != len(log_weights) or not children:
            raise ValueError("sum node needs one log-weight per child and at least one child")
        return self._add(SUM, 0, children, vtree, log_weights)

    def build(self) -> Circuit:
        log_theta = [w for ws in self.weights for w in ws]
        return Circuit(self.kind, self.literal, self.children, self.vtree, log_theta, self.num_vars)


def _log(p):
    with np.errstate(divide="ignore"):
        return float(np.log(p))


def compile_clt(t: ChowLiuTree, v: Vtree) -> Circuit:
    """Compile a CLT into a smooth, deterministic circuit normalized for ``v``.

    For each variable with children, the two products ``[X=1] x sub(X=1)`` and
    ``[X=0] x sub(X=0)`` are built once and shared by the sum nodes for both
    parent values, which keeps the circuit linear in the number of variables.
    """
    m = t.num_vars
    leaf = v.leaf_of()
    if sorted(leaf) != list(range(m)):
        raise ValueError(f"vtree mismatch: leaves cover {sorted(leaf)}, expected variables 0..{m - 1}")
    vparent = {}
    for i in range(v.num_nodes):
        if not v.is_leaf(i):
            vparent[v.left[i]] = i
            vparent[v.right[i]] = i
    vvars = v.variables()
    children = [sorted(c) for c in t.children()]

    def home(var):
        # vtree node whose variables are exactly the CLT subtree of var
        return vparent[leaf[var]] if children[var] else leaf[var]

    b = CircuitBuilder(m)
    lit = {}
    for var in range(m):
        lit[var, 1] = b.literal_node(var, True, leaf[var])
        lit[var, 0] = b.literal_node(var, False, leaf[var])

    def expect(node_vt, left_mask, right_mask, var):
        if v.is_leaf(node_vt) or vvars[v.left[node_vt]] != left_mask or vvars[v.right[node_vt]] != right_mask:
            raise ValueError(
                f"vtree mismatch at variable {var}: no vtree node splits scope "
                f"{_mask_vars(left_mask | right_mask)} into {_mask_vars(left_mask)} | {_mask_vars(right_mask)}"
            )

    subtree = [0] * m
    sums: dict[tuple[int, int], int] = {}
    order = _post_order(t.root, children)
    try:
        for var in order:
            subtree[var] = (1 << var) | _or(subtree[c] for c in children[var])
            if children[var]:
                prods = {}
                for val in (1, 0):
                    # right-deep chain over the children, ascending index order
                    kids = children[var]
                    rest = sums[kids[-1], val]
                    rest_mask = subtree[kids[-1]]
                    for c in reversed(kids[:-1]):
                        node_vt = vparent[home(c)]
                        expect(node_vt, subtree[c], rest_mask, c)
                        rest = b.product(sums[c, val], rest, node_vt)
                        rest_mask |= subtree[c]
                    node_vt = home(var)
                    expect(node_vt, 1 << var, rest_mask, var)
                    prods[val] = b.product(lit[var, val], rest, node_vt)
                branches = (prods[1], prods[0])
            else:
                branches = (lit[var, 1], lit[var, 0])
            parent_vals = (0, 1) if t.parent[var] >= 0 else (0,)
            for pv in parent_vals:
                p1 = t.cpt[var, pv]
                sums[var, pv] = b.sum(branches, (_log(p1), _log(1.0 - p1)), home(var))
    except KeyError as exc:
        raise ValueError(f"vtree mismatch: vtree node {exc.args[0]} has no parent") from None
    if vvars[home(t.root)] != (1 << m) - 1:
        raise ValueError("vtree mismatch: root scope does not cover all variables")
    return b.build()


def _or(it):
    acc = 0
    for x in it:
        acc |= x
    return acc


def _mask_vars(mask: int) -> list[int]:
    out, i = [], 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def _post_order(root, children):
    out, stack = [], [(root, False)]
    while stack:
        v, done = stack.pop()
        if done:
            out.append(v)
        else:
            stack.append((v, True))
            stack.extend((c, False) for c in children[v])
    return out


def evaluate_classical(c: Circuit, x, log_theta=None, block_size: int = 8192) -> np.ndarray:
    """Bottom-up log-space evaluation of complete assignments.

    ``x`` may be one assignment or a matrix of them; ``log_theta`` optionally
    overrides the circuit's parameters (same structure). Zero probability
    yields ``-inf``.
    """
    x = np.asarray(x)
    single = x.ndim == 1
    x = np.atleast_2d(x).astype(np.bool_)
    if x.shape[1] != c.num_vars:
        raise ValueError(f"assignment has {x.shape[1]} variables, circuit has {c.num_vars}")
    theta = c.log_theta if log_theta is None else np.asarray(log_theta, dtype=np.float64)
    out = np.empty(x.shape[0])
    for start in range(0, x.shape[0], block_size):
        out[start : start + block_size] = _evaluate_block(c, x[start : start + block_size], theta)
    return out[0] if single else out


def _evaluate_block(c: Circuit, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    zero = np.zeros(n)
    neg_inf = np.full(n, -np.inf)
    val = [None] * c.num_nodes
    kind, children, literal, offset = c.kind, c.children, c.literal, c.param_offset
    with np.errstate(invalid="ignore"):
        for i in range(c.num_nodes):
            k = kind[i]
            if k == LITERAL:
                lit = literal[i]
                col = x[:, abs(lit) - 1]
                val[i] = np.where(col if lit > 0 else ~col, zero, neg_inf)
            elif k == PRODUCT:
                a, b = children[i]
                val[i] = val[a] + val[b]
            else:
                ch = children[i]
                o = offset[i]
                if len(ch) == 1:
                    val[i] = val[ch[0]] + theta[o]
                elif len(ch) == 2:
                    val[i] = np.logaddexp(val[ch[0]] + theta[o], val[ch[1]] + theta[o + 1])
                else:
                    stacked = np.stack([val[ch[j]] + theta[o + j] for j in range(len(ch))])
                    val[i] = logsumexp(stacked, axis=0)
    return val[c.root]


@dataclass(frozen=True)
class StructureReport:
    smooth: bool
    decomposable: bool
    deterministic: bool
    structured: bool
    first_violation: tuple[int, str] | None = None

    @property
    def ok(self) -> bool:
        return self.smooth and self.decomposable and self.deterministic and self.structured


def check_structure(c: Circuit, v: Vtree | None = None) -> StructureReport:
    """Check smoothness, decomposability, structural determinism, and (given a
    vtree) that every product splits its scope like its vtree node.

    Determinism is checked structurally: every pair of children of a sum must
    imply complementary literals of some variable.
    """
    flags = {"smooth": True, "decomposable": True, "deterministic": True, "structured": v is not None}
    first = None

    def fail(flag, node, reason):
        nonlocal first
        flags[flag] = False
        if first is None:
            first = (node, reason)

    scopes = c.scopes
    lits = c.implied_literals
    vvars = v.variables() if v is not None else None
    for i, k in enumerate(c.kind):
        ch = c.children[i]
        if k == PRODUCT:
            a, b = ch
            if scopes[a] & scopes[b]:
                fail("decomposable", i, "product children share variables")
            if v is not None:
                vt = c.vtree[i]
                if not (0 <= vt < v.num_nodes) or v.is_leaf(vt):
                    fail("structured", i, f"product annotated with non-internal vtree node {vt}")
                elif scopes[a] != vvars[v.left[vt]] or scopes[b] != vvars[v.right[vt]]:
                    fail("structured", i, f"product scope split does not match vtree node {vt}")
        elif k == SUM:
            if any(scopes[x] != scopes[ch[0]] for x in ch[1:]):
                fail("smooth", i, "sum children have different scopes")
            for p in range(len(ch)):
                pa, na = lits[ch[p]]
                for q in range(p + 1, len(ch)):
                    pb, nb = lits[ch[q]]
                    if not ((pa & nb) | (na & pb)):
                        fail("deterministic", i, f"children {ch[p]} and {ch[q]} are not conditioned apart")
                        break
                else:
                    continue
                break
    if flags["structured"] and not flags["decomposable"]:
        flags["structured"] = False
    return StructureReport(first_violation=first, **flags)


# text format ----------------------------------------------------------------


def format_circuit(c: Circuit) -> str:
    lines = [
        f"c probabilistic circuit: {c.num_nodes} nodes, {c.num_params} parameters, {c.num_vars} variables",
        "c L <id> <vtree> <+-var> | P <id> <vtree> <left> <right> | S <id> <vtree> <k> (<child> <logw>)*k",
    ]
    for i, k in enumerate(c.kind):
        if k == LITERAL:
            lines.append(f"L {i} {c.vtree[i]} {c.literal[i]}")
        elif k == PRODUCT:
            a, b = c.children[i]
            lines.append(f"P {i} {c.vtree[i]} {a} {b}")
        else:
            parts = [f"S {i} {c.vtree[i]} {len(c.children[i])}"]
            for ch, w in zip(c.children[i], c.params_of(i)):
                parts.append(f"{ch} {w:.17g}")
            lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def write_circuit(c: Circuit, path) -> None:
    Path(path).write_text(format_circuit(c), encoding="utf-8")


def read_circuit(path, num_vars: int | None = None) -> Circuit:
    """Parse the text format; node ids are remapped to line order."""
    ids: dict[int, int] = {}
    kind, literal, children, vtree, weights = [], [], [], [], []
    max_var = 0
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        tok = line.split()
        if not tok or tok[0] == "c":
            continue
        try:
            tag = tok[0]
            if len(tok) < 3:
                raise CircuitFormatError(f"line {lineno}: unknown or malformed node {line!r}")
            node_id, node_vt = int(tok[1]), int(tok[2])
            if tag == "L" and len(tok) == 4:
                lit = int(tok[3])
                if lit == 0:
                    raise CircuitFormatError(f"line {lineno}: literal 0 is not a variable")
                max_var = max(max_var, abs(lit))
                entry = (LITERAL, lit, (), [])
            elif tag == "P" and len(tok) == 5:
                entry = (PRODUCT, 0, (ids[int(tok[3])], ids[int(tok[4])]), [])
            elif tag == "S" and len(tok) >= 4:
                k = int(tok[3])
                if k < 1 or len(tok) != 4 + 2 * k:
                    raise CircuitFormatError(f"line {lineno}: sum node declares {k} children")
                pairs = tok[4:]
                ch = tuple(ids[int(pairs[2 * j])] for j in range(k))
                ws = [float(pairs[2 * j + 1]) for j in range(k)]
                entry = (SUM, 0, ch, ws)
            else:
                raise CircuitFormatError(f"line {lineno}: unknown or malformed node {line!r}")
        except KeyError as exc:
            raise CircuitFormatError(f"line {lineno}: reference to undefined node {exc.args[0]}") from None
        except ValueError as exc:
            if isinstance(exc, CircuitFormatError):
                raise
            raise CircuitFormatError(f"line {lineno}: {exc}") from None
        ids[node_id] = len(kind)
        kind.append(entry[0])
        literal.append(entry[1])
        children.append(entry[2])
        vtree.append(node_vt)
        weights.append(entry[3])
    if not kind:
        raise CircuitFormatError("no circuit nodes")
    log_theta = [w for ws in weights for w in ws]
    return Circuit(kind, literal, children, vtree, log_theta, num_vars or max_var)
