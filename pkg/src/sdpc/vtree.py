"""Vtrees: full binary trees with one variable per leaf."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .cltree import ChowLiuTree

__all__ = ["Vtree", "VtreeFormatError", "vtree_from_clt", "validate_vtree", "read_vtree", "write_vtree"]


class VtreeFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Vtree:
    """Node ``i`` is a leaf when ``var[i] >= 0``, otherwise internal with
    children ``left[i]``/``right[i]``. Children precede parents; the last
    node is the root. Variables are 0-based in memory.
    """

    var: tuple[int, ...]
    left: tuple[int, ...]
    right: tuple[int, ...]

    @property
    def root(self) -> int:
        return len(self.var) - 1

    @property
    def num_nodes(self) -> int:
        return len(self.var)

    def is_leaf(self, i: int) -> bool:
        return self.var[i] >= 0

    def variables(self) -> list[int]:
        """Bitmask of the variables below each node."""
        masks = [0] * self.num_nodes
        for i in range(self.num_nodes):
            if self.var[i] >= 0:
                masks[i] = 1 << self.var[i]
            else:
                masks[i] = masks[self.left[i]] | masks[self.right[i]]
        return masks

    def leaf_of(self) -> dict[int, int]:
        return {v: i for i, v in enumerate(self.var) if v >= 0}

    def depth(self) -> int:
        d = [0] * self.num_nodes
        for i in range(self.num_nodes):
            if self.var[i] < 0:
                d[i] = 1 + max(d[self.left[i]], d[self.right[i]])
        return d[self.root]

    def to_nested(self, i: int | None = None):
        """Nested-tuple view, e.g. ``(3, (2, 1))`` for tests and debugging."""
        i = self.root if i is None else i
        if self.var[i] >= 0:
            return self.var[i]
        return (self.to_nested(self.left[i]), self.to_nested(self.right[i]))


class _Builder:
    def __init__(self):
        self.var, self.left, self.right = [], [], []

    def leaf(self, v):
        self.var.append(v)
        self.left.append(-1)
        self.right.append(-1)
        return len(self.var) - 1

    def internal(self, a, b):
        self.var.append(-1)
        self.left.append(a)
        self.right.append(b)
        return len(self.var) - 1

    def build(self):
        return Vtree(tuple(self.var), tuple(self.left), tuple(self.right))


def vtree_from_clt(t: ChowLiuTree) -> Vtree:
    """Variable leaf on the left, the children's vtree on the right; several
    children are chained right-deep in ascending index order."""
    children = [sorted(c) for c in t.children()]
    b = _Builder()
    built: dict[int, int] = {}
    # iterative post-order so deep chains do not hit the recursion limit
    stack = [(t.root, False)]
    while stack:
        v, expanded = stack.pop()
        if not expanded:
            stack.append((v, True))
            stack.extend((c, False) for c in reversed(children[v]))
            continue
        if not children[v]:
            built[v] = b.leaf(v)
            continue
        own = b.leaf(v)
        rest = built[children[v][-1]]
        for c in reversed(children[v][:-1]):
            rest = b.internal(built[c], rest)
        built[v] = b.internal(own, rest)
    return b.build()


def validate_vtree(v: Vtree, num_vars: int | None = None) -> str | None:
    """Return ``None`` when ``v`` is a valid vtree, else the first violation."""
    n = v.num_nodes
    if n == 0:
        return "empty vtree"
    if not (len(v.left) == len(v.right) == n):
        return "malformed node arrays"
    parents = [0] * n
    for i in range(n):
        if v.var[i] >= 0:
            if v.left[i] != -1 or v.right[i] != -1:
                return f"not full binary: leaf {i} has children"
            continue
        kids = [c for c in (v.left[i], v.right[i]) if c >= 0]
        if len(kids) != 2:
            return f"not full binary: internal node {i} has {len(kids)} child(ren)"
        for c in kids:
            if c >= i:
                return f"child {c} of node {i} does not precede its parent"
            parents[c] += 1
    for i in range(n - 1):
        if parents[i] != 1:
            return f"node {i} has {parents[i]} parents"
    if parents[n - 1] != 0:
        return "root has a parent"
    seen: dict[int, int] = {}
    for i, var in enumerate(v.var):
        if var >= 0:
            if var in seen:
                return f"variable multiplicity: variable {var} in leaves {seen[var]} and {i}"
            seen[var] = i
    if num_vars is not None and sorted(seen) != list(range(num_vars)):
        return f"leaves cover {len(seen)} variables, expected {num_vars}"
    return None


def write_vtree(v: Vtree, path) -> None:
    lines = [f"c vtree with {v.num_nodes} nodes", "c L <id> <var> | I <id> <left> <right>; vars are 1-based"]
    for i in range(v.num_nodes):
        if v.var[i] >= 0:
            lines.append(f"L {i} {v.var[i] + 1}")
        else:
            lines.append(f"I {i} {v.left[i]} {v.right[i]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_vtree(path) -> Vtree:
    """Parse a vtree file; ids are remapped to line order."""
    ids: dict[int, int] = {}
    b = _Builder()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        tok = line.split()
        if not tok or tok[0] == "c":
            continue
        try:
            if tok[0] == "L" and len(tok) == 3:
                node = b.leaf(int(tok[2]) - 1)
            elif tok[0] == "I" and len(tok) == 4:
                node = b.internal(ids[int(tok[2])], ids[int(tok[3])])
            else:
                raise VtreeFormatError(f"line {lineno}: unknown or malformed entry {line!r}")
            ids[int(tok[1])] = node
        except (ValueError, KeyError) as exc:
            if isinstance(exc, VtreeFormatError):
                raise
            raise VtreeFormatError(f"line {lineno}: {exc}") from None
    if not b.var:
        raise VtreeFormatError("no vtree nodes")
    return b.build()
