"""SMILES emission and canonical ordering."""

from __future__ import annotations

import sys
from collections.abc import Sequence

from .graph import AROMATIC_ORDER, MolecularGraph

sys.setrecursionlimit(max(sys.getrecursionlimit(), 5000))


def _bond_symbol(g: MolecularGraph, a: int, b: int, order: float) -> str:
    if order == 1:
        return "-" if g.atoms[a].aromatic and g.atoms[b].aromatic else ""
    if order == AROMATIC_ORDER:
        return ""
    return "=" if order == 2 else "#"


def _label(n: int) -> str:
    return str(n) if n < 10 else f"%{n}"


def write_smiles(g: MolecularGraph, ranks: Sequence[int] | None = None) -> str:
    """Emit a SMILES string by depth-first traversal.

    Traversal starts at the lowest-ranked atom and visits neighbours in rank
    order; the default ranking is atom index order.
    """
    n = len(g.atoms)
    if ranks is None:
        ranks = range(n)
    nbrs = [sorted(g.neighbors[i], key=lambda x: ranks[x[0]]) for i in range(n)]
    start = min(range(n), key=lambda i: ranks[i])

    # pass 1: spanning tree and ring-closure bonds
    visited = [False] * n
    children: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    closures: list[list[tuple[int, float]]] = [[] for _ in range(n)]

    def span(u: int, parent: int) -> None:
        visited[u] = True
        for v, order in nbrs[u]:
            if v == parent:
                continue
            if visited[v]:
                # back edge: record once, at the descendant end
                if not any(w == u for w, _ in closures[v]):
                    closures[u].append((v, order))
                    closures[v].append((u, order))
            else:
                children[u].append((v, order))
                span(v, u)

    span(start, -1)
    for lst in closures:
        lst.sort(key=lambda x: ranks[x[0]])

    # pass 2: emission
    out: list[str] = []
    emitted = [False] * n
    open_labels: dict[tuple[int, int], int] = {}
    free: list[int] = []
    next_label = 1

    def emit(u: int) -> None:
        nonlocal next_label
        out.append(g.atoms[u].symbol)
        emitted[u] = True
        for v, order in closures[u]:
            key = (min(u, v), max(u, v))
            if emitted[v]:
                lab = open_labels.pop(key)
                out.append(_label(lab))
                free.append(lab)
                free.sort()
            else:
                if free:
                    lab = free.pop(0)
                else:
                    lab = next_label
                    next_label += 1
                open_labels[key] = lab
                out.append(_bond_symbol(g, u, v, order) + _label(lab))
        kids = children[u]
        for i, (v, order) in enumerate(kids):
            last = i == len(kids) - 1
            if not last:
                out.append("(")
            out.append(_bond_symbol(g, u, v, order))
            emit(v)
            if not last:
                out.append(")")

    emit(start)
    return "".join(out)


def _dense_ranks(keys: list) -> list[int]:
    order = {k: r for r, k in enumerate(sorted(set(keys)))}
    return [order[k] for k in keys]


def initial_invariants(g: MolecularGraph) -> list[int]:
    keys = []
    for i, at in enumerate(g.atoms):
        bond_orders = tuple(sorted(o for _, o in g.neighbors[i]))
        keys.append((at.element, at.aromatic, len(bond_orders), at.implicit_h, g.in_ring[i], bond_orders))
    return _dense_ranks(keys)


def refine(g: MolecularGraph, ranks: list[int]) -> list[int]:
    """Iterate neighbour-rank refinement until the partition stops splitting."""
    nbrs = g.neighbors
    classes = len(set(ranks))
    while True:
        keys = [
            (ranks[i], tuple(sorted((ranks[v], o) for v, o in nbrs[i])))
            for i in range(len(ranks))
        ]
        new = _dense_ranks(keys)
        count = len(set(new))
        if count == classes:
            return new
        ranks, classes = new, count


def _interchangeable_representatives(g: MolecularGraph, members: list[int]) -> list[int]:
    """Drop members whose neighbourhood equals an earlier member's (swap is an automorphism)."""
    seen = set()
    reps = []
    for m in members:
        key = frozenset(g.neighbors[m])
        if key in seen:
            continue
        seen.add(key)
        reps.append(m)
    return reps


def canonical_ranks_candidates(g: MolecularGraph, ranks: list[int]):
    """Yield every discrete ranking reachable by individualize-and-refine."""
    n = len(ranks)
    if len(set(ranks)) == n:
        yield ranks
        return
    counts: dict[int, int] = {}
    for r in ranks:
        counts[r] = counts.get(r, 0) + 1
    target = min(r for r, c in counts.items() if c > 1)
    members = [i for i in range(n) if ranks[i] == target]
    for v in _interchangeable_representatives(g, members):
        split = [2 * r + (1 if (r == target and i != v) else 0) for i, r in enumerate(ranks)]
        yield from canonical_ranks_candidates(g, refine(g, _dense_ranks(split)))


def canonical_form(g: MolecularGraph) -> str:
    """Isomorphism-invariant SMILES string (internal use only)."""
    if len(g.atoms) == 1:
        return g.atoms[0].symbol
    base = refine(g, initial_invariants(g))
    best = None
    for ranks in canonical_ranks_candidates(g, base):
        s = write_smiles(g, ranks)
        if best is None or s < best:
            best = s
    return best
