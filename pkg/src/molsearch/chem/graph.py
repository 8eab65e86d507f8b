"""Molecular graph with valence and ring bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

from .tokens import ChemError

AROMATIC_ORDER = 1.5

# allowed valences, smallest first
VALENCES: dict[str, tuple[int, ...]] = {
    "B": (3,),
    "C": (4,),
    "N": (3,),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}
AROMATIC_ELEMENTS = frozenset({"C", "N", "O", "S"})


@dataclass(frozen=True, slots=True)
class Atom:
    element: str
    aromatic: bool = False
    implicit_h: int = 0

    @property
    def symbol(self) -> str:
        return self.element.lower() if self.aromatic else self.element


@dataclass(frozen=True, slots=True)
class Bond:
    a: int
    b: int
    order: float  # 1, 2, 3 or AROMATIC_ORDER


def bond_valence(orders) -> int:
    """Valence used by a set of bond orders; aromatic counts 1.5, rounded up."""
    return math.ceil(sum(orders) - 1e-9)


def implicit_hydrogens(element: str, used: int) -> int | None:
    """Hydrogens filling ``used`` up to the next allowed valence, None if over cap."""
    for v in VALENCES[element]:
        if used <= v:
            return v - used
    return None


def max_valence(element: str) -> int:
    return VALENCES[element][-1]


@dataclass(frozen=True)
class MolecularGraph:
    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    in_ring: tuple[bool, ...]

    @classmethod
    def build(cls, atoms, bonds) -> MolecularGraph:
        """Assemble a graph from (element, aromatic) pairs and bonds, checking every invariant.

        ``atoms`` items may be Atom instances (implicit H is recomputed) or
        ``(element, aromatic)`` tuples. ``bonds`` items are Bond or ``(a, b, order)``.
        Positions in raised errors are atom indices.
        """
        specs = [(a.element, a.aromatic) if isinstance(a, Atom) else tuple(a) for a in atoms]
        blist = [b if isinstance(b, Bond) else Bond(*b) for b in bonds]
        n = len(specs)
        if n == 0:
            raise ChemError("grammar", 0, "empty graph")
        orders: list[list[float]] = [[] for _ in range(n)]
        seen = set()
        for bd in blist:
            if bd.a == bd.b or not (0 <= bd.a < n and 0 <= bd.b < n):
                raise ChemError("grammar", max(bd.a, bd.b), "bad bond endpoints")
            key = (min(bd.a, bd.b), max(bd.a, bd.b))
            if key in seen:
                raise ChemError("grammar", key[1], "duplicate bond")
            seen.add(key)
            orders[bd.a].append(bd.order)
            orders[bd.b].append(bd.order)
        out_atoms = []
        for i, (el, arom) in enumerate(specs):
            if arom and el not in AROMATIC_ELEMENTS:
                raise ChemError("grammar", i, f"{el} cannot be aromatic")
            h = implicit_hydrogens(el, bond_valence(orders[i]))
            if h is None:
                raise ChemError("valence", i, f"{el} over valence")
            out_atoms.append(Atom(el, bool(arom), h))
        ring = ring_flags(n, [(b.a, b.b) for b in blist])
        if not _connected(n, blist):
            raise ChemError("grammar", 0, "disconnected graph")
        for i, at in enumerate(out_atoms):
            if at.aromatic and not ring[i]:
                raise ChemError("aromatic-acyclic", i, "aromatic atom outside a ring")
        return cls(tuple(out_atoms), tuple(blist), tuple(ring))

    def __len__(self) -> int:
        return len(self.atoms)

    @cached_property
    def neighbors(self) -> tuple[tuple[tuple[int, float], ...], ...]:
        """Per atom, ``(neighbor, order)`` pairs in bond order."""
        adj: list[list[tuple[int, float]]] = [[] for _ in self.atoms]
        for bd in self.bonds:
            adj[bd.a].append((bd.b, bd.order))
            adj[bd.b].append((bd.a, bd.order))
        return tuple(tuple(x) for x in adj)

    @cached_property
    def bond_lookup(self) -> dict[tuple[int, int], float]:
        d = {}
        for bd in self.bonds:
            d[(bd.a, bd.b)] = bd.order
            d[(bd.b, bd.a)] = bd.order
        return d

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])

    def used_valence(self, i: int) -> int:
        return bond_valence(o for _, o in self.neighbors[i])

    def free_valence(self, i: int) -> int:
        return max_valence(self.atoms[i].element) - self.used_valence(i)

    @property
    def cycle_rank(self) -> int:
        return len(self.bonds) - len(self.atoms) + 1

    def ring_bond(self, a: int, b: int) -> bool:
        """True if the bond a-b lies on a cycle."""
        return (min(a, b), max(a, b)) not in self._bridges

    @cached_property
    def _bridges(self) -> frozenset[tuple[int, int]]:
        return frozenset(find_bridges(len(self.atoms), [(b.a, b.b) for b in self.bonds]))

    def check(self) -> None:
        """Re-assert the full invariant set (used by tests and GA emissions)."""
        again = MolecularGraph.build(self.atoms, self.bonds)
        assert again.atoms == self.atoms and again.in_ring == self.in_ring


def _connected(n: int, bonds) -> bool:
    adj: list[list[int]] = [[] for _ in range(n)]
    for bd in bonds:
        adj[bd.a].append(bd.b)
        adj[bd.b].append(bd.a)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == n


def find_bridges(n: int, edges) -> set[tuple[int, int]]:
    """Bridges of an undirected simple graph as (lo, hi) pairs (iterative Tarjan)."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for idx, (a, b) in enumerate(edges):
        adj[a].append((b, idx))
        adj[b].append((a, idx))
    disc = [-1] * n
    low = [0] * n
    bridges = set()
    timer = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        disc[root] = low[root] = timer
        timer += 1
        stack = [(root, -1, iter(adj[root]))]
        while stack:
            u, parent_edge, it = stack[-1]
            advanced = False
            for v, eidx in it:
                if eidx == parent_edge:
                    continue
                if disc[v] == -1:
                    disc[v] = low[v] = timer
                    timer += 1
                    stack.append((v, eidx, iter(adj[v])))
                    advanced = True
                    break
                low[u] = min(low[u], disc[v])
            if not advanced:
                stack.pop()
                if stack:
                    p = stack[-1][0]
                    low[p] = min(low[p], low[u])
                    if low[u] > disc[p]:
                        bridges.add((min(p, u), max(p, u)))
    return bridges


def ring_flags(n: int, edges) -> list[bool]:
    bridges = find_bridges(n, edges)
    flags = [False] * n
    for a, b in edges:
        if (min(a, b), max(a, b)) not in bridges:
            flags[a] = flags[b] = True
    return flags
