"""Graph crossover and mutation over MolecularGraph.

Crossover cuts one acyclic single bond in each parent and joins a fragment
of each at the cut atoms. Mutation is one of: element substitution, atom
append, terminal-atom deletion, bond-order change.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chem import MAX_TOKENS, ChemError, MolecularGraph, is_valid, parse_smiles, tokenize, write_smiles
from .chem.graph import AROMATIC_ORDER, max_valence
from .policy import SequencePolicy
from .reward import sample_valid

ALIPHATIC_POOL = ("C", "N", "O", "S", "F", "Cl", "Br", "P", "I", "B")
AROMATIC_POOL = ("C", "N", "O", "S")
MUTATIONS = ("substitute", "append", "delete", "bond")


@dataclass(frozen=True)
class GaConfig:
    population: int = 32
    crossover_rate: float = 0.8
    mutation_rate: float = 0.3
    max_attempts: int = 20

    def __post_init__(self):
        if self.population < 2 or self.population % 2:
            raise ValueError("population must be an even number >= 2")
        if not (0 <= self.crossover_rate <= 1 and 0 <= self.mutation_rate <= 1):
            raise ValueError("rates must lie in [0, 1]")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def fits_token_cap(g: MolecularGraph) -> bool:
    return len(tokenize(write_smiles(g))) <= MAX_TOKENS


def select_parents(queue_raws, prior: SequencePolicy, population: int, rng, max_tries: int = 50):
    """Half the parents from the queue, half freshly sampled from the prior.

    Returns ``(parents, fresh)``: parent graphs in order (queue picks first)
    and the raw strings of the prior samples, which are new valid samplings.
    With an empty queue every parent comes from the prior.
    """
    if population % 2:
        raise ValueError("population must be even")
    rng = _rng(rng)
    half = population // 2
    queue_raws = list(queue_raws)
    picks: list[str] = []
    if queue_raws:
        replace = len(queue_raws) < half
        idx = rng.choice(len(queue_raws), size=half, replace=replace)
        picks = [queue_raws[i] for i in idx]
    n_fresh = population - len(picks)
    fresh = sample_valid(prior, n_fresh, rng, max_tries=max_tries * n_fresh)
    if not picks and not fresh:
        raise RuntimeError("no parents: queue empty and the prior produced no valid molecule")
    parents = [parse_smiles(s) for s in picks + fresh]
    return parents, fresh


def _fragment(g: MolecularGraph, start: int, cut: tuple[int, int]) -> list[int]:
    """Atoms reachable from ``start`` without crossing the ``cut`` bond."""
    a, b = cut
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v, _ in g.neighbors[u]:
            if (u, v) in ((a, b), (b, a)) or v in seen:
                continue
            seen.add(v)
            stack.append(v)
    return sorted(seen)


def acyclic_single_bonds(g: MolecularGraph) -> list[tuple[int, int]]:
    return [(bd.a, bd.b) for bd in g.bonds if bd.order == 1 and not g.ring_bond(bd.a, bd.b)]


def crossover_with_provenance(a: MolecularGraph, b: MolecularGraph, rng, max_attempts: int = 20):
    """Like :func:`crossover`; also returns ``[(parent, atom_index), ...]`` per child atom."""
    rng = _rng(rng)
    cuts_a, cuts_b = acyclic_single_bonds(a), acyclic_single_bonds(b)
    if not cuts_a or not cuts_b:
        return None
    for _ in range(max_attempts):
        ca = cuts_a[rng.integers(len(cuts_a))]
        cb = cuts_b[rng.integers(len(cuts_b))]
        side_a = int(rng.integers(2))
        side_b = int(rng.integers(2))
        site_a, site_b = ca[side_a], cb[side_b]
        frag_a = _fragment(a, site_a, ca)
        frag_b = _fragment(b, site_b, cb)
        atoms, prov, remap = [], [], {}
        for label, g, frag in (("a", a, frag_a), ("b", b, frag_b)):
            for i in frag:
                remap[label, i] = len(atoms)
                atoms.append((g.atoms[i].element, g.atoms[i].aromatic))
                prov.append((label, i))
        bonds = []
        for label, g, frag in (("a", a, frag_a), ("b", b, frag_b)):
            keep = set(frag)
            for bd in g.bonds:
                if bd.a in keep and bd.b in keep:
                    bonds.append((remap[label, bd.a], remap[label, bd.b], bd.order))
        bonds.append((remap["a", site_a], remap["b", site_b], 1))
        try:
            child = MolecularGraph.build(atoms, bonds)
        except ChemError:
            continue
        if fits_token_cap(child):
            return child, prov
    return None


def crossover(a: MolecularGraph, b: MolecularGraph, rng, max_attempts: int = 20) -> MolecularGraph | None:
    out = crossover_with_provenance(a, b, rng, max_attempts)
    return None if out is None else out[0]


def _edit(g: MolecularGraph, atoms, bonds) -> MolecularGraph | None:
    try:
        child = MolecularGraph.build(atoms, bonds)
    except ChemError:
        return None
    return child if fits_token_cap(child) else None


def _try_mutation(g: MolecularGraph, kind: str, rng: np.random.Generator) -> MolecularGraph | None:
    atoms = [(at.element, at.aromatic) for at in g.atoms]
    bonds = [(bd.a, bd.b, bd.order) for bd in g.bonds]
    n = len(atoms)
    if kind == "substitute":
        i = int(rng.integers(n))
        el, arom = atoms[i]
        pool = AROMATIC_POOL if arom else ALIPHATIC_POOL
        used = g.used_valence(i)
        options = [e for e in pool if e != el and max_valence(e) >= used]
        if not options:
            return None
        atoms[i] = (options[rng.integers(len(options))], arom)
        return _edit(g, atoms, bonds)
    if kind == "append":
        free = [i for i in range(n) if g.free_valence(i) >= 1]
        if not free:
            return None
        i = free[rng.integers(len(free))]
        atoms.append((ALIPHATIC_POOL[rng.integers(len(ALIPHATIC_POOL))], False))
        bonds.append((i, n, 1))
        return _edit(g, atoms, bonds)
    if kind == "delete":
        leaves = [i for i in range(n) if g.degree(i) == 1]
        if n < 2 or not leaves:
            return None
        drop = leaves[rng.integers(len(leaves))]
        keep = [i for i in range(n) if i != drop]
        new_index = {old: new for new, old in enumerate(keep)}
        atoms = [atoms[i] for i in keep]
        bonds = [(new_index[a], new_index[b], o) for a, b, o in bonds if drop not in (a, b)]
        return _edit(g, atoms, bonds)
    # bond-order change on a non-aromatic bond
    idx = [k for k, (_, _, o) in enumerate(bonds) if o != AROMATIC_ORDER]
    if not idx:
        return None
    k = idx[rng.integers(len(idx))]
    a, b, o = bonds[k]
    options = [x for x in (1, 2, 3) if x != o]
    bonds[k] = (a, b, options[rng.integers(len(options))])
    return _edit(g, atoms, bonds)


def mutate(g: MolecularGraph, rng, max_attempts: int = 20, kinds=MUTATIONS) -> MolecularGraph | None:
    """Apply one random mutation, retrying failed draws up to ``max_attempts`` times."""
    rng = _rng(rng)
    for _ in range(max_attempts):
        kind = kinds[rng.integers(len(kinds))]
        child = _try_mutation(g, kind, rng)
        if child is not None:
            return child
    return None


def breed(parents: list[MolecularGraph], cfg: GaConfig, rng) -> list[MolecularGraph]:
    """One child per consecutive parent pair; failed crossovers yield no child."""
    if len(parents) < 2:
        raise ValueError("need at least two parents")
    rng = _rng(rng)
    children = []
    for i in range(0, len(parents) - 1, 2):
        a, b = parents[i], parents[i + 1]
        if rng.random() < cfg.crossover_rate:
            child = crossover(a, b, rng, cfg.max_attempts)
            if child is None:
                continue
        else:
            child = a if rng.random() < 0.5 else b
        if rng.random() < cfg.mutation_rate:
            mutated = mutate(child, rng, cfg.max_attempts)
            if mutated is not None:
                child = mutated
        assert is_valid(write_smiles(child)).valid
        children.append(child)
    return children
