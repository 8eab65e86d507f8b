from __future__ import annotations

from .graph import MolecularGraph

DESCRIPTOR_NAMES = (
    "frac_C",
    "frac_N",
    "frac_O",
    "frac_other",
    "frac_aromatic",
    "rings_per_atom",
    "branches_per_atom",
    "heavy_atoms_over_50",
)


def descriptors(g: MolecularGraph) -> tuple[float, ...]:
    """Eight size-normalised counts; see DESCRIPTOR_NAMES.

    A branch is every neighbour beyond the second on an atom, so chains and
    plain rings contribute zero.
    """
    n = len(g.atoms)
    c = nn = o = arom = 0
    for at in g.atoms:
        if at.element == "C":
            c += 1
        elif at.element == "N":
            nn += 1
        elif at.element == "O":
            o += 1
        if at.aromatic:
            arom += 1
    other = n - c - nn - o
    branches = sum(max(0, len(nb) - 2) for nb in g.neighbors)
    return (c / n, nn / n, o / n, other / n, arom / n, g.cycle_rank / n, branches / n, n / 50)
