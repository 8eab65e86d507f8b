"""Token stream to MolecularGraph, plus the total validity check."""

from __future__ import annotations

from dataclasses import dataclass

from .graph import (
    AROMATIC_ORDER,
    Atom,
    Bond,
    MolecularGraph,
    bond_valence,
    implicit_hydrogens,
    max_valence,
    ring_flags,
)
from .tokens import ATOM, BOND, BRANCH_CLOSE, BRANCH_OPEN, RING, ChemError, Token, tokenize

MAX_TOKENS = 100

_BOND_ORDER = {"-": 1, "=": 2, "#": 3}


def parse(tokens: list[Token]) -> MolecularGraph:
    if not tokens:
        raise ChemError("lex", 0, "empty token stream")
    if len(tokens) > MAX_TOKENS:
        raise ChemError("grammar", MAX_TOKENS, f"more than {MAX_TOKENS} tokens")

    elements: list[str] = []
    aromatic: list[bool] = []
    atom_token: list[int] = []
    orders: list[list[float]] = []
    bonds: list[Bond] = []
    pairs: set[tuple[int, int]] = set()
    branch_stack: list[int] = []
    open_rings: dict[str, tuple[int, str | None]] = {}
    prev: int | None = None
    pending: tuple[str, int] | None = None  # (bond symbol, token index)
    last_kind: str | None = None

    def add_bond(a: int, b: int, symbol: str | None, pos: int) -> None:
        key = (a, b) if a < b else (b, a)
        if key in pairs:
            raise ChemError("grammar", pos, "duplicate bond")
        if symbol is None:
            order = AROMATIC_ORDER if aromatic[a] and aromatic[b] else 1
        else:
            order = _BOND_ORDER[symbol]
        pairs.add(key)
        bonds.append(Bond(a, b, order))
        for end in (a, b):
            orders[end].append(order)
            if bond_valence(orders[end]) > max_valence(elements[end]):
                raise ChemError("valence", pos, f"{elements[end]} over valence")

    for pos, tok in enumerate(tokens):
        kind = tok.kind
        if kind == ATOM:
            text = tok.text
            idx = len(elements)
            elements.append(text.capitalize() if text.islower() else text)
            aromatic.append(text.islower())
            atom_token.append(pos)
            orders.append([])
            if prev is not None:
                add_bond(prev, idx, pending[0] if pending else None, pos)
            elif last_kind is not None:
                raise ChemError("grammar", pos, "atom without attachment point")
            pending = None
            prev = idx
        elif kind == BOND:
            if prev is None:
                raise ChemError("grammar", pos, "bond at start")
            if pending is not None:
                raise ChemError("grammar", pos, "consecutive bonds")
            pending = (tok.text, pos)
        elif kind == BRANCH_OPEN:
            if prev is None or pending is not None or last_kind == BRANCH_OPEN:
                raise ChemError("grammar", pos, "misplaced branch")
            branch_stack.append(prev)
        elif kind == BRANCH_CLOSE:
            if not branch_stack:
                raise ChemError("grammar", pos, "unbalanced branch close")
            if pending is not None or last_kind == BRANCH_OPEN:
                raise ChemError("grammar", pos, "empty or dangling branch")
            prev = branch_stack.pop()
        else:  # RING
            before = tokens[pending[1] - 1].kind if pending else last_kind
            if prev is None or before not in (ATOM, RING):
                raise ChemError("grammar", pos, "ring label must follow an atom")
            label = tok.text
            symbol = pending[0] if pending else None
            if label in open_rings:
                other, other_symbol = open_rings.pop(label)
                if other == prev:
                    raise ChemError("grammar", pos, "ring closes on itself")
                if symbol and other_symbol and symbol != other_symbol:
                    raise ChemError("grammar", pos, "conflicting ring bond orders")
                add_bond(other, prev, symbol or other_symbol, pos)
            else:
                open_rings[label] = (prev, symbol)
            pending = None
        last_kind = kind

    end = len(tokens) - 1
    if pending is not None:
        raise ChemError("grammar", pending[1], "dangling bond")
    if branch_stack:
        raise ChemError("grammar", end, "unclosed branch")
    if open_rings:
        raise ChemError("ring-unclosed", end, "ring label never closed")

    n = len(elements)
    ring = ring_flags(n, [(b.a, b.b) for b in bonds])
    atoms = []
    for i in range(n):
        if aromatic[i] and not ring[i]:
            raise ChemError("aromatic-acyclic", atom_token[i], "aromatic atom outside a ring")
        h = implicit_hydrogens(elements[i], bond_valence(orders[i]))
        assert h is not None
        atoms.append(Atom(elements[i], aromatic[i], h))
    return MolecularGraph(tuple(atoms), tuple(bonds), tuple(ring))


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    code: str | None = None
    position: int | None = None

    def __str__(self) -> str:
        return "VALID" if self.valid else f"{self.code} @{self.position}"


def parse_smiles(s: str) -> MolecularGraph:
    return parse(tokenize(s))


def is_valid(s: str) -> ValidationReport:
    """Never raises; failures are described in the report."""
    try:
        parse(tokenize(s))
    except ChemError as exc:
        return ValidationReport(False, exc.code, exc.position)
    return ValidationReport(True)
