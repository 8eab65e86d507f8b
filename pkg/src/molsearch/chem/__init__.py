"""SMILES handling for the supported organic subset."""

from .canon import canonical_form, write_smiles
from .descriptors import DESCRIPTOR_NAMES, descriptors
from .graph import AROMATIC_ORDER, Atom, Bond, MolecularGraph
from .parser import MAX_TOKENS, ValidationReport, is_valid, parse, parse_smiles
from .tokens import ChemError, Token, tokenize

__all__ = [
    "AROMATIC_ORDER",
    "Atom",
    "Bond",
    "ChemError",
    "DESCRIPTOR_NAMES",
    "MAX_TOKENS",
    "MolecularGraph",
    "Token",
    "ValidationReport",
    "canonical_form",
    "descriptors",
    "is_valid",
    "parse",
    "parse_smiles",
    "read_smiles_file",
    "tokenize",
    "write_smiles",
]


def read_smiles_file(path) -> list[str]:
    """Lines of a SMILES file, skipping blanks and '#' comments."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                out.append(line)
    return out
