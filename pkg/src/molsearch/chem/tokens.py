"""SMILES lexer for the supported organic subset."""

from __future__ import annotations

from dataclasses import dataclass

ATOM = "atom"
BOND = "bond"
BRANCH_OPEN = "branch-open"
BRANCH_CLOSE = "branch-close"
RING = "ring-digit"

ALIPHATIC = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I")
AROMATIC = ("c", "n", "o", "s")
BOND_SYMBOLS = ("-", "=", "#")

# characters that belong to SMILES but fall outside the supported subset
UNSUPPORTED_CHARS = frozenset("[]@/\\+.*:$H%0")


class ChemError(ValueError):
    """Invalid or unsupported SMILES input.

    ``code`` is one of lex, grammar, ring-unclosed, valence,
    aromatic-acyclic, unsupported-feature; ``position`` is a token index.
    """

    def __init__(self, code: str, position: int, message: str = ""):
        super().__init__(f"{code} @{position}" + (f": {message}" if message else ""))
        self.code = code
        self.position = position


@dataclass(frozen=True, slots=True)
class Token:
    kind: str
    text: str

    @property
    def ring_number(self) -> int:
        return int(self.text[1:]) if self.text.startswith("%") else int(self.text)


_SINGLE = {sym: Token(ATOM, sym) for sym in ALIPHATIC + AROMATIC}
_SINGLE.update({b: Token(BOND, b) for b in BOND_SYMBOLS})
_SINGLE["("] = Token(BRANCH_OPEN, "(")
_SINGLE[")"] = Token(BRANCH_CLOSE, ")")
_SINGLE.update({str(d): Token(RING, str(d)) for d in range(1, 10)})


def tokenize(s: str) -> list[Token]:
    """Split ``s`` into tokens, greedy on two-letter halogens.

    Raises ChemError with the index of the token that could not be formed.
    """
    if not s:
        raise ChemError("lex", 0, "empty string")
    tokens: list[Token] = []
    i, n = 0, len(s)
    while i < n:
        pair = s[i : i + 2]
        if pair == "Cl" or pair == "Br":
            tokens.append(_SINGLE[pair])
            i += 2
            continue
        ch = s[i]
        if ch == "%":
            digits = s[i + 1 : i + 3]
            if len(digits) == 2 and digits.isdigit() and digits != "00":
                tokens.append(Token(RING, "%" + digits))
                i += 3
                continue
            raise ChemError("lex", len(tokens), f"malformed ring label at char {i}")
        tok = _SINGLE.get(ch)
        if tok is None:
            code = "unsupported-feature" if ch in UNSUPPORTED_CHARS else "lex"
            raise ChemError(code, len(tokens), f"character {ch!r} at char {i}")
        tokens.append(tok)
        i += 1
    return tokens


def token_texts(tokens: list[Token]) -> list[str]:
    return [t.text for t in tokens]


def from_texts(texts) -> list[Token]:
    """Rebuild tokens from their texts (as produced by a sequence model)."""
    out = []
    for t in texts:
        tok = _SINGLE.get(t)
        if tok is None:
            if t.startswith("%"):
                tok = Token(RING, t)
            else:
                raise ChemError("lex", len(out), f"unknown token {t!r}")
        out.append(tok)
    return out
