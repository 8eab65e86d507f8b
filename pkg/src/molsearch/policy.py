"""Count-based next-token models over SMILES tokens.

The same class serves as the corpus prior and as the self-trained copy that
is refit on search results. Fitting is exact maximum likelihood (n-gram
counting) with additive smoothing, so fine-tuning is adding weighted counts.
"""

from __future__ import annotations

import copy
import json
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .chem import tokenize
from .chem.tokens import ALIPHATIC, AROMATIC, BOND_SYMBOLS

BEGIN = "^"
END = "$"
FORMAT = "molsearch-ngram"
VERSION = 1

# every token the parser accepts except two-digit ring labels
FULL_VOCABULARY = tuple(ALIPHATIC + AROMATIC + BOND_SYMBOLS + ("(", ")")) + tuple(str(d) for d in range(1, 10))


@dataclass(frozen=True)
class TrainReport:
    sequences_used: int
    loglik_before: float
    loglik_after: float


@dataclass(frozen=True)
class Completion:
    tokens: tuple[str, ...]
    truncated: bool

    @property
    def text(self) -> str:
        return "".join(self.tokens)


class SequencePolicy:
    """n-gram model with additive smoothing ``k`` over ``vocabulary + [END]``."""

    def __init__(self, order: int, k: float, vocabulary: Sequence[str]):
        if order < 1:
            raise ValueError("order must be >= 1")
        if not k > 0:
            raise ValueError("smoothing k must be > 0")
        if END in vocabulary or BEGIN in vocabulary:
            raise ValueError("markers cannot be vocabulary tokens")
        self.order = order
        self.k = float(k)
        self.vocabulary = tuple(vocabulary)
        self.outcomes = self.vocabulary + (END,)
        self.index = {t: i for i, t in enumerate(self.outcomes)}
        self.counts: dict[tuple[str, ...], np.ndarray] = {}
        self.frozen = False
        self._cache: dict[tuple[str, ...], tuple[np.ndarray, np.ndarray]] = {}
        self._uniform = np.full(len(self.outcomes), 1.0 / len(self.outcomes))
        self._uniform_cdf = np.cumsum(self._uniform)

    # -- structure -----------------------------------------------------------

    def context(self, prefix: Sequence[str]) -> tuple[str, ...]:
        width = self.order - 1
        if width == 0:
            return ()
        ctx = tuple(prefix[-width:])
        if len(ctx) < width:
            ctx = (BEGIN,) * (width - len(ctx)) + ctx
        return ctx

    def _events(self, seq: Sequence[str]) -> Iterable[tuple[tuple[str, ...], int]]:
        full = list(seq) + [END]
        for i, tok in enumerate(full):
            yield self.context(full[:i]), self.index[tok]

    def _add(self, sequences: Iterable[Sequence[str]], weight: float) -> int:
        used = 0
        size = len(self.outcomes)
        for seq in sequences:
            for ctx, j in self._events(seq):
                row = self.counts.get(ctx)
                if row is None:
                    row = self.counts[ctx] = np.zeros(size)
                row[j] += weight
            used += 1
        self._cache.clear()
        return used

    def copy(self) -> SequencePolicy:
        new = copy.deepcopy(self)
        new.frozen = False
        return new

    def freeze(self) -> SequencePolicy:
        self.frozen = True
        return self

    # -- queries -------------------------------------------------------------

    def _dist(self, ctx: tuple[str, ...]) -> tuple[np.ndarray, np.ndarray]:
        hit = self._cache.get(ctx)
        if hit is not None:
            return hit
        row = self.counts.get(ctx)
        if row is None:
            out = (self._uniform, self._uniform_cdf)
        else:
            p = (row + self.k) / (row.sum() + self.k * len(self.outcomes))
            out = (p, np.cumsum(p))
        self._cache[ctx] = out
        return out

    def next_distribution(self, prefix: Sequence[str]) -> np.ndarray:
        """Probabilities over ``self.outcomes`` (vocabulary then END)."""
        return self._dist(self.context(prefix))[0].copy()

    def covers(self, seq: Iterable[str]) -> bool:
        return all(t in self.index and t != END for t in seq)

    def prob(self, prefix: Sequence[str], token: str) -> float:
        return float(self._dist(self.context(prefix))[0][self.index[token]])

    def log_likelihood(self, seq: Sequence[str]) -> tuple[float, int]:
        """Total log-probability of ``seq`` + END and the number of predicted tokens."""
        total = 0.0
        n = 0
        for ctx, j in self._events(seq):
            total += math.log(self._dist(ctx)[0][j])
            n += 1
        return total, n

    def mean_log_likelihood(self, sequences: Iterable[Sequence[str]]) -> float:
        total, n = 0.0, 0
        for seq in sequences:
            t, m = self.log_likelihood(seq)
            total += t
            n += m
        return total / n

    def sample_completion(
        self, prefix: Sequence[str], rng: np.random.Generator | int, max_len: int = 100
    ) -> Completion:
        """Extend ``prefix`` token by token until END or ``max_len`` tokens."""
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        out = list(prefix)
        outcomes = self.outcomes
        end_index = len(outcomes) - 1
        while len(out) < max_len:
            cdf = self._dist(self.context(out))[1]
            j = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
            j = min(j, end_index)
            if j == end_index:
                return Completion(tuple(out), False)
            out.append(outcomes[j])
        return Completion(tuple(out), True)

    # -- training ------------------------------------------------------------

    def fine_tune(self, batch: Sequence[Sequence[str]], weight: float = 1.0) -> TrainReport:
        """Add ``weight`` x the batch n-gram counts."""
        if self.frozen:
            raise RuntimeError("policy is frozen")
        if not batch:
            raise ValueError("empty fine-tuning batch")
        if weight < 0:
            raise ValueError("weight must be non-negative")
        before = self.mean_log_likelihood(batch)
        used = self._add(batch, weight) if weight > 0 else len(batch)
        after = self.mean_log_likelihood(batch)
        return TrainReport(used, before, after)

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "order": self.order,
            "k": self.k,
            "vocabulary": list(self.vocabulary),
            "counts": {" ".join(ctx): row.tolist() for ctx, row in sorted(self.counts.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> SequencePolicy:
        if d.get("format") != FORMAT or d.get("version") != VERSION:
            raise ValueError("not a policy file of a supported version")
        p = cls(d["order"], d["k"], d["vocabulary"])
        for key, row in d["counts"].items():
            ctx = tuple(key.split(" ")) if key else ()
            p.counts[ctx] = np.array(row, dtype=float)
        return p

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> SequencePolicy:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit(
    corpus: Sequence[Sequence[str]],
    order: int = 6,
    k: float = 0.05,
    vocabulary: Sequence[str] | None = None,
) -> SequencePolicy:
    """Maximum-likelihood n-gram counts over begin-padded, END-terminated sequences."""
    if not corpus:
        raise ValueError("empty corpus")
    if vocabulary is None:
        vocabulary = sorted({t for seq in corpus for t in seq})
    p = SequencePolicy(order, k, vocabulary)
    p._add(corpus, 1.0)
    return p


def smiles_tokens(s: str) -> list[str]:
    return [t.text for t in tokenize(s)]
