"""Regenerate the bundled fixture data in src/molsearch/data.

    python3 scripts/make_fixtures.py [--out DIR] [--seed N]

The corpus is drawn from a small fragment grammar of drug-like pieces
(chains, six- and five-membered rings, common substituents). Every line is
checked with the package parser and deduplicated by canonical form. Profiles
are standard-normal feature vectors; the verification panel is disjoint from
the training panel and twice its size.
"""

from __future__ import annotations

import argparse
import random
from pathlib import Path

import numpy as np

from molsearch.chem import canonical_form, is_valid, parse_smiles, tokenize
from molsearch.reward import N_FEATURES, SampleProfile, dump_profiles

# pieces with one open attachment on each side
LINKERS = [
    "C", "CC", "CCC", "N", "O", "S", "C(=O)", "C(=O)N", "NC(=O)", "C(C)", "C(O)", "CN", "OC",
    "C=C", "S(=O)(=O)", "C(F)", "N(C)",
    "c1ccc(cc1)", "c1cccc(c1)", "c1ccc(nc1)", "c1cnc(nc1)", "c1ccc(s1)",
    "C1CCC(CC1)", "C1CCN(CC1)", "N1CCN(CC1)", "C1CC(C1)", "C1CCC(C1)",
]
# pieces with one open attachment
CAPS = [
    "C", "CC", "F", "Cl", "Br", "I", "O", "N", "OC", "C#N", "C(F)(F)F", "C(=O)O", "C(=O)N", "C(C)C",
    "S(C)(=O)=O", "N(C)C", "OCC", "c1ccccc1", "c1ccncc1", "c1cccs1", "c1cncnc1",
    "C1CCCCC1", "C1CCOCC1", "N1CCOCC1", "N1CCCC1", "C1CC1", "P(=O)(O)O", "B(O)O",
]


def random_molecule(rng: random.Random) -> str:
    parts = [rng.choice(CAPS)]
    for _ in range(rng.choice([1, 1, 2, 2, 3, 3, 4, 5])):
        link = rng.choice(LINKERS)
        if rng.random() < 0.25:
            link = link + "(" + rng.choice(CAPS[:14]) + ")" if not link.endswith(")") else link
        parts.append(link)
    parts.append(rng.choice(CAPS))
    return "".join(parts)


def make_corpus(n: int, seed: int) -> list[str]:
    rng = random.Random(seed)
    seen, lines = set(), []
    while len(lines) < n:
        s = random_molecule(rng)
        if len(s) > 100 or not is_valid(s).valid or len(tokenize(s)) > 100:
            continue
        key = canonical_form(parse_smiles(s))
        if key in seen:
            continue
        seen.add(key)
        lines.append(s)
    return lines


def make_profiles(prefix: str, n: int, rng: np.random.Generator) -> list[SampleProfile]:
    return [SampleProfile(f"{prefix}{i:03d}", tuple(np.round(rng.normal(size=N_FEATURES), 6))) for i in range(n)]


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "src" / "molsearch" / "data")
    ap.add_argument("--seed", type=int, default=20201001)
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)

    corpus = make_corpus(2000, args.seed)
    (args.out / "corpus.smi").write_text("\n".join(corpus) + "\n", encoding="utf-8")

    rng = np.random.default_rng(args.seed)
    dump_profiles(make_profiles("train", 64, rng), args.out / "panel_training.json")
    dump_profiles(make_profiles("verify", 128, rng), args.out / "panel_verification.json")
    targets = make_profiles("target", 4, rng)
    dump_profiles(targets, args.out / "targets.json")
    print(f"wrote {len(corpus)} corpus lines and {len(targets)} targets to {args.out}")


if __name__ == "__main__":
    main()
