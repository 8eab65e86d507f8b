"""Scoring: value oracles, adversary-panel z-scores and the thresholded reward."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np

from .chem import MolecularGraph, canonical_form, descriptors, is_valid, parse_smiles
from .chem.descriptors import DESCRIPTOR_NAMES
from .policy import SequencePolicy

N_FEATURES = len(DESCRIPTOR_NAMES)
Y_MIN, Y_MAX = -6.0, 6.0


@dataclass(frozen=True)
class SampleProfile:
    id: str
    features: tuple[float, ...]

    def __post_init__(self):
        feats = tuple(float(x) for x in self.features)
        if len(feats) != N_FEATURES or not all(math.isfinite(x) for x in feats):
            raise ValueError(f"profile {self.id!r} needs {N_FEATURES} finite features")
        object.__setattr__(self, "features", feats)


@dataclass(frozen=True)
class Panel:
    profiles: tuple[SampleProfile, ...]
    role: str = "training"

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        if self.role not in ("training", "verification"):
            raise ValueError(f"unknown panel role {self.role!r}")
        ids = [p.id for p in self.profiles]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate profile ids in panel")

    def __len__(self) -> int:
        return len(self.profiles)

    @property
    def ids(self) -> frozenset[str]:
        return frozenset(p.id for p in self.profiles)

    @property
    def tag(self) -> str:
        digest = hashlib.sha1("\n".join(sorted(self.ids)).encode()).hexdigest()[:10]
        return f"{self.role}:{digest}"


def check_disjoint(training: Panel, verification: Panel) -> None:
    if training.ids & verification.ids:
        raise ValueError("training and verification panels share profiles")


def load_profiles(path) -> list[SampleProfile]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return [SampleProfile(str(d["id"]), tuple(d["features"])) for d in data]


def load_panel(path, role: str) -> Panel:
    return Panel(tuple(load_profiles(path)), role)


def dump_profiles(profiles, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([{"id": p.id, "features": list(p.features)} for p in profiles], fh, indent=1)


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = -1.0
    beta: float = 1.0
    theta_t: float = 1.0
    theta_z: float = 0.0

    def __post_init__(self):
        if not self.alpha < 0:
            raise ValueError("alpha must be negative")
        if not self.beta > 0:
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class ScoredMolecule:
    canonical: str
    raw: str
    y_t: float
    y_z: float
    reward: float
    y_z_verify: float | None = None


class ValueOracle(Protocol):
    def score(self, graph: MolecularGraph, profile: SampleProfile) -> float: ...


def _linear(d, c: SampleProfile, bias: float) -> float:
    y = bias + math.fsum(f * x for f, x in zip(c.features, d))
    return min(Y_MAX, max(Y_MIN, y))


def surrogate_score(g: MolecularGraph, c: SampleProfile, bias: float) -> float:
    return _linear(descriptors(g), c, bias)


@dataclass(frozen=True)
class SurrogateOracle:
    """Linear response to descriptors, clamped to a log-IC50-like range."""

    bias: float = 0.0

    def score(self, graph: MolecularGraph, profile: SampleProfile) -> float:
        return surrogate_score(graph, profile, self.bias)

    def score_many(self, graph: MolecularGraph, profiles) -> list[float]:
        d = descriptors(graph)
        return [_linear(d, p, self.bias) for p in profiles]


def adversary_scores(g: MolecularGraph, panel: Panel, oracle: ValueOracle) -> list[float]:
    """Oracle values over the panel; uses ``oracle.score_many`` when the oracle has one."""
    many = getattr(oracle, "score_many", None)
    if many is not None:
        return list(many(g, panel.profiles))
    return [oracle.score(g, p) for p in panel.profiles]


def z_score(y_t: float, y_a) -> float:
    ys = np.asarray(y_a, dtype=float)
    if ys.size < 2:
        raise ValueError("panel too small for a z-score")
    sd = float(ys.std())
    if sd < 1e-12:
        return 0.0
    return (y_t - float(ys.mean())) / sd


def reward(y_t: float, y_z: float, cfg: RewardConfig) -> float:
    if y_t <= cfg.theta_t and y_z <= cfg.theta_z:
        return math.exp(cfg.alpha * (y_z - cfg.theta_z)) + cfg.beta * math.log(cfg.theta_t - y_t + 1.0)
    return 1.0


def is_winning(r: float) -> int:
    return 1 if r > 1 else 0


@dataclass
class Scorer:
    """Scores molecules for one target; memoises by raw string (oracles are deterministic)."""

    target: SampleProfile
    panel: Panel
    oracle: ValueOracle
    cfg: RewardConfig
    verification: Panel | None = None
    _memo: dict = field(default_factory=dict, repr=False)

    def score_graph(self, g: MolecularGraph, raw: str) -> ScoredMolecule:
        y_t = self.oracle.score(g, self.target)
        y_z = z_score(y_t, adversary_scores(g, self.panel, self.oracle))
        return ScoredMolecule(canonical_form(g), raw, y_t, y_z, reward(y_t, y_z, self.cfg))

    def score(self, raw: str) -> ScoredMolecule | None:
        """Scored molecule for ``raw``, or None when it is not a valid string."""
        if raw in self._memo:
            return self._memo[raw]
        out = None
        if is_valid(raw).valid:
            out = self.score_graph(parse_smiles(raw), raw)
        self._memo[raw] = out
        return out

    def verify(self, m: ScoredMolecule) -> ScoredMolecule:
        """Attach the held-out panel z-score."""
        if self.verification is None:
            raise ValueError("no verification panel")
        g = parse_smiles(m.raw)
        y_v = z_score(m.y_t, adversary_scores(g, self.verification, self.oracle))
        return replace(m, y_z_verify=y_v)

    def with_config(self, cfg: RewardConfig) -> Scorer:
        return Scorer(self.target, self.panel, self.oracle, cfg, self.verification)


@dataclass(frozen=True)
class Calibration:
    config: RewardConfig
    wr: float
    rr: float
    n_samples: int


class CalibrationError(RuntimeError):
    pass


def win_rate(scored, cfg: RewardConfig) -> tuple[float, float]:
    """(WR, RR) of (y_t, y_z) pairs under cfg."""
    rewards = [reward(t, z, cfg) for t, z in scored]
    n = len(rewards)
    return sum(is_winning(r) for r in rewards) / n, math.fsum(rewards) / n


def sample_valid(prior: SequencePolicy, n: int, rng: np.random.Generator, max_tries: int | None = None) -> list[str]:
    out = []
    tries = 0
    limit = max_tries if max_tries is not None else 50 * n
    while len(out) < n and tries < limit:
        tries += 1
        comp = prior.sample_completion([], rng, max_len=100)
        if comp.truncated or not comp.tokens:
            continue
        s = comp.text
        if is_valid(s).valid:
            out.append(s)
    return out


def calibrate_thresholds(
    prior: SequencePolicy,
    target: SampleProfile,
    panel: Panel,
    oracle: ValueOracle,
    rng_seed: int,
    n_samples: int = 2000,
    alpha: float = -1.0,
    beta: float = 1.0,
    theta_t: float = 1.0,
    band: tuple[float, float] = (0.01, 0.05),
    z_range: tuple[float, float] = (-4.0, 4.0),
) -> Calibration:
    """Fix theta_t and bisect theta_z until the prior's winning rate falls in ``band``."""
    rng = np.random.default_rng(rng_seed)
    raws = sample_valid(prior, n_samples, rng)
    if len(raws) < n_samples:
        raise CalibrationError(f"prior produced only {len(raws)} valid molecules")
    scored = []
    for s in raws:
        g = parse_smiles(s)
        y_t = oracle.score(g, target)
        scored.append((y_t, z_score(y_t, adversary_scores(g, panel, oracle))))

    lo_band, hi_band = band

    def wr_at(theta_z: float) -> float:
        return sum(1 for t, z in scored if t <= theta_t and z <= theta_z) / len(scored)

    lo, hi = z_range
    if wr_at(hi) < lo_band or wr_at(lo) > hi_band:
        raise CalibrationError(
            f"no theta_z in [{lo}, {hi}] gives a winning rate in [{lo_band}, {hi_band}]"
            f" (rate {wr_at(lo):.4f} at {lo}, {wr_at(hi):.4f} at {hi})"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        wr = wr_at(mid)
        if wr < lo_band:
            lo = mid
        elif wr > hi_band:
            hi = mid
        else:
            cfg = RewardConfig(alpha, beta, theta_t, mid)
            wr, rr = win_rate(scored, cfg)
            return Calibration(cfg, wr, rr, len(scored))
    raise CalibrationError(
        f"bisection did not reach the winning-rate band: the rate jumps from {wr_at(lo):.4f}"
        f" to {wr_at(hi):.4f} near theta_z = {lo:.6g} (oracle too flat?)"
    )
