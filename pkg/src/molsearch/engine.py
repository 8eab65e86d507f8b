"""The search loop: tree search, GA, self-training and shortcuts around a priority queue."""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .chem import parse_smiles, write_smiles
from .ga import GaConfig, breed, select_parents
from .mcts import MctsConfig, RolloutResult, Search
from .policy import SequencePolicy, smiles_tokens
from .reward import ScoredMolecule, Scorer, is_winning

SOURCES = ("mcts", "ga", "prior")
ABLATIONS = ("no-ga", "no-self-train", "no-mcts")


@dataclass(frozen=True)
class QueueEntry:
    canonical: str
    raw: str
    reward: float
    y_t: float
    y_z: float
    source: str
    iteration: int
    y_z_verify: float | None = None

    def as_dict(self) -> dict:
        return {
            "canonical": self.canonical,
            "raw": self.raw,
            "reward": self.reward,
            "y_t": self.y_t,
            "y_z": self.y_z,
            "y_z_verify": self.y_z_verify,
            "source": self.source,
            "iteration": self.iteration,
        }


class PriorityQueue:
    """Bounded store of the best molecules, keyed by canonical string.

    The heap is lazy: stale records (superseded or evicted) are skipped when
    they surface. Among equal minimum rewards the latest insertion is evicted.
    """

    def __init__(self, capacity: int = 1000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.entries: dict[str, QueueEntry] = {}
        self._heap: list[tuple[float, int, str]] = []
        self._stamp: dict[str, int] = {}
        self._counter = 0

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, canonical: str) -> bool:
        return canonical in self.entries

    def _push(self, e: QueueEntry) -> None:
        self._counter += 1
        self._stamp[e.canonical] = self._counter
        # negated stamp: the newest record sorts first among equal rewards
        heapq.heappush(self._heap, (e.reward, -self._counter, e.canonical))

    def _clean(self) -> None:
        while self._heap:
            r, neg, key = self._heap[0]
            if self._stamp.get(key) == -neg and key in self.entries:
                return
            heapq.heappop(self._heap)

    def min_reward(self) -> float | None:
        self._clean()
        return self._heap[0][0] if self._heap else None

    def max_reward(self) -> float | None:
        return max((e.reward for e in self.entries.values()), default=None)

    def offer(self, e: QueueEntry) -> bool:
        old = self.entries.get(e.canonical)
        if old is not None:
            if e.reward <= old.reward:
                return False
            self.entries[e.canonical] = e
            self._push(e)
            return True
        if len(self.entries) >= self.capacity:
            if e.reward <= self.min_reward():
                return False
            _, _, victim = heapq.heappop(self._heap)
            del self.entries[victim]
            del self._stamp[victim]
        self.entries[e.canonical] = e
        self._push(e)
        return True

    def raws(self) -> list[str]:
        """Raw strings in canonical-key order (a deterministic sampling frame)."""
        return [self.entries[k].raw for k in sorted(self.entries)]


def admit(queue: PriorityQueue, m: ScoredMolecule, source: str, iteration: int) -> bool:
    if source not in SOURCES:
        raise ValueError(f"unknown source {source!r}")
    entry = QueueEntry(m.canonical, m.raw, m.reward, m.y_t, m.y_z, source, iteration, m.y_z_verify)
    return queue.offer(entry)


def top_k(queue: PriorityQueue, k: int) -> list[QueueEntry]:
    ranked = sorted(queue.entries.values(), key=lambda e: (-e.reward, e.iteration, e.canonical))
    return ranked[: max(k, 0)]


@dataclass(frozen=True)
class RunConfig:
    budget: int = 10_000
    mcts_steps_per_iteration: int = 48
    ga_children_per_iteration: int = 12
    self_train_batch: int = 64
    self_train_weight: float = 1.0
    queue_capacity: int = 1000
    ablation: frozenset = frozenset()
    seed: int = 0
    top_k: int = 10
    max_iterations: int = 100_000
    mcts: MctsConfig = field(default_factory=MctsConfig)
    ga: GaConfig = field(default_factory=GaConfig)

    def __post_init__(self):
        object.__setattr__(self, "ablation", frozenset(self.ablation))
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        unknown = self.ablation - set(ABLATIONS)
        if unknown:
            raise ValueError(f"unknown ablation flags: {sorted(unknown)}")
        if "no-mcts" in self.ablation and "no-ga" in self.ablation:
            raise ValueError("no-mcts requires the GA to be enabled")
        if self.mcts_steps_per_iteration < 1 and self.use_mcts:
            raise ValueError("mcts_steps_per_iteration must be positive")
        if self.ga_children_per_iteration < 1 and self.use_ga:
            raise ValueError("ga_children_per_iteration must be positive")
        if self.self_train_batch < 1 or self.queue_capacity < 1:
            raise ValueError("self_train_batch and queue_capacity must be positive")

    @property
    def use_mcts(self) -> bool:
        return "no-mcts" not in self.ablation

    @property
    def use_ga(self) -> bool:
        return "no-ga" not in self.ablation

    @property
    def use_self_train(self) -> bool:
        return "no-self-train" not in self.ablation


@dataclass(frozen=True)
class IterationMetrics:
    iteration: int
    n_valid: int
    n_win: int
    wr: float
    rr: float
    best_reward: float
    queue_size: int

    @classmethod
    def from_rewards(cls, iteration: int, rewards: list[float], best: float, queue_size: int) -> IterationMetrics:
        n = len(rewards)
        n_win = sum(is_winning(r) for r in rewards)
        wr = n_win / n if n else 0.0
        rr = math.fsum(rewards) / n if n else 0.0
        return cls(iteration, n, n_win, wr, rr, best, queue_size)


@dataclass
class RunResult:
    queue: PriorityQueue
    top: list[QueueEntry]
    metrics: list[IterationMetrics]
    total_valid: int
    distinct_valid: int
    p_chi: SequencePolicy
    search: Search | None
    verification_tag: str | None = None

    @property
    def mean_top_reward(self) -> float:
        return float(np.mean([e.reward for e in self.top])) if self.top else 0.0

    def summary(self) -> dict:
        top = self.top
        return {
            "total_valid": self.total_valid,
            "distinct_valid": self.distinct_valid,
            "iterations": len(self.metrics),
            "queue_size": len(self.queue),
            "top1_reward": top[0].reward if top else None,
            "mean_top_reward": self.mean_top_reward,
            "verification_panel": self.verification_tag,
            "tree_nodes": self.search.node_count() if self.search else 0,
        }


class _Counter:
    """Valid-sampling ledger for one iteration."""

    def __init__(self):
        self.rewards: list[float] = []
        self.canonicals: set[str] = set()

    def add(self, m: ScoredMolecule) -> None:
        self.rewards.append(m.reward)
        self.canonicals.add(m.canonical)


def run(
    cfg: RunConfig,
    p_gamma: SequencePolicy,
    scorer: Scorer,
    on_iteration=None,
) -> RunResult:
    """Search until ``cfg.budget`` valid samplings have been made.

    ``p_gamma`` is the fitted prior and is never modified; the self-trained
    policy starts as a copy of it. ``scorer`` carries the target, training
    panel, oracle and reward thresholds; if it has a verification panel the
    final entries get verification z-scores.
    """
    seeds = np.random.SeedSequence(cfg.seed).spawn(4)
    rng_mcts, rng_ga, rng_train, _ = (np.random.default_rng(s) for s in seeds)
    p_gamma = p_gamma.copy().freeze()
    p_chi = p_gamma.copy()
    queue = PriorityQueue(cfg.queue_capacity)
    search = Search(p_gamma, p_chi, scorer, cfg.mcts, rng_mcts) if cfg.use_mcts else None
    metrics: list[IterationMetrics] = []
    seen: set[str] = set()
    total = 0

    it = 0
    while total < cfg.budget and it < cfg.max_iterations:
        it += 1
        ledger = _Counter()
        if search is not None:
            for _ in range(cfg.mcts_steps_per_iteration):
                result: RolloutResult = search.step()
                for m in result.terminals:
                    ledger.add(m)
                    admit(queue, m, "mcts", it)

        new_ga: list[ScoredMolecule] = []
        if cfg.use_ga:
            made = 0
            rounds = 0
            while made < cfg.ga_children_per_iteration and rounds < 4 * cfg.ga_children_per_iteration:
                rounds += 1
                parents, fresh = select_parents(queue.raws(), p_gamma, cfg.ga.population, rng_ga)
                for raw in fresh:
                    m = scorer.score(raw)
                    ledger.add(m)
                    admit(queue, m, "prior", it)
                if len(parents) < 2:
                    continue
                for child in breed(parents, cfg.ga, rng_ga):
                    m = scorer.score_graph(child, write_smiles(child))
                    ledger.add(m)
                    made += 1
                    if admit(queue, m, "ga", it):
                        new_ga.append(m)

        if cfg.use_self_train and len(queue):
            frame = queue.raws()
            size = min(cfg.self_train_batch, len(frame))
            picks = rng_train.choice(len(frame), size=size, replace=False)
            batch = [smiles_tokens(frame[i]) for i in sorted(picks)]
            batch = [t for t in batch if p_chi.covers(t)]
            if batch:
                p_chi.fine_tune(batch, cfg.self_train_weight)

        if search is not None:
            for m in new_ga:
                if queue.entries.get(m.canonical) is not None and queue.entries[m.canonical].raw == m.raw:
                    search.insert_shortcut(m)

        total += len(ledger.rewards)
        seen |= ledger.canonicals
        best = queue.max_reward()
        row = IterationMetrics.from_rewards(it, ledger.rewards, best if best is not None else 0.0, len(queue))
        metrics.append(row)
        if on_iteration is not None:
            on_iteration(row)
        if total == 0 and it >= 10:
            raise RuntimeError("no valid molecules after 10 iterations")

    top = top_k(queue, cfg.top_k)
    tag = None
    if scorer.verification is not None:
        tag = scorer.verification.tag
        verified = {}
        for e in queue.entries.values():
            v = scorer.verify(ScoredMolecule(e.canonical, e.raw, e.y_t, e.y_z, e.reward))
            verified[e.canonical] = QueueEntry(**{**asdict(e), "y_z_verify": v.y_z_verify})
        queue.entries.update(verified)
        top = top_k(queue, cfg.top_k)
    return RunResult(queue, top, metrics, total, len(seen), p_chi, search, tag)


# ---------------------------------------------------------------- persistence


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


METRIC_FIELDS = ("iteration", "n_valid", "n_win", "wr", "rr", "best_reward", "queue_size")


def results_jsonl(result: RunResult) -> str:
    rows = top_k(result.queue, len(result.queue))
    return "".join(json.dumps(e.as_dict(), sort_keys=True) + "\n" for e in rows)


def metrics_csv(metrics: list[IterationMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_FIELDS)
    for m in metrics:
        w.writerow([getattr(m, f) for f in METRIC_FIELDS])
    return buf.getvalue()


def read_results(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def read_metrics(path) -> list[IterationMetrics]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    ints = {"iteration", "n_valid", "n_win", "queue_size"}
    return [IterationMetrics(**{k: int(v) if k in ints else float(v) for k, v in r.items()}) for r in rows]


def write_run(result: RunResult, out_dir, tree_top: int = 200) -> dict[str, Path]:
    out = Path(out_dir)
    paths = {
        "results": out / "results.jsonl",
        "metrics": out / "metrics.csv",
        "summary": out / "summary.json",
        "tree": out / "tree.json",
    }
    atomic_write(paths["results"], results_jsonl(result))
    atomic_write(paths["metrics"], metrics_csv(result.metrics))
    atomic_write(paths["summary"], json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")
    tree = result.search.dump(tree_top) if result.search is not None else []
    atomic_write(paths["tree"], json.dumps(tree, indent=1) + "\n")
    return paths


def rescore(entry: QueueEntry, scorer: Scorer) -> ScoredMolecule:
    """Fresh oracle evaluation of a stored entry, bypassing the scorer's memo."""
    return scorer.score_graph(parse_smiles(entry.raw), entry.raw)
