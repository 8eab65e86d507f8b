import json
import random

import numpy as np
import pytest

from molsearch.chem import parse_smiles
from molsearch.engine import (
    IterationMetrics,
    PriorityQueue,
    QueueEntry,
    RunConfig,
    admit,
    metrics_csv,
    read_metrics,
    read_results,
    rescore,
    run,
    top_k,
    write_run,
)
from molsearch.reward import ScoredMolecule, SurrogateOracle, adversary_scores, z_score


def mol(key, r, raw=None):
    return ScoredMolecule(key, raw or key, 0.0, 0.0, r)


def full_queue(rewards):
    q = PriorityQueue(len(rewards))
    for i, r in enumerate(rewards):
        assert admit(q, mol(f"C{i}", r), "mcts", 1)
    return q


class TestAdmit:
    def test_reject_below_minimum(self):
        q = full_queue([1.0, 2.0, 3.0])
        assert not admit(q, mol("X", 0.5), "ga", 2)
        assert not admit(q, mol("X", 1.0), "ga", 2)
        assert len(q) == 3 and "X" not in q

    def test_evicts_minimum(self):
        q = full_queue([1.0, 2.0, 3.0])
        assert admit(q, mol("X", 1.5), "ga", 2)
        assert len(q) == 3 and "C0" not in q and q.min_reward() == 1.5

    def test_duplicate_equal_reward(self):
        q = full_queue([1.0, 2.0])
        assert not admit(q, mol("C1", 2.0, raw="other"), "ga", 5)
        assert len(q) == 2 and q.entries["C1"].iteration == 1

    def test_duplicate_keeps_max(self):
        q = PriorityQueue(5)
        admit(q, mol("A", 2.0), "mcts", 1)
        assert not admit(q, mol("A", 1.0), "mcts", 2)
        assert admit(q, mol("A", 3.0), "ga", 3)
        assert q.entries["A"].reward == 3.0 and q.entries["A"].source == "ga" and len(q) == 1

    def test_tie_evicts_latest(self):
        q = PriorityQueue(3)
        for key in ("A", "B", "C"):
            admit(q, mol(key, 1.0), "mcts", 1)
        admit(q, mol("D", 2.0), "mcts", 1)
        assert set(q.entries) == {"A", "B", "D"}

    def test_unknown_source(self):
        with pytest.raises(ValueError):
            admit(PriorityQueue(2), mol("A", 1.0), "rollout", 1)

    def test_against_list_model(self):
        rng = random.Random(0)
        for trial in range(50):
            cap = rng.randint(1, 8)
            q = PriorityQueue(cap)
            model: dict[str, float] = {}
            order: dict[str, int] = {}
            last_min = None
            for step in range(60):
                key = f"K{rng.randint(0, 15)}"
                r = rng.choice([1.0, 1.0, 1.5, 2.0, rng.uniform(1, 4)])
                # reference semantics
                if key in model:
                    expect = r > model[key]
                    if expect:
                        model[key] = r
                        order[key] = step
                elif len(model) < cap:
                    expect = True
                    model[key], order[key] = r, step
                else:
                    lo = min(model.values())
                    expect = r > lo
                    if expect:
                        victim = max((k for k in model if model[k] == lo), key=lambda k: order[k])
                        del model[victim], order[victim]
                        model[key], order[key] = r, step
                assert admit(q, mol(key, r), "mcts", step) == expect
                assert {k: e.reward for k, e in q.entries.items()} == model
                assert len(q) <= cap
                if len(q) == cap:
                    m = q.min_reward()
                    assert last_min is None or m >= last_min
                    last_min = m


class TestTopK:
    def entries(self):
        q = PriorityQueue(10)
        q.offer(QueueEntry("CC", "CC", 2.0, 0, 0, "mcts", 3))
        q.offer(QueueEntry("CO", "CO", 2.0, 0, 0, "ga", 1))
        q.offer(QueueEntry("CN", "CN", 2.0, 0, 0, "ga", 3))
        q.offer(QueueEntry("C", "C", 5.0, 0, 0, "prior", 9))
        return q

    def test_order(self):
        assert [e.canonical for e in top_k(self.entries(), 10)] == ["C", "CO", "CC", "CN"]

    def test_k_zero_and_large(self):
        q = self.entries()
        assert top_k(q, 0) == []
        assert len(top_k(q, 100)) == 4

    def test_non_increasing(self):
        rng = random.Random(1)
        q = PriorityQueue(50)
        for i in range(200):
            admit(q, mol(f"C{i}", rng.uniform(0, 5)), "mcts", i)
        rs = [e.reward for e in top_k(q, 50)]
        assert rs == sorted(rs, reverse=True)


class TestRunConfig:
    def test_budget(self):
        with pytest.raises(ValueError):
            RunConfig(budget=0)

    def test_ablation_consistency(self):
        with pytest.raises(ValueError):
            RunConfig(ablation={"no-mcts", "no-ga"})
        with pytest.raises(ValueError):
            RunConfig(ablation={"no-tree"})
        assert not RunConfig(ablation={"no-mcts"}).use_mcts


def test_metrics_definitions():
    m = IterationMetrics.from_rewards(4, [1.0, 2.0, 1.0, 3.0], 3.0, 10)
    assert (m.n_valid, m.n_win, m.wr, m.rr) == (4, 2, 0.5, 1.75)
    z = IterationMetrics.from_rewards(1, [], 0.0, 0)
    assert (z.wr, z.rr) == (0.0, 0.0)


@pytest.fixture(scope="module")
def small_runs(task):
    out = {}
    for name, ab in [("full", ()), ("no-ga", ("no-ga",)), ("wo-ga-st", ("no-ga", "no-self-train")),
                     ("no-mcts", ("no-mcts",))]:
        cfg = RunConfig(budget=600, seed=3, ablation=frozenset(ab), queue_capacity=60)
        seen = []
        out[name] = (cfg, run(cfg, task.prior, task.scorer(), on_iteration=seen.append), seen)
    return out


class TestRun:
    def test_budget_accounting(self, small_runs):
        for cfg, res, seen in small_runs.values():
            assert sum(m.n_valid for m in res.metrics) == res.total_valid
            assert res.total_valid >= cfg.budget
            assert res.total_valid - res.metrics[-1].n_valid < cfg.budget
            assert seen == res.metrics
            assert res.distinct_valid <= res.total_valid

    def test_metric_invariants(self, small_runs):
        for _, res, _ in small_runs.values():
            for m in res.metrics:
                assert m.wr == (m.n_win / m.n_valid if m.n_valid else 0.0)
                assert m.queue_size <= 60

    def test_no_training_keeps_prior(self, small_runs, task):
        _, res, _ = small_runs["wo-ga-st"]
        assert res.p_chi.to_dict() == task.prior.to_dict()

    def test_self_training_changes_policy(self, small_runs, task):
        _, res, _ = small_runs["full"]
        assert res.p_chi.to_dict() != task.prior.to_dict()

    def test_shortcut_purity(self, small_runs):
        _, res, _ = small_runs["no-ga"]
        assert all(not n.is_shortcut for n in res.search.root.walk())
        assert small_runs["no-mcts"][1].search is None
        assert {e.source for e in small_runs["no-mcts"][1].queue.entries.values()} <= {"ga", "prior"}
        assert {e.source for e in small_runs["no-ga"][1].queue.entries.values()} == {"mcts"}

    def test_top_entries_rescore(self, small_runs, task):
        _, res, _ = small_runs["full"]
        fresh = task.scorer()
        assert len(res.top) == 10
        for e in res.top:
            m = rescore(e, fresh)
            assert (m.canonical, m.reward, m.y_t, m.y_z) == (e.canonical, e.reward, e.y_t, e.y_z)

    def test_verification_panel_used(self, small_runs, task):
        _, res, _ = small_runs["full"]
        assert res.verification_tag == task.verification.tag
        oracle = SurrogateOracle()
        for e in res.top:
            g = parse_smiles(e.raw)
            assert e.y_z_verify == z_score(e.y_t, adversary_scores(g, task.verification, oracle))

    def test_deterministic(self, small_runs, task):
        cfg, res, _ = small_runs["full"]
        again = run(cfg, task.prior, task.scorer())
        assert [e.as_dict() for e in again.top] == [e.as_dict() for e in res.top]
        assert again.metrics == res.metrics


def test_persistence(small_runs, tmp_path):
    _, res, _ = small_runs["full"]
    paths = write_run(res, tmp_path)
    rows = read_results(paths["results"])
    assert len(rows) == len(res.queue)
    assert [r["reward"] for r in rows] == sorted((r["reward"] for r in rows), reverse=True)
    assert set(rows[0]) == {"canonical", "raw", "reward", "y_t", "y_z", "y_z_verify", "source", "iteration"}
    assert read_metrics(paths["metrics"]) == res.metrics
    assert metrics_csv(res.metrics).splitlines()[0] == "iteration,n_valid,n_win,wr,rr,best_reward,queue_size"
    summary = json.loads(paths["summary"].read_text())
    assert summary["total_valid"] == res.total_valid
    assert not [p for p in tmp_path.iterdir() if p.name.endswith(".tmp")]
    tree = json.loads(paths["tree"].read_text())
    assert tree and all(np.isfinite(n["S"]) for n in tree)
