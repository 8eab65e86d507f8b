"""Search tree over SMILES token prefixes.

Nodes carry prior P, visit count N, reward sum S, valid count N_v and
winning count N_w; the action value is S / (1 + N_v). Selection uses a
PUCT-style bonus with the prior policy as P. Leaves are expanded by sampling
actions from the prior and one new child is evaluated by rollouts drawn
mostly from the self-trained policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chem import MAX_TOKENS
from .policy import END, SequencePolicy, smiles_tokens
from .reward import ScoredMolecule, Scorer, is_winning

ROOT = "<root>"


@dataclass(frozen=True)
class MctsConfig:
    c: float = 1.5
    n_rollouts: int = 8
    mix: float = 0.8
    n_expand: int = 5
    re_expand_prob: float = 0.1

    def __post_init__(self):
        if self.n_rollouts < 1 or self.n_expand < 1:
            raise ValueError("n_rollouts and n_expand must be positive")
        if not (0.0 <= self.mix <= 1.0 and 0.0 <= self.re_expand_prob <= 1.0):
            raise ValueError("mix and re_expand_prob must lie in [0, 1]")


class TreeNode:
    __slots__ = ("action", "prior", "n", "s", "n_v", "n_w", "children", "_by_action", "prefix", "is_shortcut")

    def __init__(self, action: str, prior: float, prefix: tuple[str, ...], is_shortcut: bool = False):
        if not 0.0 < prior <= 1.0:
            raise ValueError(f"prior probability {prior} outside (0, 1]")
        self.action = action
        self.prior = prior
        self.n = 0
        self.s = 0.0
        self.n_v = 0
        self.n_w = 0
        self.children: list[TreeNode] = []
        self._by_action: dict[str, TreeNode] = {}
        self.prefix = prefix  # molecule tokens up to here, END excluded
        self.is_shortcut = is_shortcut

    @classmethod
    def root(cls) -> TreeNode:
        return cls(ROOT, 1.0, ())

    @property
    def q(self) -> float:
        return self.s / (1 + self.n_v)

    @property
    def is_terminal(self) -> bool:
        return self.action == END

    @property
    def depth(self) -> int:
        return len(self.prefix)

    def child(self, action: str) -> TreeNode | None:
        return self._by_action.get(action)

    def add_child(self, action: str, prior: float, is_shortcut: bool = False) -> TreeNode:
        if action in self._by_action:
            raise ValueError(f"duplicate action {action!r}")
        if self.is_terminal:
            raise ValueError("terminal nodes have no children")
        prefix = self.prefix if action == END else self.prefix + (action,)
        node = TreeNode(action, prior, prefix, is_shortcut)
        self.children.append(node)
        self._by_action[action] = node
        return node

    def walk(self):
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def __repr__(self) -> str:
        return (
            f"TreeNode({''.join(self.prefix)!r}+{self.action!r}, P={self.prior:.3g}, N={self.n}, "
            f"S={self.s:.3g}, Nv={self.n_v}, Nw={self.n_w})"
        )


@dataclass
class RolloutResult:
    terminals: list[ScoredMolecule] = field(default_factory=list)
    n_valid: int = 0
    n_win: int = 0
    penalty: bool = False

    @property
    def reward_sum(self) -> float:
        return math.fsum(m.reward for m in self.terminals)

    @classmethod
    def from_scored(cls, scored: list[ScoredMolecule]) -> RolloutResult:
        return cls(scored, len(scored), sum(is_winning(m.reward) for m in scored), not scored)


def puct_scores(node: TreeNode, c: float) -> list[float]:
    total = math.sqrt(sum(ch.n for ch in node.children))
    return [ch.q + c * ch.prior * total / (1 + ch.n) for ch in node.children]


def select_child(node: TreeNode, c: float) -> TreeNode:
    """Argmax of Q + U over children (first wins ties); bumps the winner's N."""
    if not node.children:
        raise ValueError("node has no children")
    scores = puct_scores(node, c)
    best = 0
    for i in range(1, len(scores)):
        if scores[i] > scores[best]:
            best = i
    chosen = node.children[best]
    chosen.n += 1
    return chosen


def expand(node: TreeNode, prior: SequencePolicy, n_expand: int, rng: np.random.Generator) -> list[TreeNode]:
    """Sample ``n_expand`` actions from the prior; add the unseen ones as children."""
    if node.is_terminal or node.depth >= MAX_TOKENS:
        return []
    probs = prior.next_distribution(node.prefix)
    draws = rng.choice(len(probs), size=n_expand, p=probs)
    new = []
    for j in draws:
        action = prior.outcomes[j]
        if node.child(action) is None:
            new.append(node.add_child(action, float(probs[j])))
    return new


def evaluate(
    node: TreeNode,
    p_chi: SequencePolicy,
    p_gamma: SequencePolicy,
    n_rollouts: int,
    mix: float,
    scorer: Scorer,
    rng: np.random.Generator,
) -> RolloutResult:
    """Complete the node's prefix ``n_rollouts`` times and score the valid results."""
    if node.is_terminal:
        m = scorer.score("".join(node.prefix)) if node.prefix else None
        return RolloutResult.from_scored([m] if m else [])
    n_chi = math.ceil(mix * n_rollouts - 1e-9)
    scored = []
    for i in range(n_rollouts):
        policy = p_chi if i < n_chi else p_gamma
        comp = policy.sample_completion(node.prefix, rng, max_len=MAX_TOKENS)
        if comp.truncated or not comp.tokens:
            continue
        m = scorer.score(comp.text)
        if m is not None:
            scored.append(m)
    return RolloutResult.from_scored(scored)


def backup(path: list[TreeNode], result: RolloutResult) -> None:
    if result.penalty:
        for node in path:
            node.s += -1.0
        return
    total = result.reward_sum
    for node in path:
        node.n_v += result.n_valid
        node.s += total
        node.n_w += result.n_win


def insert_shortcut(root: TreeNode, molecule: ScoredMolecule, prior: SequencePolicy) -> bool:
    """Create (or reuse) the token path of ``molecule`` and back up its own reward once.

    Returns False without touching the tree when the molecule is not
    representable by the prior's vocabulary or exceeds the token cap.
    """
    tokens = smiles_tokens(molecule.raw)
    if len(tokens) > MAX_TOKENS or not prior.covers(tokens):
        return False
    path = [root]
    node = root
    for action in list(tokens) + [END]:
        nxt = node.child(action)
        if nxt is None:
            nxt = node.add_child(action, prior.prob(node.prefix, action), is_shortcut=True)
        path.append(nxt)
        node = nxt
    backup(path, RolloutResult.from_scored([molecule]))
    return True


class Search:
    """One tree plus the policies and scorer it is searched with."""

    def __init__(
        self,
        p_gamma: SequencePolicy,
        p_chi: SequencePolicy,
        scorer: Scorer,
        cfg: MctsConfig,
        rng: np.random.Generator,
        on_backup=None,
    ):
        self.root = TreeNode.root()
        self.p_gamma = p_gamma
        self.p_chi = p_chi
        self.scorer = scorer
        self.cfg = cfg
        self.rng = rng
        self.on_backup = on_backup

    def _backup(self, path, result, kind):
        backup(path, result)
        if self.on_backup is not None:
            self.on_backup(kind, path, result)

    def step(self) -> RolloutResult:
        cfg = self.cfg
        node = self.root
        path = [node]
        while node.children and not node.is_terminal:
            if self.rng.random() < cfg.re_expand_prob:
                expand(node, self.p_gamma, cfg.n_expand, self.rng)
            node = select_child(node, cfg.c)
            node.is_shortcut = False
            path.append(node)
        if not node.is_terminal:
            new = expand(node, self.p_gamma, cfg.n_expand, self.rng)
            if new:
                best = new[0]
                for ch in new[1:]:
                    if ch.prior > best.prior:
                        best = ch
                path.append(best)
                node = best
        result = evaluate(node, self.p_chi, self.p_gamma, cfg.n_rollouts, cfg.mix, self.scorer, self.rng)
        self._backup(path, result, "step")
        return result

    def insert_shortcut(self, molecule: ScoredMolecule) -> bool:
        tokens = smiles_tokens(molecule.raw)
        ok = insert_shortcut(self.root, molecule, self.p_gamma)
        if ok and self.on_backup is not None:
            path = [self.root]
            for action in list(tokens) + [END]:
                path.append(path[-1].child(action))
            self.on_backup("shortcut", path, RolloutResult.from_scored([molecule]))
        return ok

    def node_count(self) -> int:
        return sum(1 for _ in self.root.walk())

    def dump(self, top_k: int = 50) -> list[dict]:
        nodes = [n for n in self.root.walk() if n is not self.root]
        nodes.sort(key=lambda n: (-n.n_v, "".join(n.prefix), n.is_terminal))
        return [
            {
                "prefix": "".join(n.prefix) + (END if n.is_terminal else ""),
                "P": n.prior,
                "N": n.n,
                "S": n.s,
                "N_v": n.n_v,
                "N_w": n.n_w,
                "is_shortcut": n.is_shortcut,
            }
            for n in nodes[:top_k]
        ]
