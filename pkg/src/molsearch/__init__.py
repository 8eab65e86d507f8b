"""Target-profile-specific molecule search with a tree search, a genetic algorithm and a self-trained policy."""

from .engine import PriorityQueue, RunConfig, RunResult, admit, run, top_k
from .ga import GaConfig
from .mcts import MctsConfig
from .policy import SequencePolicy, fit
from .reward import Panel, RewardConfig, SampleProfile, Scorer, SurrogateOracle

__version__ = "0.1.0"

__all__ = [
    "GaConfig",
    "MctsConfig",
    "Panel",
    "PriorityQueue",
    "RewardConfig",
    "RunConfig",
    "RunResult",
    "SampleProfile",
    "Scorer",
    "SequencePolicy",
    "SurrogateOracle",
    "admit",
    "fit",
    "run",
    "top_k",
]
