import sys
from dataclasses import dataclass
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from molsearch.chem import read_smiles_file  # noqa: E402
from molsearch.config import data_path  # noqa: E402
from molsearch.policy import FULL_VOCABULARY, fit, smiles_tokens  # noqa: E402
from molsearch.reward import Scorer, SurrogateOracle, calibrate_thresholds, load_panel, load_profiles  # noqa: E402

CRITERIA: list[tuple[int, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, passed, detail)``."""

    def record(n: int, passed: bool, detail: str) -> None:
        CRITERIA.append((n, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] criterion {n}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n, passed, detail in sorted(CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {n:>2}: {detail}")


@dataclass
class FixtureTask:
    corpus: list
    prior: object
    target: object
    training: object
    verification: object
    calibration: object

    def scorer(self, cfg=None) -> Scorer:
        return Scorer(self.target, self.training, SurrogateOracle(), cfg or self.calibration.config, self.verification)


@pytest.fixture(scope="session")
def task() -> FixtureTask:
    corpus = read_smiles_file(data_path("corpus.smi"))
    prior = fit([smiles_tokens(s) for s in corpus], order=6, k=0.05, vocabulary=FULL_VOCABULARY)
    target = load_profiles(data_path("targets.json"))[0]
    training = load_panel(data_path("panel_training.json"), "training")
    verification = load_panel(data_path("panel_verification.json"), "verification")
    cal = calibrate_thresholds(prior, target, training, SurrogateOracle(), rng_seed=0)
    return FixtureTask(corpus, prior, target, training, verification, cal)
