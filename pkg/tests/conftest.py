import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wigner_match import RunConfig, generate_pair, seeded_match


@pytest.fixture(scope="session")
def run_n4000():
    """One seeded step at n=4000, epsilon=0.8, theta=1, k0=12.

    Shared by the concentration, degree-statistics and acceptance tests;
    everything it produces is deterministic.
    """
    cfg = RunConfig(n=4000, epsilon=0.8, theta=1.0, k0=12, varkappa=6.0, t_max=1, seed=1104)
    pair = generate_pair(cfg.n, cfg.epsilon, cfg.seed)
    outcome = seeded_match(pair, cfg)
    return pair, cfg, outcome


@pytest.fixture(scope="session")
def runs_eps0_n2000():
    """Five null-model trials (epsilon=0) at n=2000 with the 2-step schedule."""
    runs = []
    for trial in range(5):
        cfg = RunConfig(n=2000, epsilon=0.0, theta=1.0, k0=12, varkappa=6.0, t_max=2, seed=8000 + trial)
        pair = generate_pair(cfg.n, cfg.epsilon, cfg.seed)
        runs.append((pair, cfg, seeded_match(pair, cfg)))
    return runs
