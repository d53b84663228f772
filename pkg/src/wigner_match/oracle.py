"""Ground-truth tools at tiny scale.

``brute_force_map`` maximizes the edge-correlation objective over all
permutations by exhaustive search; ``evaluate`` grades a match outcome
against the latent permutation.  Both are reference implementations used
to validate the iterative matcher, capped at sizes where enumeration is
cheap.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .matcher import MatchOutcome, overlap, restricted_overlap
from .model import CorrelatedPair

MAX_BRUTE_FORCE_N = 10
_CHUNK = 20_000


@dataclass(frozen=True)
class EvalReport:
    """Grades of a mapping against the latent permutation."""

    exact: bool
    fraction_correct: float
    overlap_gap: float

    def __post_init__(self):
        if not (0.0 <= self.fraction_correct <= 1.0):
            raise ParameterError("fraction_correct must lie in [0, 1]")
        if self.exact and self.fraction_correct != 1.0:
            raise ParameterError("exact outcomes must have fraction_correct == 1")


def brute_force_map(pair: CorrelatedPair) -> np.ndarray:
    """The permutation maximizing the overlap, by exhaustive search.

    Ties (probability zero for continuous entries) go to the
    lexicographically smallest permutation.  Hard-capped at n = 10, past
    which the factorial count is no longer a few seconds of work.
    """
    n = pair.n
    if n > MAX_BRUTE_FORCE_N:
        raise ParameterError(f"brute force capped at n={MAX_BRUTE_FORCE_N}, got {n}")
    iu, iv = np.triu_indices(n, k=1)
    g_vals = pair.g[iu, iv]
    best_perm = None
    best_val = -np.inf
    perms = itertools.permutations(range(n))
    while True:
        chunk = np.array(list(itertools.islice(perms, _CHUNK)), dtype=int)
        if chunk.size == 0:
            break
        # objective for the whole chunk at once: gather gs at permuted pairs
        vals = (pair.gs[chunk[:, iu], chunk[:, iv]] * g_vals).sum(axis=1)
        k = int(np.argmax(vals))
        # itertools yields in lexicographic order, so a strict comparison
        # keeps the lexicographically smallest among exact ties
        if vals[k] > best_val:
            best_val = float(vals[k])
            best_perm = chunk[k].copy()
    return best_perm


def evaluate(outcome: MatchOutcome, pair: CorrelatedPair) -> EvalReport:
    """Compare an outcome with the latent permutation.

    Only non-seed vertices count; ``overlap_gap`` is the truth's full
    objective minus the outcome's (restricted to its mapped pairs plus
    seeds, which is the full objective when the mapping is total).
    """
    seeds = {u for u, _ in outcome.seed_pairs}
    if not set(outcome.mapping).isdisjoint(seeds):
        raise ParameterError("outcome mapping domain must avoid seed vertices")
    non_seed = [v for v in range(pair.n) if v not in seeds]
    if not non_seed:
        return EvalReport(exact=True, fraction_correct=1.0, overlap_gap=0.0)
    correct = sum(1 for v in non_seed if outcome.mapping.get(v) == pair.pi[v])
    fraction = correct / len(non_seed)
    truth_overlap = overlap(pair, pair.pi)
    got_overlap = restricted_overlap(pair, outcome.full_mapping())
    return EvalReport(
        exact=(correct == len(non_seed)),
        fraction_correct=fraction,
        overlap_gap=truth_overlap - got_overlap,
    )
