"""Reputation bookkeeping and top-N client selection.

Three factors feed the score: accuracy contribution (a saturating curve of
the data volume), model staleness (rounds since last selection, normalised
over all clients) and the positive-interaction degree recorded by update
screening.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

PROPOSED_WEIGHTS = (0.3, 0.5, 0.2)
BENCHMARK_WEIGHTS = (0.5, 0.5, 0.0)
PI_PRIOR = 0.5


def accuracy_contribution(profile, epsilon: float = 0.0) -> float:
    a1, a2, a3 = profile.ac_params
    if a2 < 0 or a3 <= 0:
        raise ValueError("need scale >= 0 and rate > 0")
    return a1 - a2 * math.exp(-a3 * (profile.data_size + epsilon))


def pi_degree(counts, prior: float = PI_PRIOR) -> float:
    pos, neg = counts
    total = pos + neg
    return prior if total == 0 else pos / total


@dataclass(frozen=True)
class ReputationState:
    ids: tuple
    ac: np.ndarray
    ms: np.ndarray
    pi_counts: np.ndarray
    weights: tuple = PROPOSED_WEIGHTS
    last_selected: np.ndarray = None
    pi_prior: float = PI_PRIOR

    @classmethod
    def initial(cls, profiles, epsilon=0.0, weights=PROPOSED_WEIGHTS, pi_prior=PI_PRIOR):
        ids = tuple(p.id for p in profiles)
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate client ids")
        if not math.isclose(sum(weights), 1.0, abs_tol=1e-12):
            raise ValueError(f"weights {weights} do not sum to 1")
        m = len(ids)
        return cls(
            ids=ids,
            ac=np.array([accuracy_contribution(p, epsilon) for p in profiles]),
            ms=np.ones(m, dtype=np.int64),
            pi_counts=np.zeros((m, 2), dtype=np.int64),
            weights=tuple(weights),
            last_selected=np.full(m, -1, dtype=np.int64),
            pi_prior=pi_prior,
        )

    def index(self, client: int) -> int:
        try:
            return self.ids.index(client)
        except ValueError:
            raise KeyError(f"unknown client {client}") from None


def update_staleness(state: ReputationState, selected, round_index: int = None) -> ReputationState:
    """Selected clients restart at 1, everyone else ages by one round."""
    mask = np.zeros(len(state.ids), dtype=bool)
    for c in selected:
        mask[state.index(c)] = True
    ms = np.where(mask, 1, state.ms + 1)
    last = state.last_selected.copy()
    if round_index is not None:
        last[mask] = round_index
    return replace(state, ms=ms, last_selected=last)


def normalized_staleness(state: ReputationState) -> np.ndarray:
    return state.ms / state.ms.sum()


def record_verdicts(state: ReputationState, verdicts) -> ReputationState:
    """Add screening outcomes ``{client: True (positive) | False (negative)}``."""
    counts = state.pi_counts.copy()
    for c, positive in verdicts.items():
        counts[state.index(c), 0 if positive else 1] += 1
    return replace(state, pi_counts=counts)


def pi_degrees(state: ReputationState) -> np.ndarray:
    return np.array([pi_degree(c, state.pi_prior) for c in state.pi_counts])


def scores(state: ReputationState) -> np.ndarray:
    w1, w2, w3 = state.weights
    return w1 * state.ac + w2 * normalized_staleness(state) + w3 * pi_degrees(state)


def reputation(state: ReputationState, client: int) -> float:
    return float(scores(state)[state.index(client)])


def select_top_n(state: ReputationState, n: int, exclude=()) -> tuple:
    """The ``n`` best-scored clients, ties going to the smaller id."""
    pool = [i for i, c in enumerate(state.ids) if c not in set(exclude)]
    if not 1 <= n <= len(pool):
        raise ValueError(f"cannot select {n} of {len(pool)} clients")
    z = scores(state)
    pool.sort(key=lambda i: (-z[i], state.ids[i]))
    return tuple(state.ids[i] for i in pool[:n])
