"""Leave-one-out ranking metrics: HR@K and NDCG@K, overall and split by privacy tier."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fedgraphrec.data import InteractionDataset, PrivacyAssignment, Tier
from fedgraphrec.model import ClientState, rank_items


@dataclass(frozen=True)
class TierMetrics:
    hr: float
    ndcg: float
    user_count: int


@dataclass(frozen=True, eq=False)
class RoundMetrics:
    """Mean ranking quality over all users, plus per-tier splits.

    Values live in [0, 1]; formatting as percentages happens at output time.
    Tiers with no users are absent from per_tier.
    """

    hr: float
    ndcg: float
    k: int
    per_tier: dict
    per_user_rank: np.ndarray | None = None


def evaluate_user(
    state: ClientState, test_item: int, negatives: np.ndarray, k: int = 10
) -> tuple[int, float, int]:
    """Rank the held-out item among the negatives.

    Returns (hr, ndcg, rank): hr is 1 iff the 1-based rank is within the top
    k, ndcg is 1/log2(rank + 1) for hits and 0 otherwise.
    """
    negatives = np.asarray(negatives, dtype=np.int64)
    if np.any(negatives == test_item):
        raise ValueError(f"test item {test_item} appears among the negatives")
    if not 1 <= k <= negatives.size + 1:
        raise ValueError(f"k must be in [1, {negatives.size + 1}], got {k}")
    candidates = np.concatenate([negatives, [test_item]])
    ranked = rank_items(state, candidates)
    rank = next(pos for pos, (item, _score) in enumerate(ranked, start=1) if item == test_item)
    hr = 1 if rank <= k else 0
    ndcg = 1.0 / math.log2(rank + 1.0) if rank <= k else 0.0
    return hr, ndcg, rank


def evaluate_round(
    clients: list[ClientState],
    dataset: InteractionDataset,
    eval_negatives: list[np.ndarray],
    tiers: PrivacyAssignment,
    k: int = 10,
    target: str = "test",
) -> RoundMetrics:
    """Average per-user metrics over all users and per tier.

    `target` picks which held-out item each user is scored on: "test" or
    "validation".
    """
    if target not in ("test", "validation"):
        raise ValueError(f"target must be 'test' or 'validation', got {target!r}")
    n = dataset.num_users
    if len(clients) != n or len(eval_negatives) != n or tiers.is_public.size != n:
        raise ValueError("clients, negatives, tiers, and dataset disagree on user count")

    hrs = np.empty(n)
    ndcgs = np.empty(n)
    ranks = np.empty(n, dtype=np.int64)
    for u, state in enumerate(clients):
        held = dataset.test[u] if target == "test" else dataset.validation[u]
        if held is None:
            raise ValueError(f"user {u} has no validation item")
        hr, ndcg, rank = evaluate_user(state, held, eval_negatives[u], k)
        hrs[u] = hr
        ndcgs[u] = ndcg
        ranks[u] = rank

    per_tier = {}
    for tier, mask in ((Tier.PUBLIC, tiers.is_public), (Tier.PRIVATE, ~tiers.is_public)):
        count = int(mask.sum())
        if count == 0:
            continue  # empty buckets are absent, not zero
        per_tier[tier] = TierMetrics(
            hr=float(hrs[mask].mean()),
            ndcg=float(ndcgs[mask].mean()),
            user_count=count,
        )
    return RoundMetrics(
        hr=float(hrs.mean()),
        ndcg=float(ndcgs.mean()),
        k=k,
        per_tier=per_tier,
        per_user_rank=ranks,
    )
