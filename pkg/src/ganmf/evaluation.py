"""Top-N ranking metrics and whole-model evaluation reports.

Metrics depend only on the order of items (plus the fixed tie rule: equal
scores break by ascending item id), never on score magnitudes. Users without
test interactions are excluded from every mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Urm

__all__ = [
    "ndcg_at_k",
    "map_at_k",
    "EvalReport",
    "BucketReport",
    "SimilarityStats",
    "rank_items",
    "evaluate",
    "evaluate_by_profile_length",
    "similarity_stats",
    "report_to_dict",
    "report_to_csv_rows",
]


def ndcg_at_k(ranked, relevant, k: int) -> float:
    """Normalized discounted cumulative gain of one ranked list.

    Binary relevance with 1/log2(p + 1) discounts at 1-based positions; the
    ideal DCG places min(k, |relevant|) hits at the top. Returns 0 when
    nothing is relevant.
    """
    if k < 1:
        raise ValueError(f"cutoff must be >= 1, got {k}")
    relevant = set(relevant)
    if not relevant:
        return 0.0
    dcg = 0.0
    for pos, item in enumerate(ranked[:k], start=1):
        if item in relevant:
            dcg += 1.0 / np.log2(pos + 1)
    ideal = sum(1.0 / np.log2(pos + 1) for pos in range(1, min(k, len(relevant)) + 1))
    return float(dcg / ideal)


def map_at_k(ranked, relevant, k: int) -> float:
    """Average precision at k for one ranked list.

    Sum of precision@p over hit positions p <= k, normalized by
    min(k, |relevant|) so a perfect ranking scores 1.0 at every cutoff.
    The evaluation report averages this over users (MAP).
    """
    if k < 1:
        raise ValueError(f"cutoff must be >= 1, got {k}")
    relevant = set(relevant)
    if not relevant:
        return 0.0
    hits = 0
    score = 0.0
    for pos, item in enumerate(ranked[:k], start=1):
        if item in relevant:
            hits += 1
            score += hits / pos
    return float(score / min(k, len(relevant)))


@dataclass
class BucketReport:
    lo: float
    hi: float
    count: int
    ndcg: dict[int, float | None]
    map: dict[int, float | None]

    @property
    def label(self) -> str:
        hi = "inf" if np.isinf(self.hi) else f"{int(self.hi)}"
        return f"[{int(self.lo)},{hi})"


@dataclass
class EvalReport:
    cutoffs: tuple[int, ...]
    ndcg: dict[int, float]
    map: dict[int, float]
    n_users_evaluated: int
    buckets: list[BucketReport] = field(default_factory=list)


@dataclass
class SimilarityStats:
    mean: float
    std: float
    n_pairs: int


def rank_items(scores: np.ndarray, exclude: np.ndarray, n: int | None = None) -> np.ndarray:
    """Rank one score vector descending, excluded items removed, ties by id.

    ``exclude`` holds item indices that must never appear (already-seen
    items). Returns at most ``n`` item ids, fewer when not enough candidates
    remain.
    """
    scores = np.asarray(scores, dtype=np.float64).copy()
    scores[np.asarray(exclude, dtype=np.int64)] = -np.inf
    order = np.argsort(-scores, kind="stable")
    ranked = order[np.isfinite(scores[order])]
    return ranked if n is None else ranked[:n]


def _per_user_metrics(model, train: Urm, test: Urm, cutoffs, batch_users: int = 1024):
    """Yield (user, train_len, {cutoff: (ndcg, ap)}) for users with test items."""
    if train.n_users != test.n_users or train.n_items != test.n_items:
        raise ValueError(
            f"train {train.matrix.shape} and test {test.matrix.shape} describe different universes"
        )
    kmax = max(cutoffs)
    test_counts = np.diff(test.matrix.indptr)
    users = np.flatnonzero(test_counts > 0)
    for start in range(0, len(users), batch_users):
        chunk = users[start : start + batch_users]
        scores = np.asarray(model.score_users(chunk), dtype=np.float64)
        if not np.all(np.isfinite(scores)):
            raise ValueError("model produced non-finite scores")
        for row, u in enumerate(chunk):
            u = int(u)
            seen = train.row_items(u)
            s = scores[row].copy()
            s[seen] = -np.inf
            order = np.argsort(-s, kind="stable")[: kmax + len(seen)]
            top = order[np.isfinite(s[order])][:kmax]
            relevant = test.row_items(u)
            rel_set = set(relevant.tolist())
            hit = np.isin(top, relevant)
            positions = np.arange(1, len(top) + 1, dtype=np.float64)
            gains = hit / np.log2(positions + 1)
            precisions = np.cumsum(hit) / positions
            per_cutoff = {}
            for k in cutoffs:
                n_rel = min(k, len(rel_set))
                ideal = np.sum(1.0 / np.log2(np.arange(1, n_rel + 1) + 1))
                ndcg = float(np.sum(gains[:k]) / ideal) if ideal > 0 else 0.0
                ap = float(np.sum((precisions * hit)[:k]) / n_rel) if n_rel > 0 else 0.0
                per_cutoff[k] = (ndcg, ap)
            yield u, int(train.matrix.indptr[u + 1] - train.matrix.indptr[u]), per_cutoff


def evaluate(model, train: Urm, test: Urm, cutoffs=(5, 20), batch_users: int = 1024) -> EvalReport:
    """Mean NDCG and MAP over all users holding at least one test item.

    ``model`` is anything exposing ``score_users(user_ids) -> (len, n_items)``
    with finite entries. Items in the user's train row are excluded before
    ranking. Summation is compensated so the report does not depend on
    evaluation order.
    """
    cutoffs = tuple(int(k) for k in cutoffs)
    if any(k < 1 for k in cutoffs):
        raise ValueError(f"cutoffs must be >= 1, got {cutoffs}")
    sums = {k: np.zeros(2, dtype=np.float64) for k in cutoffs}
    comps = {k: np.zeros(2, dtype=np.float64) for k in cutoffs}
    n = 0
    for _, _, per_cutoff in _per_user_metrics(model, train, test, cutoffs, batch_users):
        n += 1
        for k, pair in per_cutoff.items():
            _kahan_add(sums[k], comps[k], pair)
    if n == 0:
        return EvalReport(cutoffs=cutoffs, ndcg={k: 0.0 for k in cutoffs}, map={k: 0.0 for k in cutoffs}, n_users_evaluated=0)
    return EvalReport(
        cutoffs=cutoffs,
        ndcg={k: float(sums[k][0] / n) for k in cutoffs},
        map={k: float(sums[k][1] / n) for k in cutoffs},
        n_users_evaluated=n,
    )


def _kahan_add(total: np.ndarray, comp: np.ndarray, values) -> None:
    y = np.asarray(values, dtype=np.float64) - comp
    t = total + y
    comp[:] = (t - total) - y
    total[:] = t


def evaluate_by_profile_length(
    model,
    train: Urm,
    test: Urm,
    bucket_edges=(2, 25, 100, 500),
    cutoffs=(5, 20),
    batch_users: int = 1024,
) -> EvalReport:
    """Global report plus per-bucket reports keyed by train-profile length.

    Edges define buckets [e1, e2), ..., [eN, inf). Evaluated users whose
    train profile is shorter than the first edge are counted in the first
    bucket so that bucket counts always sum to the evaluated-user count.
    """
    edges = tuple(float(e) for e in bucket_edges)
    if any(b <= a for a, b in zip(edges, edges[1:])) or not edges:
        raise ValueError(f"bucket edges must be strictly increasing, got {bucket_edges}")
    cutoffs = tuple(int(k) for k in cutoffs)
    bounds = edges + (np.inf,)
    n_buckets = len(edges)
    counts = np.zeros(n_buckets, dtype=np.int64)
    bucket_sums = [{k: np.zeros(2) for k in cutoffs} for _ in range(n_buckets)]
    global_sums = {k: np.zeros(2) for k in cutoffs}
    n = 0
    for _, train_len, per_cutoff in _per_user_metrics(model, train, test, cutoffs, batch_users):
        b = int(np.searchsorted(edges, train_len, side="right")) - 1
        b = max(b, 0)
        counts[b] += 1
        n += 1
        for k, pair in per_cutoff.items():
            bucket_sums[b][k] += np.asarray(pair)
            global_sums[k] += np.asarray(pair)
    buckets = []
    for b in range(n_buckets):
        c = int(counts[b])
        buckets.append(
            BucketReport(
                lo=bounds[b],
                hi=bounds[b + 1],
                count=c,
                ndcg={k: (float(bucket_sums[b][k][0] / c) if c else None) for k in cutoffs},
                map={k: (float(bucket_sums[b][k][1] / c) if c else None) for k in cutoffs},
            )
        )
    return EvalReport(
        cutoffs=cutoffs,
        ndcg={k: (float(global_sums[k][0] / n) if n else 0.0) for k in cutoffs},
        map={k: (float(global_sums[k][1] / n) if n else 0.0) for k in cutoffs},
        n_users_evaluated=n,
        buckets=buckets,
    )


def similarity_stats(profiles: np.ndarray, sample: int = 200_000, seed: int = 0) -> SimilarityStats:
    """Mean and standard deviation of pairwise cosine similarity between rows.

    All pairs are used when there are at most 10^6 of them, otherwise a
    seeded sample of ``sample`` distinct pairs. Rows with zero norm have
    similarity 0 against everything.
    """
    profiles = np.asarray(profiles, dtype=np.float64)
    n = profiles.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 profiles, got {n}")
    norms = np.linalg.norm(profiles, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = profiles / safe[:, None]
    total_pairs = n * (n - 1) // 2
    if total_pairs <= 1_000_000:
        gram = unit @ unit.T
        iu = np.triu_indices(n, k=1)
        sims = gram[iu]
        n_pairs = total_pairs
    else:
        rng = np.random.default_rng(seed)
        left = rng.integers(0, n, size=sample)
        right = rng.integers(0, n - 1, size=sample)
        right = np.where(right >= left, right + 1, right)
        sims = np.einsum("ij,ij->i", unit[left], unit[right])
        n_pairs = sample
    return SimilarityStats(mean=float(np.mean(sims)), std=float(np.std(sims)), n_pairs=int(n_pairs))


def report_to_dict(report: EvalReport) -> dict:
    out = {
        "cutoffs": list(report.cutoffs),
        "n_users_evaluated": report.n_users_evaluated,
        "ndcg": {str(k): report.ndcg[k] for k in report.cutoffs},
        "map": {str(k): report.map[k] for k in report.cutoffs},
    }
    if report.buckets:
        out["buckets"] = [
            {
                "range": b.label,
                "count": b.count,
                "ndcg": {str(k): b.ndcg[k] for k in report.cutoffs},
                "map": {str(k): b.map[k] for k in report.cutoffs},
            }
            for b in report.buckets
        ]
    return out


def report_to_csv_rows(report: EvalReport, algorithm: str) -> list[str]:
    """Rows of ``algorithm,cutoff,metric,value`` (header excluded)."""
    rows = []
    for k in report.cutoffs:
        rows.append(f"{algorithm},{k},ndcg,{report.ndcg[k]:.6f}")
        rows.append(f"{algorithm},{k},map,{report.map[k]:.6f}")
    return rows
