"""Reference recommenders: popularity, truncated SVD, item KNN, 2-step walks.

Every estimator follows the same contract: ``fit(X)`` on a binary URM, then
``score_users(users)`` returns a dense (len(users), n_items) float64 score
matrix with finite entries. Fitting is deterministic given the constructor
arguments.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator

from .data import Urm
from .evaluation import rank_items

__all__ = [
    "TopPopular",
    "PureSVD",
    "ItemKNNCosine",
    "P3Alpha",
    "randomized_svd",
]


def _as_csr(X) -> sp.csr_matrix:
    if isinstance(X, Urm):
        return X.matrix
    return sp.csr_matrix(X, dtype=np.float64)


class _RecommenderMixin:
    def recommend(self, user: int, n: int = 10, exclude=None) -> np.ndarray:
        """Top-n items for one user, optionally excluding already-seen ones."""
        scores = self.score_users([user])[0]
        seen = self._train[user].indices if exclude is None else exclude
        return rank_items(scores, seen, n)


class TopPopular(BaseEstimator, _RecommenderMixin):
    """Non-personalized: every user gets items ranked by interaction count."""

    def fit(self, X, y=None):
        mat = _as_csr(X)
        self._train = mat
        self.item_counts_ = np.asarray(mat.sum(axis=0)).ravel().astype(np.float64)
        return self

    def score_users(self, users) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        return np.tile(self.item_counts_, (len(users), 1))


def randomized_svd(
    a, k: int, n_oversamples: int = 10, n_power: int = 4, seed: int = 0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Truncated SVD via a randomized range finder with power iterations.

    QR re-orthonormalization after every product keeps the subspace stable
    on sparse, badly conditioned inputs. Returns (U, s, Vt) with k columns,
    singular values in descending order.
    """
    m, n = a.shape
    if not 1 <= k <= min(m, n):
        raise ValueError(f"k must be in [1, {min(m, n)}], got {k}")
    rng = np.random.default_rng(seed)
    p = min(k + n_oversamples, min(m, n))
    q = rng.standard_normal((n, p))
    y = np.asarray(a @ q)
    q, _ = np.linalg.qr(y)
    for _ in range(n_power):
        q, _ = np.linalg.qr(np.asarray(a.T @ q))
        q, _ = np.linalg.qr(np.asarray(a @ q))
    b = np.asarray(q.T @ a)
    ub, s, vt = np.linalg.svd(b, full_matrices=False)
    u = q @ ub
    return u[:, :k], s[:k], vt[:k]


class PureSVD(BaseEstimator, _RecommenderMixin):
    """Rank-k reconstruction of the URM as the score matrix."""

    def __init__(self, n_factors: int = 50, random_state: int = 0):
        self.n_factors = n_factors
        self.random_state = random_state

    def fit(self, X, y=None):
        mat = _as_csr(X)
        self._train = mat
        u, s, vt = randomized_svd(mat, self.n_factors, seed=self.random_state)
        self.user_factors_ = u * s
        self.item_factors_ = vt.T
        self.singular_values_ = s
        return self

    def score_users(self, users) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        return self.user_factors_[users] @ self.item_factors_.T


def _topk_rows_csr(rows: list[tuple[np.ndarray, np.ndarray]], n_cols: int, k: int) -> sp.csr_matrix:
    """Assemble a CSR matrix keeping only the k largest entries of each row."""
    indptr = [0]
    indices: list[np.ndarray] = []
    data: list[np.ndarray] = []
    for cols, vals in rows:
        if len(vals) > k:
            keep = np.argpartition(-vals, k - 1)[:k]
            cols, vals = cols[keep], vals[keep]
        order = np.argsort(cols)
        indices.append(cols[order])
        data.append(vals[order])
        indptr.append(indptr[-1] + len(cols))
    return sp.csr_matrix(
        (
            np.concatenate(data) if data else np.empty(0),
            np.concatenate(indices) if indices else np.empty(0, dtype=np.int64),
            np.asarray(indptr, dtype=np.int64),
        ),
        shape=(len(rows), n_cols),
    )


class ItemKNNCosine(BaseEstimator, _RecommenderMixin):
    """Item-item cosine similarity with shrinkage.

    sim(i, j) = (c_i . c_j) / (||c_i|| ||c_j|| + shrink) on item column
    vectors, diagonal zeroed, each row truncated to the ``neighborhood``
    largest entries. Scores are the user's history row times sim transposed.
    """

    def __init__(self, neighborhood: int = 100, shrink: float = 0.0):
        self.neighborhood = neighborhood
        self.shrink = shrink

    def fit(self, X, y=None):
        if self.neighborhood < 1:
            raise ValueError(f"neighborhood must be >= 1, got {self.neighborhood}")
        if self.shrink < 0:
            raise ValueError(f"shrink must be >= 0, got {self.shrink}")
        mat = _as_csr(X)
        self._train = mat
        csc = mat.tocsc()
        norms = np.sqrt(np.asarray(csc.power(2).sum(axis=0)).ravel())
        n_items = mat.shape[1]
        item_user = csc.T.tocsr()
        rows = []
        block = 1024
        for start in range(0, n_items, block):
            stop = min(start + block, n_items)
            gram = (item_user[start:stop] @ csc).tocsr()
            for local, i in enumerate(range(start, stop)):
                lo, hi = gram.indptr[local], gram.indptr[local + 1]
                cols = gram.indices[lo:hi].astype(np.int64)
                dots = gram.data[lo:hi]
                denom = norms[i] * norms[cols] + self.shrink
                with np.errstate(divide="ignore", invalid="ignore"):
                    vals = np.where(denom > 0, dots / denom, 0.0)
                keep = (cols != i) & (vals > 0)
                rows.append((cols[keep], vals[keep]))
        self.similarity_ = _topk_rows_csr(rows, n_items, self.neighborhood)
        return self

    def score_users(self, users) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        return np.asarray((self._train[users] @ self.similarity_.T).todense(), dtype=np.float64)


class P3Alpha(BaseEstimator, _RecommenderMixin):
    """Item-item similarity from a 2-step random walk, transition probs raised to alpha.

    S = P_iu @ P_ui where P_ui row-normalizes the URM and P_iu its
    transpose; zero-degree users or items simply contribute zero rows.
    Diagonal zeroed and rows truncated like the KNN model.
    """

    def __init__(self, neighborhood: int = 100, alpha: float = 1.0):
        self.neighborhood = neighborhood
        self.alpha = alpha

    def fit(self, X, y=None):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.neighborhood < 1:
            raise ValueError(f"neighborhood must be >= 1, got {self.neighborhood}")
        mat = _as_csr(X)
        self._train = mat
        p_ui = _row_normalized_power(mat, self.alpha)
        p_iu = _row_normalized_power(mat.T.tocsr(), self.alpha)
        n_items = mat.shape[1]
        rows = []
        block = 1024
        for start in range(0, n_items, block):
            stop = min(start + block, n_items)
            walk = (p_iu[start:stop] @ p_ui).tocsr()
            for local, i in enumerate(range(start, stop)):
                lo, hi = walk.indptr[local], walk.indptr[local + 1]
                cols = walk.indices[lo:hi].astype(np.int64)
                vals = walk.data[lo:hi]
                keep = (cols != i) & (vals > 0)
                rows.append((cols[keep], vals[keep]))
        self.similarity_ = _topk_rows_csr(rows, n_items, self.neighborhood)
        return self

    def score_users(self, users) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        return np.asarray((self._train[users] @ self.similarity_.T).todense(), dtype=np.float64)


def _row_normalized_power(mat: sp.csr_matrix, alpha: float) -> sp.csr_matrix:
    out = mat.tocsr(copy=True).astype(np.float64)
    degrees = np.asarray(out.sum(axis=1)).ravel()
    inv = np.where(degrees > 0, 1.0 / np.where(degrees > 0, degrees, 1.0), 0.0)
    out.data = out.data * np.repeat(inv, np.diff(out.indptr))
    if alpha != 1.0:
        out.data = np.power(out.data, alpha)
    return out
