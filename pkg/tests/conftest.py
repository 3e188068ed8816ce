from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from ganmf.data import Urm, split
from ganmf.synthetic import block_urm
from ganmf.training import GANMF


def random_urm(rng: np.random.Generator, n_users: int, n_items: int, min_per_user: int = 2, max_per_user: int | None = None) -> Urm:
    """Random binary URM where every user has at least ``min_per_user`` items."""
    max_per_user = max_per_user or n_items
    rows = []
    for _ in range(n_users):
        n = int(rng.integers(min_per_user, min(max_per_user, n_items) + 1))
        rows.append(np.sort(rng.choice(n_items, size=n, replace=False)))
    indptr = np.concatenate([[0], np.cumsum([len(r) for r in rows])])
    indices = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    mat = sp.csr_matrix(
        (np.ones(len(indices)), indices, indptr), shape=(n_users, n_items)
    )
    return Urm(mat, [f"u{i:04d}" for i in range(n_users)], [f"i{j:04d}" for j in range(n_items)])


@pytest.fixture(scope="session")
def block_bundle():
    return split(block_urm(), test_ratio=0.2, seed=11)


_MODEL_CACHE: dict[tuple, GANMF] = {}


def fit_block_model(bundle, *, disc="autoencoder", seed=1, epochs=100, alpha=0.25, mode="user", fit_on="train", eval_every=0, patience=5) -> GANMF:
    """Train (and memoize) a desk-scale model on the block dataset."""
    key = (disc, seed, epochs, alpha, mode, fit_on, eval_every, patience)
    if key not in _MODEL_CACHE:
        est = GANMF(
            n_factors=8,
            coding_dim=16,
            batch_size=64,
            margin=1,
            alpha=alpha,
            lr_d=5e-3,
            lr_g=5e-3,
            reg_d=1e-6,
            epochs=epochs,
            mode=mode,
            discriminator=disc,
            eval_every=eval_every,
            patience=patience,
            random_state=seed,
        )
        earlystop = bundle.earlystop if eval_every else None
        est.fit(getattr(bundle, fit_on), earlystop=earlystop)
        _MODEL_CACHE[key] = est
    return _MODEL_CACHE[key]
