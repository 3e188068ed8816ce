"""Implicit-feedback dataset handling.

Raw rating/listening files are parsed into interaction logs, binarized into a
compressed sparse row user rating matrix (URM), and split per user into
train/test plus the inner subtrain/validation/early-stopping sets used for
hyperparameter tuning. Everything downstream consumes the ``Urm`` type.
"""

from __future__ import annotations

import json
import struct
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .seeding import substream

__all__ = [
    "ParseError",
    "InteractionLog",
    "Urm",
    "DatasetStats",
    "SplitBundle",
    "parse_movielens_1m",
    "parse_hetrec",
    "parse_lastfm",
    "build_urm",
    "split",
    "transpose",
    "stats",
    "save_urm",
    "load_urm",
    "save_split",
    "load_split",
    "PARSERS",
]


class ParseError(ValueError):
    """Malformed input file; message carries path and line number."""


@dataclass
class InteractionLog:
    """Raw (user, item, weight) triples straight from a dataset file."""

    triples: list[tuple[str, str, float]]
    source: str

    def __len__(self) -> int:
        return len(self.triples)


def parse_movielens_1m(path: str | Path) -> InteractionLog:
    """Parse ``UserID::MovieID::Rating::Timestamp`` lines (no header).

    The rating is carried as the triple weight and discarded later when the
    URM is binarized.
    """
    triples: list[tuple[str, str, float]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split("::")
            if len(fields) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 '::'-separated fields")
            try:
                weight = float(fields[2])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad rating {fields[2]!r}") from exc
            triples.append((fields[0], fields[1], weight))
    return InteractionLog(triples=triples, source="ml1m")


def _parse_tsv(path: str | Path, source: str) -> InteractionLog:
    # One header line, then userID / itemID / weight in the first 3 columns.
    triples: list[tuple[str, str, float]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if lineno == 1:
                continue
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) < 3:
                raise ParseError(f"{path}:{lineno}: expected >= 3 tab-separated fields")
            try:
                weight = float(fields[2])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad weight {fields[2]!r}") from exc
            triples.append((fields[0], fields[1], weight))
    return InteractionLog(triples=triples, source=source)


def parse_hetrec(path: str | Path) -> InteractionLog:
    """Parse the MovieLens HetRec ratings file (tab-separated, one header line)."""
    return _parse_tsv(path, "hetrec")


def parse_lastfm(path: str | Path) -> InteractionLog:
    """Parse the LastFM user/artist/listeningCount file (tab-separated, one header line)."""
    return _parse_tsv(path, "lastfm")


PARSERS = {
    "ml1m": parse_movielens_1m,
    "hetrec": parse_hetrec,
    "lastfm": parse_lastfm,
}


class Urm:
    """Binary user rating matrix in canonical CSR form plus raw-id maps.

    Canonical means: sorted, strictly increasing column indices within each
    row, no duplicates, every stored value exactly 1.0. Instances are treated
    as immutable after construction and are safe to share across threads.
    """

    def __init__(self, matrix: sp.spmatrix, user_ids, item_ids):
        matrix = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
        matrix.eliminate_zeros()
        matrix.sum_duplicates()
        matrix.sort_indices()
        matrix.data[:] = 1.0
        if matrix.shape[0] != len(user_ids):
            raise ValueError(
                f"{len(user_ids)} user ids for {matrix.shape[0]} rows"
            )
        if matrix.shape[1] != len(item_ids):
            raise ValueError(
                f"{len(item_ids)} item ids for {matrix.shape[1]} columns"
            )
        self.matrix = matrix
        self.user_ids = tuple(str(u) for u in user_ids)
        self.item_ids = tuple(str(i) for i in item_ids)
        if len(set(self.user_ids)) != len(self.user_ids):
            raise ValueError("duplicate raw user ids")
        if len(set(self.item_ids)) != len(self.item_ids):
            raise ValueError("duplicate raw item ids")
        self._user_index: dict[str, int] | None = None
        self._item_index: dict[str, int] | None = None

    @property
    def n_users(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_items(self) -> int:
        return self.matrix.shape[1]

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)

    @property
    def user_index(self) -> dict[str, int]:
        if self._user_index is None:
            self._user_index = {u: i for i, u in enumerate(self.user_ids)}
        return self._user_index

    @property
    def item_index(self) -> dict[str, int]:
        if self._item_index is None:
            self._item_index = {it: i for i, it in enumerate(self.item_ids)}
        return self._item_index

    def row_items(self, user: int) -> np.ndarray:
        """Column indices of the items ``user`` interacted with."""
        lo, hi = self.matrix.indptr[user], self.matrix.indptr[user + 1]
        return self.matrix.indices[lo:hi].astype(np.int64)

    def rows_dense(self, users) -> np.ndarray:
        """Dense float64 profile rows for a batch of users."""
        return np.asarray(self.matrix[np.asarray(users, dtype=np.int64)].todense(), dtype=np.float64)

    def pairs(self) -> set[tuple[int, int]]:
        """All (user, item) interactions as a set of dense index pairs."""
        coo = self.matrix.tocoo()
        return set(zip(coo.row.tolist(), coo.col.tolist()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Urm):
            return NotImplemented
        return (
            self.user_ids == other.user_ids
            and self.item_ids == other.item_ids
            and self.matrix.shape == other.matrix.shape
            and np.array_equal(self.matrix.indptr, other.matrix.indptr)
            and np.array_equal(self.matrix.indices, other.matrix.indices)
        )


@dataclass
class DatasetStats:
    interactions: int
    users: int
    items: int
    sparsity: float  # percent, rounded to 2 decimals

    def format(self) -> str:
        return f"{self.interactions} {self.users} {self.items} {self.sparsity:.2f}%"


def build_urm(log: InteractionLog, min_interactions: int = 2) -> Urm:
    """Binarize a log into a URM, dropping users with too few distinct items.

    Duplicate (user, item) pairs collapse to a single interaction. Dense ids
    are assigned by lexicographic order of the raw id strings so the matrix
    does not depend on file order. Items left without any interaction after
    the user filter get no column.
    """
    if not log.triples:
        raise ValueError(f"empty interaction log from {log.source!r}")
    pairs = {(u, i) for u, i, _ in log.triples}
    per_user: dict[str, int] = defaultdict(int)
    for u, _ in pairs:
        per_user[u] += 1
    kept_users = {u for u, c in per_user.items() if c >= min_interactions}
    if not kept_users:
        raise ValueError(
            f"no user has >= {min_interactions} interactions in {log.source!r}"
        )
    kept_pairs = [(u, i) for u, i in pairs if u in kept_users]
    user_ids = sorted(kept_users)
    item_ids = sorted({i for _, i in kept_pairs})
    uidx = {u: j for j, u in enumerate(user_ids)}
    iidx = {i: j for j, i in enumerate(item_ids)}
    rows: list[list[int]] = [[] for _ in user_ids]
    for u, i in kept_pairs:
        rows[uidx[u]].append(iidx[i])
    return Urm(_csr_from_rows(rows, len(item_ids)), user_ids, item_ids)


def _csr_from_rows(rows: list[list[int]], n_items: int) -> sp.csr_matrix:
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    for u, items in enumerate(rows):
        indptr[u + 1] = indptr[u] + len(items)
    indices = np.empty(indptr[-1], dtype=np.int64)
    for u, items in enumerate(rows):
        indices[indptr[u] : indptr[u + 1]] = sorted(items)
    data = np.ones(indptr[-1], dtype=np.float64)
    return sp.csr_matrix((data, indices, indptr), shape=(len(rows), n_items))


def transpose(urm: Urm) -> Urm:
    """Swap the roles of users and items; an involution."""
    return Urm(urm.matrix.T.tocsr(), urm.item_ids, urm.user_ids)


def stats(urm: Urm) -> DatasetStats:
    cells = urm.n_users * urm.n_items
    sparsity = 0.0 if cells == 0 else 100.0 * (1.0 - urm.nnz / cells)
    return DatasetStats(
        interactions=urm.nnz,
        users=urm.n_users,
        items=urm.n_items,
        sparsity=round(sparsity, 2),
    )


@dataclass
class SplitBundle:
    """All five interaction sets of the splitting pipeline.

    train/test partition the full URM; subtrain/validation/earlystop
    partition train. All matrices share the parent's id maps and shape.
    """

    train: Urm
    test: Urm
    subtrain: Urm
    validation: Urm
    earlystop: Urm
    seed: int


def split(urm: Urm, test_ratio: float = 0.2, seed: int = 0) -> SplitBundle:
    """Seeded per-user holdout split.

    Per user, ceil(test_ratio * n) interactions go to test (clamped so at
    least one interaction stays in train). Within each user's train share,
    validation and early-stopping each take 10 percent (at least 1 item) when
    the user keeps at least one subtrain item afterwards; users with fewer
    than 3 train items contribute nothing to the inner sets.
    """
    if not 0.0 < test_ratio < 1.0:
        raise ValueError(f"test_ratio must be in (0, 1), got {test_ratio}")
    row_counts = np.diff(urm.matrix.indptr)
    if urm.n_users == 0 or row_counts.min() < 2:
        raise ValueError("split requires every user to have >= 2 interactions")
    rng = substream(seed, "split")
    buckets: dict[str, list[list[int]]] = {
        name: [[] for _ in range(urm.n_users)]
        for name in ("train", "test", "subtrain", "validation", "earlystop")
    }
    for u in range(urm.n_users):
        items = urm.row_items(u)
        n = len(items)
        n_test = int(np.ceil(test_ratio * n))
        n_test = max(1, min(n_test, n - 1))
        perm = rng.permutation(items)
        test_part = perm[:n_test]
        train_part = perm[n_test:]
        n_train = len(train_part)
        if n_train >= 3:
            n_val = max(1, n_train // 10)
            n_es = max(1, n_train // 10)
        else:
            n_val = n_es = 0
        buckets["test"][u] = test_part.tolist()
        buckets["train"][u] = train_part.tolist()
        buckets["validation"][u] = train_part[:n_val].tolist()
        buckets["earlystop"][u] = train_part[n_val : n_val + n_es].tolist()
        buckets["subtrain"][u] = train_part[n_val + n_es :].tolist()
    mats = {
        name: Urm(_csr_from_rows(rows, urm.n_items), urm.user_ids, urm.item_ids)
        for name, rows in buckets.items()
    }
    return SplitBundle(seed=seed, **mats)


# --- binary cache ----------------------------------------------------------
#
# Layout (all little-endian): magic "URMB", version u32 = 1, n_users u64,
# n_items u64, nnz u64, indptr as u64[n_users + 1], indices as u32[nnz],
# then the raw-id table: user ids followed by item ids, each as a u32 byte
# length prefix plus UTF-8 bytes.

_URM_MAGIC = b"URMB"
_URM_VERSION = 1


def save_urm(urm: Urm, path: str | Path) -> None:
    chunks = [
        _URM_MAGIC,
        struct.pack("<I", _URM_VERSION),
        struct.pack("<QQQ", urm.n_users, urm.n_items, urm.nnz),
        np.asarray(urm.matrix.indptr, dtype="<u8").tobytes(),
        np.asarray(urm.matrix.indices, dtype="<u4").tobytes(),
    ]
    for raw in urm.user_ids + urm.item_ids:
        encoded = raw.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
    Path(path).write_bytes(b"".join(chunks))


def load_urm(path: str | Path) -> Urm:
    blob = Path(path).read_bytes()
    if blob[:4] != _URM_MAGIC:
        raise ValueError(f"{path}: not a URM cache (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != _URM_VERSION:
        raise ValueError(f"{path}: unsupported cache version {version}")
    n_users, n_items, nnz = struct.unpack_from("<QQQ", blob, 8)
    offset = 8 + 24
    indptr = np.frombuffer(blob, dtype="<u8", count=n_users + 1, offset=offset)
    offset += indptr.nbytes
    indices = np.frombuffer(blob, dtype="<u4", count=nnz, offset=offset)
    offset += indices.nbytes
    ids: list[str] = []
    for _ in range(n_users + n_items):
        (length,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        ids.append(blob[offset : offset + length].decode("utf-8"))
        offset += length
    matrix = sp.csr_matrix(
        (np.ones(nnz, dtype=np.float64), indices.astype(np.int64), indptr.astype(np.int64)),
        shape=(n_users, n_items),
    )
    return Urm(matrix, ids[:n_users], ids[n_users:])


_SPLIT_PARTS = ("train", "test", "subtrain", "validation", "earlystop")


def save_split(bundle: SplitBundle, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in _SPLIT_PARTS:
        save_urm(getattr(bundle, name), out / f"{name}.urm")
    (out / "split.json").write_text(
        json.dumps({"seed": bundle.seed}, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_split(split_dir: str | Path) -> SplitBundle:
    d = Path(split_dir)
    meta = json.loads((d / "split.json").read_text(encoding="utf-8"))
    parts = {name: load_urm(d / f"{name}.urm") for name in _SPLIT_PARTS}
    return SplitBundle(seed=int(meta["seed"]), **parts)
