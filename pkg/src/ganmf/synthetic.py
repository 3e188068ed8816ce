"""Small synthetic interaction sets with known structure, for tests and demos.

The two-block dataset puts each user inside exactly one fully dense
user-item block, so the optimal recommendations are known: held-out items
from the user's own block must outrank everything from the other block.
"""

from __future__ import annotations

from pathlib import Path

from .data import InteractionLog, Urm, build_urm

__all__ = ["block_log", "block_urm", "write_block_tsv"]


def block_log(n_users: int = 200, n_items: int = 100, n_blocks: int = 2) -> InteractionLog:
    """Fully dense disjoint blocks: user u interacts with every item of its block."""
    if n_users % n_blocks or n_items % n_blocks:
        raise ValueError("users and items must divide evenly into blocks")
    users_per = n_users // n_blocks
    items_per = n_items // n_blocks
    triples = []
    for u in range(n_users):
        b = u // users_per
        for i in range(b * items_per, (b + 1) * items_per):
            triples.append((f"u{u:05d}", f"i{i:05d}", 1.0))
    return InteractionLog(triples=triples, source="synthetic-blocks")


def block_urm(n_users: int = 200, n_items: int = 100, n_blocks: int = 2) -> Urm:
    return build_urm(block_log(n_users, n_items, n_blocks), min_interactions=2)


def write_block_tsv(path: str | Path, n_users: int = 200, n_items: int = 100, n_blocks: int = 2) -> None:
    """Write the block dataset in the tab-separated format the CLI can ingest."""
    log = block_log(n_users, n_items, n_blocks)
    lines = ["userID\titemID\tweight"]
    lines += [f"{u}\t{i}\t{int(w)}" for u, i, w in log.triples]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
