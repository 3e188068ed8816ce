"""Adversarially trained matrix factorization for top-N recommendation.

A matrix-factorization generator learns user and item latent factors by
playing against an autoencoder whose reconstruction energy separates real
user profiles from generated ones; a feature-matching loss ties each
generated profile to its own user. The package ships the trainable
recommender, classic baselines, ranking metrics, dataset plumbing and a
reproducible experiment CLI.
"""

from .baselines import ItemKNNCosine, P3Alpha, PureSVD, TopPopular, randomized_svd
from .data import (
    DatasetStats,
    InteractionLog,
    SplitBundle,
    Urm,
    build_urm,
    load_split,
    load_urm,
    parse_hetrec,
    parse_lastfm,
    parse_movielens_1m,
    save_split,
    save_urm,
    split,
    stats,
    transpose,
)
from .evaluation import (
    EvalReport,
    SimilarityStats,
    evaluate,
    evaluate_by_profile_length,
    map_at_k,
    ndcg_at_k,
    similarity_stats,
)
from .search import SearchSpace, TrialRecord, random_search, sample_config
from .training import GANMF, DivergenceError, TrainConfig, TrainHistory, recommend, train

__version__ = "0.1.0"

__all__ = [
    "GANMF",
    "TopPopular",
    "PureSVD",
    "ItemKNNCosine",
    "P3Alpha",
    "randomized_svd",
    "Urm",
    "InteractionLog",
    "DatasetStats",
    "SplitBundle",
    "parse_movielens_1m",
    "parse_hetrec",
    "parse_lastfm",
    "build_urm",
    "split",
    "stats",
    "transpose",
    "save_urm",
    "load_urm",
    "save_split",
    "load_split",
    "evaluate",
    "evaluate_by_profile_length",
    "ndcg_at_k",
    "map_at_k",
    "similarity_stats",
    "EvalReport",
    "SimilarityStats",
    "SearchSpace",
    "TrialRecord",
    "random_search",
    "sample_config",
    "TrainConfig",
    "TrainHistory",
    "train",
    "recommend",
    "DivergenceError",
    "__version__",
]
