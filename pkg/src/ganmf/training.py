"""Alternating adversarial training and the user-facing estimator.

One epoch runs ceil(n / batch) iterations; each iteration samples a batch of
conditioning ids for a discriminator Adam step, then an independently
sampled batch for a generator Adam step. Batches are contiguous slices of a
per-epoch seeded permutation, shuffled separately for the two players, so
every id is visited once per epoch by each.

Item-based training transposes the matrix first and conditions on items;
user u's item scores are then read across the generated item profiles at
coordinate u.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from . import model as M
from .data import Urm, transpose
from .evaluation import evaluate, rank_items
from .numerics import AdamState, adam_step
from .seeding import substream

__all__ = [
    "TrainConfig",
    "TrainHistory",
    "EpochRecord",
    "EvalRecord",
    "DivergenceError",
    "sample_batches",
    "train",
    "recommend",
    "GANMF",
]

BATCH_SIZES = (64, 128, 256, 512, 1024)


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss; carries the offending epoch."""

    def __init__(self, epoch: int, which: str):
        super().__init__(f"non-finite {which} loss at epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    """All training hyperparameters; ranges are enforced at construction.

    alpha accepts the full [0, 1] interval so the feature-matching sweep and
    the no-matching variant are expressible; the tuner's sampling prior is
    narrower (see the search space).
    """

    epochs_max: int = 300
    k: int = 128
    coding_dim: int = 256
    batch_size: int = 512
    margin: int = 1
    alpha: float = 0.25
    lr_d: float = 1e-3
    lr_g: float = 1e-3
    lambda_d: float = 1e-6
    lambda_g: float = 0.0
    mode: str = "user"
    disc_type: str = "autoencoder"
    seed: int = 0
    eval_every: int = 5
    patience: int = 5

    def __post_init__(self):
        checks = [
            (0 <= self.epochs_max <= 300, f"epochs_max in [0, 300], got {self.epochs_max}"),
            (1 <= self.k <= 250, f"k in [1, 250], got {self.k}"),
            (4 <= self.coding_dim <= 1024, f"coding_dim in [4, 1024], got {self.coding_dim}"),
            (self.batch_size in BATCH_SIZES, f"batch_size in {BATCH_SIZES}, got {self.batch_size}"),
            (1 <= self.margin <= 10 and int(self.margin) == self.margin, f"margin integer in [1, 10], got {self.margin}"),
            (0.0 <= self.alpha <= 1.0, f"alpha in [0, 1], got {self.alpha}"),
            (1e-4 <= self.lr_d <= 1e-2, f"lr_d in [1e-4, 1e-2], got {self.lr_d}"),
            (1e-4 <= self.lr_g <= 1e-2, f"lr_g in [1e-4, 1e-2], got {self.lr_g}"),
            (1e-6 <= self.lambda_d <= 1e-4, f"lambda_d in [1e-6, 1e-4], got {self.lambda_d}"),
            (self.lambda_g >= 0.0, f"lambda_g must be >= 0, got {self.lambda_g}"),
            (self.mode in ("user", "item"), f"mode is 'user' or 'item', got {self.mode!r}"),
            (self.disc_type in ("autoencoder", "binary"), f"disc_type is 'autoencoder' or 'binary', got {self.disc_type!r}"),
            (self.eval_every >= 0, f"eval_every must be >= 0, got {self.eval_every}"),
            (self.patience >= 1, f"patience must be >= 1, got {self.patience}"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)
        self.margin = int(self.margin)


@dataclass
class EpochRecord:
    epoch: int
    d_loss: M.LossBreakdown
    g_loss: M.LossBreakdown
    wall_clock: float


@dataclass
class EvalRecord:
    epoch: int
    metric: str
    value: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    evals: list[EvalRecord] = field(default_factory=list)

    def log_lines(self) -> list[str]:
        """One JSON object per epoch; timing is deliberately excluded."""
        eval_by_epoch = {e.epoch: e for e in self.evals}
        lines = []
        for rec in self.epochs:
            obj = {
                "epoch": rec.epoch,
                "d_total": rec.d_loss.total,
                "d_adversarial": rec.d_loss.adversarial,
                "d_regularization": rec.d_loss.regularization,
                "g_total": rec.g_loss.total,
                "g_adversarial": rec.g_loss.adversarial,
                "g_feature_matching": rec.g_loss.feature_matching,
                "g_regularization": rec.g_loss.regularization,
            }
            ev = eval_by_epoch.get(rec.epoch)
            if ev is not None:
                obj[ev.metric] = ev.value
            lines.append(json.dumps(obj, sort_keys=True))
        return lines


def sample_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """One epoch's batches: contiguous slices of a fresh seeded permutation."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    perm = rng.permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


class _ScoreAdapter:
    """Wrap a user->scores closure in the interface evaluate() expects."""

    def __init__(self, fn):
        self._fn = fn

    def score_users(self, users):
        return self._fn(users)


def _user_scores(gen: M.GeneratorParams, mode: str, users) -> np.ndarray:
    users = np.asarray(users, dtype=np.int64)
    if mode == "user":
        return gen.sigma[users] @ gen.v.T
    return gen.v[users] @ gen.sigma.T


def train(
    urm_train: Urm,
    earlystop: Urm | None,
    config: TrainConfig,
) -> tuple[M.GeneratorParams, M.DiscriminatorParams | M.BinaryDiscParams, TrainHistory]:
    """Run the alternating loop and return the best-evaluated parameters.

    Early stopping tracks MAP@5 on ``earlystop`` every ``eval_every`` epochs
    and stops after ``patience`` evaluations without improvement; the
    returned parameters are the best evaluated ones, not the last. With
    ``earlystop=None`` or ``eval_every=0`` training always runs to
    ``epochs_max`` and returns the final parameters.
    """
    if urm_train.nnz == 0:
        raise ValueError("cannot train on an empty URM")
    work = transpose(urm_train) if config.mode == "item" else urm_train
    n_cond, n_dims = work.n_users, work.n_items

    init_rng = substream(config.seed, "init")
    gen = M.init_generator(n_cond, n_dims, config.k, init_rng)
    if config.disc_type == "autoencoder":
        disc = M.init_autoencoder(n_dims, config.coding_dim, init_rng)
        disc_arrays = lambda d: (d.w_enc, d.b_enc, d.w_dec, d.b_dec)
    else:
        disc = M.init_binary_disc(n_dims, config.coding_dim, init_rng)
        disc_arrays = lambda d: (d.w_hidden, d.b_hidden, d.w_out, d.b_out)

    adam_disc = [AdamState.for_param(p, config.lr_d) for p in disc_arrays(disc)]
    adam_sigma = AdamState.for_param(gen.sigma, config.lr_g)
    adam_v = AdamState.for_param(gen.v, config.lr_g)
    rng_d = substream(config.seed, "batches-disc")
    rng_g = substream(config.seed, "batches-gen")

    history = TrainHistory()
    best: tuple[float, M.GeneratorParams, object] | None = None
    strikes = 0
    do_earlystop = earlystop is not None and config.eval_every > 0 and earlystop.nnz > 0

    for epoch in range(1, config.epochs_max + 1):
        t0 = time.perf_counter()
        d_batches = sample_batches(n_cond, config.batch_size, rng_d)
        g_batches = sample_batches(n_cond, config.batch_size, rng_g)
        d_last = g_last = None
        for d_ids, g_ids in zip(d_batches, g_batches):
            real = work.rows_dense(d_ids)
            if config.disc_type == "autoencoder":
                d_last, d_grads = M.disc_loss_and_grads(
                    disc, gen, d_ids, real, config.margin, config.lambda_d
                )
                grads = (d_grads.w_enc, d_grads.b_enc, d_grads.w_dec, d_grads.b_dec)
            else:
                d_last, d_grads = M.bin_disc_loss_and_grads(disc, gen, d_ids, real)
                grads = (d_grads.w_hidden, d_grads.b_hidden, d_grads.w_out, d_grads.b_out)
            if not np.isfinite(d_last.total):
                raise DivergenceError(epoch, "discriminator")
            for param, grad, state in zip(disc_arrays(disc), grads, adam_disc):
                adam_step(param, grad, state)

            real_g = work.rows_dense(g_ids)
            if config.disc_type == "autoencoder":
                g_last, g_grads = M.gen_loss_and_grads(
                    disc, gen, g_ids, real_g, config.alpha, config.lambda_g
                )
            else:
                g_last, g_grads = M.bin_gen_loss_and_grads(disc, gen, g_ids, real_g, config.alpha)
            if not np.isfinite(g_last.total):
                raise DivergenceError(epoch, "generator")
            adam_step(gen.sigma, g_grads.sigma, adam_sigma)
            adam_step(gen.v, g_grads.v, adam_v)
        history.epochs.append(
            EpochRecord(epoch=epoch, d_loss=d_last, g_loss=g_last, wall_clock=time.perf_counter() - t0)
        )

        at_eval = do_earlystop and (epoch % config.eval_every == 0 or epoch == config.epochs_max)
        if at_eval:
            value = _holdout_map5(gen, config.mode, urm_train, earlystop)
            history.evals.append(EvalRecord(epoch=epoch, metric="map@5", value=value))
            if best is None or value > best[0]:
                best = (value, gen.copy(), disc.copy())
                strikes = 0
            else:
                strikes += 1
                if strikes >= config.patience:
                    break

    if best is not None:
        return best[1], best[2], history
    return gen, disc, history


def _holdout_map5(gen: M.GeneratorParams, mode: str, exclude: Urm, holdout: Urm) -> float:
    adapter = _ScoreAdapter(lambda users: _user_scores(gen, mode, users))
    report = evaluate(adapter, exclude, holdout, cutoffs=(5,))
    return report.map[5]


def recommend(gen: M.GeneratorParams, mode: str, urm_train: Urm, user: int, n: int) -> np.ndarray:
    """Top-n unseen items for one user; ties break by ascending item id."""
    if not 0 <= user < urm_train.n_users:
        raise IndexError(f"user {user} outside [0, {urm_train.n_users})")
    scores = _user_scores(gen, mode, np.asarray([user]))[0]
    return rank_items(scores, urm_train.row_items(user), n)


class GANMF(BaseEstimator):
    """Adversarial matrix-factorization recommender with a scikit-learn API.

    ``fit`` takes a binary interaction matrix (an ``Urm`` or anything
    scipy-sparse convertible) and learns user/item factors by playing the
    factorization generator against an autoencoder energy discriminator
    (``discriminator='binary'`` swaps in the classifier variant used for
    ablations). ``coding_dim`` is the autoencoder code width, reused as the
    hidden width of the binary discriminator.
    """

    def __init__(
        self,
        n_factors: int = 128,
        coding_dim: int = 256,
        batch_size: int = 512,
        margin: int = 1,
        alpha: float = 0.25,
        lr_d: float = 1e-3,
        lr_g: float = 1e-3,
        reg_d: float = 1e-6,
        reg_g: float = 0.0,
        epochs: int = 300,
        mode: str = "user",
        discriminator: str = "autoencoder",
        eval_every: int = 5,
        patience: int = 5,
        random_state: int = 0,
    ):
        self.n_factors = n_factors
        self.coding_dim = coding_dim
        self.batch_size = batch_size
        self.margin = margin
        self.alpha = alpha
        self.lr_d = lr_d
        self.lr_g = lr_g
        self.reg_d = reg_d
        self.reg_g = reg_g
        self.epochs = epochs
        self.mode = mode
        self.discriminator = discriminator
        self.eval_every = eval_every
        self.patience = patience
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            epochs_max=self.epochs,
            k=self.n_factors,
            coding_dim=self.coding_dim,
            batch_size=self.batch_size,
            margin=self.margin,
            alpha=self.alpha,
            lr_d=self.lr_d,
            lr_g=self.lr_g,
            lambda_d=self.reg_d,
            lambda_g=self.reg_g,
            mode=self.mode,
            disc_type=self.discriminator,
            seed=self.random_state,
            eval_every=self.eval_every,
            patience=self.patience,
        )

    def fit(self, X, earlystop: Urm | None = None):
        urm = X if isinstance(X, Urm) else _urm_from_matrix(X)
        config = self._config()
        gen, disc, history = train(urm, earlystop, config)
        self.urm_train_ = urm
        self.generator_ = gen
        self.discriminator_ = disc
        self.history_ = history
        self.n_users_ = urm.n_users
        self.n_items_ = urm.n_items
        return self

    def score_users(self, users) -> np.ndarray:
        self._check_fitted()
        return _user_scores(self.generator_, self.mode, users)

    def recommend(self, user: int, n: int = 10) -> np.ndarray:
        self._check_fitted()
        return recommend(self.generator_, self.mode, self.urm_train_, user, n)

    def predict(self, users, n: int = 10) -> list[np.ndarray]:
        """Top-n recommendation lists for a batch of users."""
        return [self.recommend(int(u), n) for u in np.asarray(users, dtype=np.int64)]

    def save(self, path: str | Path) -> None:
        self._check_fitted()
        M.save_checkpoint(
            M.Checkpoint(
                mode=self.mode,
                disc_type=self.discriminator,
                n_users=self.n_users_,
                n_items=self.n_items_,
                generator=self.generator_,
                discriminator=self.discriminator_,
            ),
            path,
        )

    @classmethod
    def load(cls, path: str | Path, urm_train: Urm) -> "GANMF":
        """Rebuild a fitted recommender from a checkpoint plus its train URM."""
        ckpt = M.load_checkpoint(path)
        if (ckpt.n_users, ckpt.n_items) != (urm_train.n_users, urm_train.n_items):
            raise ValueError(
                f"checkpoint is {ckpt.n_users}x{ckpt.n_items}, URM is "
                f"{urm_train.n_users}x{urm_train.n_items}"
            )
        est = cls(
            n_factors=ckpt.generator.k,
            mode=ckpt.mode,
            discriminator=ckpt.disc_type,
        )
        est.urm_train_ = urm_train
        est.generator_ = ckpt.generator
        est.discriminator_ = ckpt.discriminator
        est.history_ = TrainHistory()
        est.n_users_ = ckpt.n_users
        est.n_items_ = ckpt.n_items
        return est

    def _check_fitted(self):
        if not hasattr(self, "generator_"):
            raise RuntimeError("this GANMF instance is not fitted yet; call fit first")


def _urm_from_matrix(X) -> Urm:
    import scipy.sparse as sp

    mat = sp.csr_matrix(X)
    return Urm(
        mat,
        [str(u) for u in range(mat.shape[0])],
        [str(i) for i in range(mat.shape[1])],
    )
