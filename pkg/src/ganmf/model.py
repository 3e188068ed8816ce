"""Generator, discriminators, losses and their closed-form gradients.

The generator is a plain matrix-factorization model: conditioning on a user
row id y, it emits the profile G(y) = V @ sigma[y]. The main discriminator is
a single-hidden-layer linear autoencoder whose reconstruction error acts as
an energy, D(x) = ||Dec(Enc(x)) - x||^2 summed over all items.

Discriminator objective (hinge on energies, minimized):

    L_D = D(x) + max(0, m * D(x) - D(G(y))) + lambda_d * ||W||^2

Generator objective (adversarial energy plus feature matching in the
encoder's code space, minimized):

    L_G = (1 - alpha) * D(G(y)) + alpha * ||Enc(x) - Enc(G(y))||^2
          + lambda_g * ||params||^2

Both losses are arithmetic means over the batch; energies and the feature
matching distance are unnormalized sums over their vector dimensions. L2
regularization covers weight matrices only, never bias vectors. During the
discriminator step the generated profiles are constants, and during the
generator step the discriminator parameters are constants; the training loop
alternates one Adam step per player.

A binary-classifier discriminator (one ReLU hidden layer, logistic output)
is kept alongside for the ablation variant; its generator matches features
at the hidden layer instead of the code layer.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import glorot_uniform

__all__ = [
    "GeneratorParams",
    "DiscriminatorParams",
    "BinaryDiscParams",
    "LossBreakdown",
    "DiscGrads",
    "GenGrads",
    "BinDiscGrads",
    "init_generator",
    "init_autoencoder",
    "init_binary_disc",
    "generate",
    "encode",
    "reconstruct",
    "energy",
    "disc_loss_and_grads",
    "gen_loss_and_grads",
    "bin_disc_loss_and_grads",
    "bin_gen_loss_and_grads",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]

_PROB_EPS = 1e-7  # logistic outputs are clamped to [eps, 1 - eps] before log


@dataclass
class GeneratorParams:
    """Latent factors: sigma holds one row per conditioning id, v one per profile dim."""

    sigma: np.ndarray
    v: np.ndarray

    @property
    def k(self) -> int:
        return self.sigma.shape[1]

    def copy(self) -> "GeneratorParams":
        return GeneratorParams(self.sigma.copy(), self.v.copy())


@dataclass
class DiscriminatorParams:
    """Linear autoencoder: encoder c x I plus decoder I x c, biases separate."""

    w_enc: np.ndarray
    b_enc: np.ndarray
    w_dec: np.ndarray
    b_dec: np.ndarray

    @property
    def coding_dim(self) -> int:
        return self.w_enc.shape[0]

    def copy(self) -> "DiscriminatorParams":
        return DiscriminatorParams(
            self.w_enc.copy(), self.b_enc.copy(), self.w_dec.copy(), self.b_dec.copy()
        )


@dataclass
class BinaryDiscParams:
    """One ReLU hidden layer feeding a logistic unit."""

    w_hidden: np.ndarray
    b_hidden: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray  # shape (1,)

    @property
    def hidden_dim(self) -> int:
        return self.w_hidden.shape[0]

    def copy(self) -> "BinaryDiscParams":
        return BinaryDiscParams(
            self.w_hidden.copy(), self.b_hidden.copy(), self.w_out.copy(), self.b_out.copy()
        )


@dataclass
class LossBreakdown:
    """Components of one objective; total re-applies the prescribed weights."""

    total: float
    adversarial: float
    feature_matching: float
    regularization: float


@dataclass
class DiscGrads:
    w_enc: np.ndarray
    b_enc: np.ndarray
    w_dec: np.ndarray
    b_dec: np.ndarray


@dataclass
class GenGrads:
    sigma: np.ndarray
    v: np.ndarray


@dataclass
class BinDiscGrads:
    w_hidden: np.ndarray
    b_hidden: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray


def init_generator(n_rows: int, n_dims: int, k: int, rng) -> GeneratorParams:
    return GeneratorParams(
        sigma=glorot_uniform(n_rows, k, rng), v=glorot_uniform(n_dims, k, rng)
    )


def init_autoencoder(n_dims: int, coding_dim: int, rng) -> DiscriminatorParams:
    return DiscriminatorParams(
        w_enc=glorot_uniform(coding_dim, n_dims, rng),
        b_enc=np.zeros(coding_dim, dtype=np.float64),
        w_dec=glorot_uniform(n_dims, coding_dim, rng),
        b_dec=np.zeros(n_dims, dtype=np.float64),
    )


def init_binary_disc(n_dims: int, hidden_dim: int, rng) -> BinaryDiscParams:
    return BinaryDiscParams(
        w_hidden=glorot_uniform(hidden_dim, n_dims, rng),
        b_hidden=np.zeros(hidden_dim, dtype=np.float64),
        w_out=glorot_uniform(hidden_dim, 1, rng)[:, 0],
        b_out=np.zeros(1, dtype=np.float64),
    )


def generate(gen: GeneratorParams, users) -> np.ndarray:
    """Profiles for a batch of conditioning ids; row b is V @ sigma[users[b]].

    Deterministic: there is no noise input.
    """
    users = np.asarray(users, dtype=np.int64)
    if users.ndim != 1:
        raise ValueError("users must be a 1-D batch of row ids")
    if users.size and (users.min() < 0 or users.max() >= gen.sigma.shape[0]):
        raise IndexError(f"conditioning id out of range [0, {gen.sigma.shape[0]})")
    return gen.sigma[users] @ gen.v.T


def encode(disc: DiscriminatorParams, x: np.ndarray) -> np.ndarray:
    """Code vectors, one row per input profile (linear, no activation)."""
    x = _as_batch(x, disc.w_enc.shape[1])
    return x @ disc.w_enc.T + disc.b_enc


def reconstruct(disc: DiscriminatorParams, x: np.ndarray) -> np.ndarray:
    """Decoder output for each input profile (linear, no activation)."""
    return encode(disc, x) @ disc.w_dec.T + disc.b_dec


def energy(disc: DiscriminatorParams, x: np.ndarray) -> np.ndarray:
    """Reconstruction energy per row: squared L2 residual summed over all items."""
    x = _as_batch(x, disc.w_enc.shape[1])
    residual = reconstruct(disc, x) - x
    return np.sum(residual * residual, axis=1)


def _as_batch(x: np.ndarray, n_dims: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D batch of profiles, got {x.ndim}-D")
    if x.shape[1] != n_dims:
        raise ValueError(f"profiles have {x.shape[1]} dims, model expects {n_dims}")
    return x


def _ae_forward(disc: DiscriminatorParams, x: np.ndarray):
    z = x @ disc.w_enc.T + disc.b_enc
    r = z @ disc.w_dec.T + disc.b_dec
    e = r - x
    d = np.sum(e * e, axis=1)
    return z, e, d


def disc_loss_and_grads(
    disc: DiscriminatorParams,
    gen: GeneratorParams,
    users,
    real_profiles: np.ndarray,
    margin: float,
    lambda_d: float,
) -> tuple[LossBreakdown, DiscGrads]:
    """Hinge energy loss for the autoencoder, batch mean, with gradients.

    Gradients flow through D(x) and D(G(y)) into the autoencoder only; the
    generated profiles are treated as constant inputs. Rows where
    m * D(x) - D(G(y)) <= 0 contribute nothing through the hinge.
    """
    x = _as_batch(real_profiles, disc.w_enc.shape[1])
    fake = generate(gen, users)
    if fake.shape != x.shape:
        raise ValueError(f"batch mismatch: {fake.shape[0]} fake vs {x.shape[0]} real rows")
    z_x, e_x, d_x = _ae_forward(disc, x)
    z_g, e_g, d_g = _ae_forward(disc, fake)
    batch = x.shape[0]
    hinge_raw = margin * d_x - d_g
    active = hinge_raw > 0.0
    adversarial = float(np.mean(d_x + np.maximum(hinge_raw, 0.0)))
    regularization = float(
        lambda_d * (np.sum(disc.w_enc * disc.w_enc) + np.sum(disc.w_dec * disc.w_dec))
    )
    w_real = (1.0 + margin * active) / batch
    w_fake = -active.astype(np.float64) / batch

    g_w_enc = np.zeros_like(disc.w_enc)
    g_b_enc = np.zeros_like(disc.b_enc)
    g_w_dec = np.zeros_like(disc.w_dec)
    g_b_dec = np.zeros_like(disc.b_dec)
    for inp, z, e, w in ((x, z_x, e_x, w_real), (fake, z_g, e_g, w_fake)):
        dr = 2.0 * w[:, None] * e
        g_w_dec += dr.T @ z
        g_b_dec += dr.sum(axis=0)
        dz = dr @ disc.w_dec
        g_w_enc += dz.T @ inp
        g_b_enc += dz.sum(axis=0)
    g_w_enc += 2.0 * lambda_d * disc.w_enc
    g_w_dec += 2.0 * lambda_d * disc.w_dec

    loss = LossBreakdown(
        total=adversarial + regularization,
        adversarial=adversarial,
        feature_matching=0.0,
        regularization=regularization,
    )
    return loss, DiscGrads(g_w_enc, g_b_enc, g_w_dec, g_b_dec)


def gen_loss_and_grads(
    disc: DiscriminatorParams,
    gen: GeneratorParams,
    users,
    real_profiles: np.ndarray,
    alpha: float,
    lambda_g: float = 0.0,
) -> tuple[LossBreakdown, GenGrads]:
    """Adversarial energy plus feature matching, batch mean, with gradients.

    Gradients reach the batch rows of sigma and all of v; the discriminator
    is a constant. The feature-matching term compares each generated profile
    with its own conditioning user's real profile in code space.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    users = np.asarray(users, dtype=np.int64)
    x = _as_batch(real_profiles, disc.w_enc.shape[1])
    sig_rows = gen.sigma[users]
    fake = sig_rows @ gen.v.T
    if fake.shape != x.shape:
        raise ValueError(f"batch mismatch: {fake.shape[0]} fake vs {x.shape[0]} real rows")
    z_g, e_g, d_g = _ae_forward(disc, fake)
    z_x = x @ disc.w_enc.T + disc.b_enc
    diff = z_x - z_g
    fm = np.sum(diff * diff, axis=1)
    batch = x.shape[0]
    adversarial = float(np.mean(d_g))
    feature_matching = float(np.mean(fm))
    regularization = float(
        lambda_g * (np.sum(gen.sigma * gen.sigma) + np.sum(gen.v * gen.v))
    )
    total = (1.0 - alpha) * adversarial + alpha * feature_matching + regularization

    # d/dg of D(g) = 2 (e @ W_dec) @ W_enc - 2 e; of the FM term = -2 diff @ W_enc.
    d_fake = (1.0 - alpha) / batch * (2.0 * (e_g @ disc.w_dec) @ disc.w_enc - 2.0 * e_g)
    d_fake += alpha / batch * (-2.0 * (diff @ disc.w_enc))
    g_v = d_fake.T @ sig_rows + 2.0 * lambda_g * gen.v
    g_sigma = 2.0 * lambda_g * gen.sigma
    np.add.at(g_sigma, users, d_fake @ gen.v)

    loss = LossBreakdown(
        total=total,
        adversarial=adversarial,
        feature_matching=feature_matching,
        regularization=regularization,
    )
    return loss, GenGrads(g_sigma, g_v)


def _bin_forward(bdisc: BinaryDiscParams, x: np.ndarray):
    pre = x @ bdisc.w_hidden.T + bdisc.b_hidden
    hid = np.maximum(pre, 0.0)
    logit = hid @ bdisc.w_out + bdisc.b_out[0]
    prob = 1.0 / (1.0 + np.exp(-logit))
    return pre, hid, prob


def bin_disc_loss_and_grads(
    bdisc: BinaryDiscParams,
    gen: GeneratorParams,
    users,
    real_profiles: np.ndarray,
) -> tuple[LossBreakdown, BinDiscGrads]:
    """Binary cross-entropy labeling real profiles 1 and generated ones 0.

    The loss is the mean over the 2B individual terms (one real and one fake
    per pair). Probabilities are clamped before the log; clamped samples
    contribute zero gradient, consistently with the flat clamped loss.
    """
    x = _as_batch(real_profiles, bdisc.w_hidden.shape[1])
    fake = generate(gen, users)
    pre_x, hid_x, p_x = _bin_forward(bdisc, x)
    pre_g, hid_g, p_g = _bin_forward(bdisc, fake)
    batch = x.shape[0]
    loss_val = float(
        0.5 * np.mean(-np.log(np.clip(p_x, _PROB_EPS, 1.0 - _PROB_EPS)))
        + 0.5 * np.mean(-np.log(1.0 - np.clip(p_g, _PROB_EPS, 1.0 - _PROB_EPS)))
    )
    # d/dlogit of -log p is p - 1; of -log(1 - p) is p. Zero where clamped.
    dlogit_x = 0.5 / batch * (p_x - 1.0) * (p_x > _PROB_EPS)
    dlogit_g = 0.5 / batch * p_g * (p_g < 1.0 - _PROB_EPS)

    g_w_hidden = np.zeros_like(bdisc.w_hidden)
    g_b_hidden = np.zeros_like(bdisc.b_hidden)
    g_w_out = np.zeros_like(bdisc.w_out)
    g_b_out = np.zeros_like(bdisc.b_out)
    for inp, pre, hid, dlogit in ((x, pre_x, hid_x, dlogit_x), (fake, pre_g, hid_g, dlogit_g)):
        g_w_out += hid.T @ dlogit
        g_b_out[0] += dlogit.sum()
        dhid = np.outer(dlogit, bdisc.w_out) * (pre > 0.0)
        g_w_hidden += dhid.T @ inp
        g_b_hidden += dhid.sum(axis=0)

    loss = LossBreakdown(
        total=loss_val, adversarial=loss_val, feature_matching=0.0, regularization=0.0
    )
    return loss, BinDiscGrads(g_w_hidden, g_b_hidden, g_w_out, g_b_out)


def bin_gen_loss_and_grads(
    bdisc: BinaryDiscParams,
    gen: GeneratorParams,
    users,
    real_profiles: np.ndarray,
    alpha: float,
) -> tuple[LossBreakdown, GenGrads]:
    """Non-saturating generator loss against the binary discriminator.

    (1 - alpha) * -log D(G(y)) plus alpha times the squared distance between
    hidden-layer features of the real and generated profiles.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    users = np.asarray(users, dtype=np.int64)
    x = _as_batch(real_profiles, bdisc.w_hidden.shape[1])
    sig_rows = gen.sigma[users]
    fake = sig_rows @ gen.v.T
    pre_g, hid_g, p_g = _bin_forward(bdisc, fake)
    _, hid_x, _ = _bin_forward(bdisc, x)
    diff = hid_x - hid_g
    fm = np.sum(diff * diff, axis=1)
    batch = x.shape[0]
    adversarial = float(np.mean(-np.log(np.clip(p_g, _PROB_EPS, 1.0 - _PROB_EPS))))
    feature_matching = float(np.mean(fm))
    total = (1.0 - alpha) * adversarial + alpha * feature_matching

    dlogit = (1.0 - alpha) / batch * (p_g - 1.0) * (p_g > _PROB_EPS)
    dhid = np.outer(dlogit, bdisc.w_out) + alpha / batch * (-2.0 * diff)
    d_fake = (dhid * (pre_g > 0.0)) @ bdisc.w_hidden
    g_v = d_fake.T @ sig_rows
    g_sigma = np.zeros_like(gen.sigma)
    np.add.at(g_sigma, users, d_fake @ gen.v)

    loss = LossBreakdown(
        total=total,
        adversarial=adversarial,
        feature_matching=feature_matching,
        regularization=0.0,
    )
    return loss, GenGrads(g_sigma, g_v)


# --- checkpoints ------------------------------------------------------------
#
# Layout (little-endian): magic "GMF1", mode byte (0 user / 1 item with the
# autoencoder discriminator, 2 user / 3 item with the binary one), then
# n_users, n_items, k and the coding (or hidden) width as u64. Parameter
# matrices follow row-major as float64, each immediately trailed by a u32
# CRC32 of its raw bytes. Order: sigma, v, then the discriminator arrays
# (w_enc, b_enc, w_dec, b_dec, or the binary equivalents).

_CKPT_MAGIC = b"GMF1"
_MODE_CODES = {
    ("user", "autoencoder"): 0,
    ("item", "autoencoder"): 1,
    ("user", "binary"): 2,
    ("item", "binary"): 3,
}
_CODE_MODES = {v: k for k, v in _MODE_CODES.items()}


@dataclass
class Checkpoint:
    mode: str
    disc_type: str
    n_users: int
    n_items: int
    generator: GeneratorParams
    discriminator: DiscriminatorParams | BinaryDiscParams


def _pack_array(arr: np.ndarray) -> bytes:
    raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
    return raw + struct.pack("<I", zlib.crc32(raw) & 0xFFFFFFFF)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    code = _MODE_CODES[(ckpt.mode, ckpt.disc_type)]
    disc = ckpt.discriminator
    if ckpt.disc_type == "autoencoder":
        width = disc.coding_dim
        arrays = [disc.w_enc, disc.b_enc, disc.w_dec, disc.b_dec]
    else:
        width = disc.hidden_dim
        arrays = [disc.w_hidden, disc.b_hidden, disc.w_out, disc.b_out]
    chunks = [
        _CKPT_MAGIC,
        struct.pack("<B", code),
        struct.pack("<QQQQ", ckpt.n_users, ckpt.n_items, ckpt.generator.k, width),
    ]
    for arr in [ckpt.generator.sigma, ckpt.generator.v] + arrays:
        chunks.append(_pack_array(arr))
    Path(path).write_bytes(b"".join(chunks))


def _read_array(blob: bytes, offset: int, shape: tuple[int, ...]) -> tuple[np.ndarray, int]:
    count = int(np.prod(shape))
    nbytes = count * 8
    raw = blob[offset : offset + nbytes]
    offset += nbytes
    (crc,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    if zlib.crc32(raw) & 0xFFFFFFFF != crc:
        raise ValueError("checkpoint corrupted: CRC mismatch")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape), offset


def load_checkpoint(path: str | Path) -> Checkpoint:
    blob = Path(path).read_bytes()
    if blob[:4] != _CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    (code,) = struct.unpack_from("<B", blob, 4)
    if code not in _CODE_MODES:
        raise ValueError(f"{path}: unknown mode byte {code}")
    mode, disc_type = _CODE_MODES[code]
    n_users, n_items, k, width = struct.unpack_from("<QQQQ", blob, 5)
    n_cond, n_dims = (n_users, n_items) if mode == "user" else (n_items, n_users)
    offset = 5 + 32
    sigma, offset = _read_array(blob, offset, (n_cond, k))
    v, offset = _read_array(blob, offset, (n_dims, k))
    if disc_type == "autoencoder":
        w_enc, offset = _read_array(blob, offset, (width, n_dims))
        b_enc, offset = _read_array(blob, offset, (width,))
        w_dec, offset = _read_array(blob, offset, (n_dims, width))
        b_dec, offset = _read_array(blob, offset, (n_dims,))
        disc = DiscriminatorParams(w_enc, b_enc, w_dec, b_dec)
    else:
        w_hidden, offset = _read_array(blob, offset, (width, n_dims))
        b_hidden, offset = _read_array(blob, offset, (width,))
        w_out, offset = _read_array(blob, offset, (width,))
        b_out, offset = _read_array(blob, offset, (1,))
        disc = BinaryDiscParams(w_hidden, b_hidden, w_out, b_out)
    return Checkpoint(
        mode=mode,
        disc_type=disc_type,
        n_users=int(n_users),
        n_items=int(n_items),
        generator=GeneratorParams(sigma, v),
        discriminator=disc,
    )
