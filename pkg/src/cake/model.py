"""Head variants over frozen features: forward passes, exact analytic backward,
and bit-exact checkpoints.

Variants
    cake       k-d linear projection of the input features
    cake_norm  same projection constrained to the unit sphere
    av         the 2-d arousal-valence pair alone (no projection)
    avk        projection concatenated with the arousal-valence pair

Every variant feeds one linear classifier head per domain (no activation).
The arousal-valence pair is an input to the trainable path, never a trainable
quantity of the classification loss: it comes either from the record
(av_source "ground_truth") or from a separately fitted, then frozen, linear
regressor head (av_source "regressed").
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .numerics import SeededRng, derive_seed, softmax_stable
from .objective import LossWeights, multidomain_loss

CHECKPOINT_MAGIC = b"CAKECKPT"
CHECKPOINT_VERSION = 1

VARIANTS = ("cake", "av", "avk", "cake_norm")
AV_SOURCES = ("ground_truth", "regressed")

NORM_EPS = 1e-12  # below this, unit-sphere normalization is refused

_TAG_INIT = 301


@dataclass
class ModelConfig:
    variant: str
    k: int
    dim: int
    n_domains: int
    n_classes: int = 7
    dropout_rate: float = 0.5
    seed: int = 0
    av_source: str = "ground_truth"

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"model config: unknown variant {self.variant!r}")
        if self.av_source not in AV_SOURCES:
            raise ValueError(f"model config: unknown av_source {self.av_source!r}")
        if self.variant == "av":
            if self.k != 0:
                raise ValueError("model config: variant 'av' requires k=0")
        elif self.k < 1:
            raise ValueError(f"model config: variant {self.variant!r} requires k >= 1")
        if self.dim < 1 or self.n_domains < 1 or self.n_classes < 2:
            raise ValueError("model config: dim >= 1, n_domains >= 1, n_classes >= 2")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"model config: dropout_rate must be in [0,1), got {self.dropout_rate}")

    @property
    def embed_dim(self) -> int:
        """Classifier input size d: k, 2, or k+2 depending on the variant."""
        if self.variant == "av":
            return 2
        if self.variant == "avk":
            return self.k + 2
        return self.k

    @property
    def has_embed_head(self) -> bool:
        return self.variant != "av"

    @property
    def uses_av(self) -> bool:
        return self.variant in ("av", "avk")

    @property
    def has_av_head(self) -> bool:
        return self.uses_av and self.av_source == "regressed"


@dataclass(eq=False)
class ModelParams:
    embed_w: Optional[np.ndarray]  # (k, dim)
    embed_b: Optional[np.ndarray]  # (k,)
    av_w: Optional[np.ndarray]  # (2, dim)
    av_b: Optional[np.ndarray]  # (2,)
    clf_w: list[np.ndarray]  # per domain (n_classes, embed_dim)
    clf_b: list[np.ndarray]  # per domain (n_classes,)

    def tensors(self) -> list[np.ndarray]:
        """All parameter tensors in canonical order (shared with Gradients/Adam)."""
        out = []
        if self.embed_w is not None:
            out += [self.embed_w, self.embed_b]
        if self.av_w is not None:
            out += [self.av_w, self.av_b]
        for w, b in zip(self.clf_w, self.clf_b):
            out += [w, b]
        return out

    def copy(self) -> "ModelParams":
        cp = lambda a: None if a is None else a.copy()
        return ModelParams(
            embed_w=cp(self.embed_w),
            embed_b=cp(self.embed_b),
            av_w=cp(self.av_w),
            av_b=cp(self.av_b),
            clf_w=[w.copy() for w in self.clf_w],
            clf_b=[b.copy() for b in self.clf_b],
        )


@dataclass(eq=False)
class Gradients:
    """Partials of a loss, shape-matched tensor by tensor to ModelParams."""

    embed_w: Optional[np.ndarray]
    embed_b: Optional[np.ndarray]
    av_w: Optional[np.ndarray]
    av_b: Optional[np.ndarray]
    clf_w: list[np.ndarray]
    clf_b: list[np.ndarray]

    def tensors(self) -> list[np.ndarray]:
        out = []
        if self.embed_w is not None:
            out += [self.embed_w, self.embed_b]
        if self.av_w is not None:
            out += [self.av_w, self.av_b]
        for w, b in zip(self.clf_w, self.clf_b):
            out += [w, b]
        return out


@dataclass(eq=False)
class Batch:
    """Dense batch view: features, labels, domain ids, optional AV pairs."""

    x: np.ndarray  # (n, dim)
    y: np.ndarray  # (n,)
    dom: np.ndarray  # (n,)
    av: Optional[np.ndarray] = None  # (n, 2)


def init_params(cfg: ModelConfig) -> ModelParams:
    """Seeded init: weights ~ uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), zero biases.

    Draw order is fixed (embed head, av head, classifier heads by domain) so
    the same seed always yields the same parameters.
    """
    rng = SeededRng(derive_seed(cfg.seed, _TAG_INIT))

    def uni(rows: int, cols: int) -> np.ndarray:
        a = 1.0 / np.sqrt(cols)
        return rng.uniform(rows * cols, -a, a).reshape(rows, cols)

    embed_w = embed_b = av_w = av_b = None
    if cfg.has_embed_head:
        embed_w = uni(cfg.k, cfg.dim)
        embed_b = np.zeros(cfg.k)
    if cfg.has_av_head:
        av_w = uni(2, cfg.dim)
        av_b = np.zeros(2)
    clf_w = [uni(cfg.n_classes, cfg.embed_dim) for _ in range(cfg.n_domains)]
    clf_b = [np.zeros(cfg.n_classes) for _ in range(cfg.n_domains)]
    return ModelParams(embed_w, embed_b, av_w, av_b, clf_w, clf_b)


def zero_gradients(params: ModelParams) -> Gradients:
    z = lambda a: None if a is None else np.zeros_like(a)
    return Gradients(
        embed_w=z(params.embed_w),
        embed_b=z(params.embed_b),
        av_w=z(params.av_w),
        av_b=z(params.av_b),
        clf_w=[np.zeros_like(w) for w in params.clf_w],
        clf_b=[np.zeros_like(b) for b in params.clf_b],
    )


def av_regress(params: ModelParams, features: np.ndarray) -> tuple[float, float]:
    """Linear arousal-valence prediction, clipped to [-1, 1] per coordinate."""
    if params.av_w is None:
        raise ValueError("av_regress: model has no arousal-valence head")
    raw = params.av_w @ np.asarray(features, dtype=np.float64) + params.av_b
    a, v = np.clip(raw, -1.0, 1.0)
    return float(a), float(v)


def av_regress_batch(params: ModelParams, x: np.ndarray) -> np.ndarray:
    if params.av_w is None:
        raise ValueError("av_regress: model has no arousal-valence head")
    return np.clip(x @ params.av_w.T + params.av_b, -1.0, 1.0)


def _resolve_av(
    params: ModelParams, cfg: ModelConfig, x: np.ndarray, av: Optional[np.ndarray]
) -> Optional[np.ndarray]:
    """AV pairs used by the forward pass; None for variants that ignore AV."""
    if not cfg.uses_av:
        return None
    if av is not None:
        return np.asarray(av, dtype=np.float64)
    if params.av_w is not None:
        return av_regress_batch(params, x)  # regressor sees raw features, no dropout
    raise ValueError(
        f"embed: variant {cfg.variant!r} needs arousal-valence values, "
        "but none were supplied and the model has no regressor head"
    )


def _embed_forward(
    params: ModelParams,
    cfg: ModelConfig,
    x: np.ndarray,
    av: Optional[np.ndarray],
    dropout_masks: Optional[np.ndarray],
) -> tuple[np.ndarray, dict]:
    """Shared batch forward to the classifier input; also returns backward cache."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != cfg.dim:
        raise ValueError(f"embed: feature dim {x.shape[1]} != model dim {cfg.dim}")
    av_used = _resolve_av(params, cfg, x, av)
    if dropout_masks is not None:
        if not cfg.has_embed_head:
            raise ValueError("embed: dropout applies to the projection input; "
                             "variant 'av' has none")
        # Inverted dropout on the input features: zero masked coordinates,
        # rescale kept ones so inference needs no correction.
        x_in = x * (dropout_masks / (1.0 - cfg.dropout_rate))
    else:
        x_in = x
    cache: dict = {"x_in": x_in}
    if cfg.variant == "av":
        return av_used.copy(), cache
    e_pre = x_in @ params.embed_w.T + params.embed_b
    if cfg.variant == "cake":
        return e_pre, cache
    if cfg.variant == "avk":
        return np.hstack([e_pre, av_used]), cache
    # cake_norm
    norms = np.linalg.norm(e_pre, axis=1, keepdims=True)
    if np.any(norms < NORM_EPS):
        i = int(np.argmax(norms < NORM_EPS))
        raise ValueError(
            f"embed: degenerate pre-normalization norm {float(norms[i, 0]):.3e} "
            f"< {NORM_EPS} at batch row {i}"
        )
    e_hat = e_pre / norms
    cache["norms"] = norms
    cache["e_hat"] = e_hat
    return e_hat, cache


def embed_many(
    params: ModelParams,
    cfg: ModelConfig,
    x: np.ndarray,
    av: Optional[np.ndarray] = None,
    dropout_masks: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Batch embeddings (n, embed_dim)."""
    e, _ = _embed_forward(params, cfg, x, av, dropout_masks)
    return e


def embed(
    params: ModelParams,
    cfg: ModelConfig,
    features: np.ndarray,
    av: Optional[tuple[float, float]] = None,
    dropout_mask: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Single-sample embedding of dimension embed_dim."""
    av_arr = None if av is None else np.asarray(av, dtype=np.float64)[None, :]
    masks = None if dropout_mask is None else np.asarray(dropout_mask, dtype=np.float64)[None, :]
    return embed_many(
        params, cfg, np.asarray(features, dtype=np.float64)[None, :], av_arr, masks
    )[0]


def classify(params: ModelParams, embedding: np.ndarray, domain_id: int) -> np.ndarray:
    """Logits of the domain's classifier head: clf_w[j] @ e + clf_b[j]."""
    if not 0 <= domain_id < len(params.clf_w):
        raise ValueError(f"classify: unknown domain {domain_id}")
    embedding = np.asarray(embedding, dtype=np.float64)
    if embedding.shape[-1] != params.clf_w[domain_id].shape[1]:
        raise ValueError(
            f"classify: embedding dim {embedding.shape[-1]} != head input "
            f"{params.clf_w[domain_id].shape[1]}"
        )
    return embedding @ params.clf_w[domain_id].T + params.clf_b[domain_id]


def predict_from_embedding(params: ModelParams, embedding: np.ndarray, domain_id: int) -> int:
    """Class index at an embedding coordinate; ties go to the lowest index."""
    probs = softmax_stable(classify(params, embedding, domain_id))
    return int(np.argmax(probs))


def predict(params: ModelParams, cfg: ModelConfig, record, domain_id: int) -> int:
    """Inference for one record with the chosen domain head (dropout off)."""
    av = record.av if cfg.av_source == "ground_truth" else None
    e = embed(params, cfg, record.features, av=av)
    return predict_from_embedding(params, e, domain_id)


def predict_batch(
    params: ModelParams,
    cfg: ModelConfig,
    x: np.ndarray,
    av: Optional[np.ndarray],
    domain_id: int,
) -> np.ndarray:
    """Vectorized inference; av is ignored unless the variant uses it."""
    use_av = av if cfg.av_source == "ground_truth" else None
    e = embed_many(params, cfg, x, use_av)
    probs = softmax_stable(classify(params, e, domain_id))
    return np.argmax(probs, axis=1)


def backprop(
    params: ModelParams,
    cfg: ModelConfig,
    batch: Batch,
    weights: LossWeights,
    dropout_masks: Optional[np.ndarray] = None,
) -> tuple[float, Gradients]:
    """Loss and exact analytic gradients of the multi-domain objective.

    Samples are routed to their own domain's head; heads of absent domains
    receive exactly-zero gradients. The arousal-valence inputs are constants
    here (frozen regressor or ground truth), so av head grads stay zero.
    """
    if len(batch.y) == 0:
        raise ValueError("backprop: batch must be nonempty")
    av = batch.av if cfg.av_source == "ground_truth" else None
    e, cache = _embed_forward(params, cfg, batch.x, av, dropout_masks)
    n = e.shape[0]

    logits = np.empty((n, cfg.n_classes))
    groups = []
    for j in range(cfg.n_domains):
        idx = np.flatnonzero(batch.dom == j)
        groups.append(idx)
        if idx.size:
            logits[idx] = e[idx] @ params.clf_w[j].T + params.clf_b[j]
    if np.any((batch.dom < 0) | (batch.dom >= cfg.n_domains)):
        raise ValueError("backprop: batch contains samples of unknown domains")

    loss, dlogits = multidomain_loss(logits, batch.y, batch.dom, weights)

    grads = zero_gradients(params)
    d_e = np.zeros_like(e)
    for j, idx in enumerate(groups):
        if idx.size == 0:
            continue
        grads.clf_w[j][...] = dlogits[idx].T @ e[idx]
        grads.clf_b[j][...] = dlogits[idx].sum(axis=0)
        d_e[idx] = dlogits[idx] @ params.clf_w[j]

    if cfg.variant == "av":
        return loss, grads
    if cfg.variant == "avk":
        d_pre = d_e[:, : cfg.k]
    elif cfg.variant == "cake_norm":
        # Through e = pre/||pre||: J = (I - e_hat e_hat^T) / ||pre||
        e_hat, norms = cache["e_hat"], cache["norms"]
        d_pre = (d_e - e_hat * np.sum(d_e * e_hat, axis=1, keepdims=True)) / norms
    else:
        d_pre = d_e
    x_in = cache["x_in"]
    grads.embed_w[...] = d_pre.T @ x_in
    grads.embed_b[...] = d_pre.sum(axis=0)
    return loss, grads


# ---------------------------------------------------------------------------
# Trainable-vector helpers (used by the finite-difference oracle)
# ---------------------------------------------------------------------------


def trainable_tensors(params: ModelParams, cfg: ModelConfig) -> list[np.ndarray]:
    """Tensors the classification loss trains: embed head + classifier heads.

    The av regressor head is excluded; it is frozen under this loss.
    """
    out = []
    if cfg.has_embed_head:
        out += [params.embed_w, params.embed_b]
    for w, b in zip(params.clf_w, params.clf_b):
        out += [w, b]
    return out


def trainable_gradients(grads: Gradients, cfg: ModelConfig) -> list[np.ndarray]:
    out = []
    if cfg.has_embed_head:
        out += [grads.embed_w, grads.embed_b]
    for w, b in zip(grads.clf_w, grads.clf_b):
        out += [w, b]
    return out


def flatten_trainable(params: ModelParams, cfg: ModelConfig) -> np.ndarray:
    return np.concatenate([t.ravel() for t in trainable_tensors(params, cfg)])


def set_trainable(params: ModelParams, cfg: ModelConfig, vec: np.ndarray) -> ModelParams:
    """New params with the trainable tensors replaced by the flat vector."""
    out = params.copy()
    pos = 0
    for t in trainable_tensors(out, cfg):
        t[...] = vec[pos : pos + t.size].reshape(t.shape)
        pos += t.size
    if pos != vec.size:
        raise ValueError(f"set_trainable: vector length {vec.size}, expected {pos}")
    return out


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------
#
# Little-endian layout:
#   magic "CAKECKPT" | version u32
#   variant u8 | av_source u8 | flags u8 (bit0: optimizer state present)
#   k u32 | dim u32 | n_domains u32 | n_classes u32 | dropout f64 | seed u64
#   tensors in ModelParams.tensors() order: ndim u8, each dim u32, f64 payload
#   optional optimizer block: lr f64, beta1 f64, beta2 f64, eps f64, t u64,
#   then all m tensors, then all v tensors (same encoding)


def _write_tensor(buf: io.BytesIO, t: np.ndarray) -> None:
    buf.write(struct.pack("<B", t.ndim))
    for d in t.shape:
        buf.write(struct.pack("<I", d))
    buf.write(t.astype("<f8").tobytes())


def _read_tensor(r) -> np.ndarray:
    (ndim,) = r.unpack("<B", "tensor rank")
    shape = tuple(r.unpack("<I", "tensor dim")[0] for _ in range(ndim))
    n = int(np.prod(shape)) if shape else 1
    return np.frombuffer(r.take(8 * n, "tensor payload"), dtype="<f8").reshape(shape).copy()


def save_checkpoint(path: str, cfg: ModelConfig, params: ModelParams, adam_state=None) -> None:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    flags = 1 if adam_state is not None else 0
    buf.write(
        struct.pack(
            "<BBBIIIIdQ",
            VARIANTS.index(cfg.variant),
            AV_SOURCES.index(cfg.av_source),
            flags,
            cfg.k,
            cfg.dim,
            cfg.n_domains,
            cfg.n_classes,
            cfg.dropout_rate,
            cfg.seed & ((1 << 64) - 1),
        )
    )
    for t in params.tensors():
        _write_tensor(buf, t)
    if adam_state is not None:
        buf.write(
            struct.pack(
                "<ddddQ",
                adam_state.lr,
                adam_state.beta1,
                adam_state.beta2,
                adam_state.eps,
                adam_state.t,
            )
        )
        for t in adam_state.m:
            _write_tensor(buf, t)
        for t in adam_state.v:
            _write_tensor(buf, t)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path: str):
    """Returns (cfg, params, adam_state-or-None); bit-exact inverse of save."""
    from .data import _Reader  # same offset-tracking reader
    from .optim import AdamState

    with open(path, "rb") as fh:
        r = _Reader(fh.read(), label="checkpoint")
    magic = r.take(len(CHECKPOINT_MAGIC), "magic")
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"checkpoint: bad magic {magic!r}")
    (version,) = r.unpack("<I", "version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"checkpoint: unsupported version {version}")
    var_i, av_i, flags, k, dim, n_domains, n_classes, dropout, seed = r.unpack(
        "<BBBIIIIdQ", "config"
    )
    cfg = ModelConfig(
        variant=VARIANTS[var_i],
        k=k,
        dim=dim,
        n_domains=n_domains,
        n_classes=n_classes,
        dropout_rate=dropout,
        seed=seed,
        av_source=AV_SOURCES[av_i],
    )
    params = init_params(cfg)  # right shapes; values overwritten below
    for t in params.tensors():
        loaded = _read_tensor(r)
        if loaded.shape != t.shape:
            raise ValueError(
                f"checkpoint: tensor shape {loaded.shape} != expected {t.shape}"
            )
        t[...] = loaded
    adam_state = None
    if flags & 1:
        lr, b1, b2, eps, t_step = r.unpack("<ddddQ", "optimizer header")
        m = [_read_tensor(r) for _ in params.tensors()]
        v = [_read_tensor(r) for _ in params.tensors()]
        adam_state = AdamState(m=m, v=v, t=int(t_step), lr=lr, beta1=b1, beta2=b2, eps=eps)
    if r.pos != len(r.data):
        raise ValueError(f"checkpoint: {len(r.data) - r.pos} trailing bytes")
    return cfg, params, adam_state
