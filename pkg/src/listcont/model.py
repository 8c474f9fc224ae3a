"""Bidirectional transformer encoder over token bundles, with manual gradients.

The network is a BERT-style post-norm encoder stack. The input embedding is
the sum of four tables (item, category, position, segment); each layer is
multi-head self-attention (no causal mask) and a GELU feed-forward block, each
followed by a residual connection and LayerNorm. Everything is implemented
directly in numpy with hand-written backward passes so gradients can be
verified against finite differences and runs are bit-reproducible.

Parameters live in a flat ``dict[str, np.ndarray]`` (insertion order fixed by
:func:`init_params`), which keeps optimizer state, gradient checking and the
binary checkpoint format straightforward.

PAD embedding rows (item PAD and category PAD) are frozen at zero: they are
zeroed at init and their gradients are discarded, so padding can never leak
into training.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import erf, ndtri

from .corpus import Vocabulary
from .masker import TokenBundle

__all__ = [
    "ModelConfig",
    "Batch",
    "CheckpointError",
    "init_params",
    "collate_bundles",
    "embed_forward",
    "embed_backward",
    "encode_forward",
    "encode_backward",
    "save_checkpoint",
    "load_checkpoint",
]

_CLASSIFIERS = ("vanilla", "two_stage")
_DTYPES = ("float32", "float64")
_ATTN_NEG = -1e9  # additive bias that removes padded keys from softmax


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and numerics configuration.

    ``classifier`` selects the output head family: ``"vanilla"`` scores all
    items with one flat matvec; ``"two_stage"`` first picks a category, then
    scores only that category's items. ``local_loss_eps`` guards the gated
    local-loss denominator (and the flat loss uses the same guard so the
    single-category hierarchical model reproduces the flat one exactly).
    """

    dim: int = 64
    num_layers: int = 3
    num_heads: int = 8
    classifier: str = "two_stage"
    max_seq_len: int = 128
    dropout: float = 0.1
    local_loss_eps: float = 1e-8
    init_std: float = 0.02
    ln_eps: float = 1e-12
    dtype: str = "float32"

    def __post_init__(self) -> None:
        if self.dim < 1 or self.num_layers < 1 or self.num_heads < 1:
            raise ValueError("dim, num_layers and num_heads must be >= 1")
        if self.dim % self.num_heads != 0:
            raise ValueError(f"dim {self.dim} not divisible by num_heads {self.num_heads}")
        if self.classifier not in _CLASSIFIERS:
            raise ValueError(f"classifier must be one of {_CLASSIFIERS}, got {self.classifier!r}")
        if self.max_seq_len < 4:
            raise ValueError("max_seq_len must be >= 4 (CLS + item + SEP + SEP)")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.local_loss_eps <= 0 or self.init_std <= 0 or self.ln_eps <= 0:
            raise ValueError("local_loss_eps, init_std and ln_eps must be > 0")
        if self.dtype not in _DTYPES:
            raise ValueError(f"dtype must be one of {_DTYPES}, got {self.dtype!r}")

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype)

    @property
    def head_dim(self) -> int:
        return self.dim // self.num_heads


@dataclass
class Batch:
    """Collated bundles: (b, L) channel arrays plus flattened labels."""

    u: np.ndarray
    c: np.ndarray
    p: np.ndarray
    s: np.ndarray
    key_mask: np.ndarray  # (b, L) bool, True where the position is real
    label_sample: np.ndarray
    label_pos: np.ndarray
    label_item: np.ndarray
    label_cat: np.ndarray
    n_samples: int

    @property
    def num_labels(self) -> int:
        return len(self.label_item)


def collate_bundles(bundles: list[TokenBundle], vocab: Vocabulary) -> Batch:
    """Right-pad bundles to a rectangle and flatten their labels."""
    if not bundles:
        raise ValueError("empty batch")
    b = len(bundles)
    lengths = [bd.length for bd in bundles]
    max_len = max(lengths)
    u = np.full((b, max_len), vocab.pad_id, dtype=np.int64)
    c = np.full((b, max_len), vocab.category_pad_id, dtype=np.int64)
    p = np.zeros((b, max_len), dtype=np.int64)
    s = np.zeros((b, max_len), dtype=np.int64)
    key_mask = np.zeros((b, max_len), dtype=bool)
    sample_idx, pos, item, cat = [], [], [], []
    for i, bd in enumerate(bundles):
        n = bd.length
        u[i, :n] = bd.u
        c[i, :n] = bd.c
        p[i, :n] = bd.p
        s[i, :n] = bd.s
        key_mask[i, :n] = True
        sample_idx.append(np.full(bd.num_labels, i, dtype=np.int64))
        pos.append(bd.label_positions)
        item.append(bd.label_items)
        cat.append(bd.label_categories)
    return Batch(
        u=u,
        c=c,
        p=p,
        s=s,
        key_mask=key_mask,
        label_sample=np.concatenate(sample_idx),
        label_pos=np.concatenate(pos),
        label_item=np.concatenate(item),
        label_cat=np.concatenate(cat),
        n_samples=b,
    )


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def _trunc_normal(rng: np.random.Generator, shape: tuple[int, ...], std: float, dtype) -> np.ndarray:
    """Normal(0, std) truncated to +-2 std via inverse-CDF sampling."""
    lo = 0.5 * (1.0 + erf(-2.0 / np.sqrt(2.0)))
    hi = 1.0 - lo
    u = rng.uniform(lo, hi, size=shape)
    return (ndtri(u) * std).astype(dtype)


def init_params(
    cfg: ModelConfig, vocab: Vocabulary, rng: np.random.Generator
) -> dict[str, np.ndarray]:
    """Fresh parameter dict: truncated-normal weights, zero biases, unit LN gains.

    The item table has ``num_items + 4`` rows (items then MASK/CLS/SEP/PAD) and
    the category table ``num_categories + 2`` (categories then PAD then a
    reserved row). Both PAD rows are zeroed here and kept frozen by
    :func:`embed_backward`.
    """
    d, dt = cfg.dim, cfg.np_dtype
    tn = lambda *shape: _trunc_normal(rng, shape, cfg.init_std, dt)
    zeros = lambda *shape: np.zeros(shape, dtype=dt)
    ones = lambda *shape: np.ones(shape, dtype=dt)

    params: dict[str, np.ndarray] = {}
    params["embed.item"] = tn(vocab.num_item_tokens, d)
    params["embed.item"][vocab.pad_id] = 0.0
    params["embed.category"] = tn(vocab.num_category_tokens, d)
    params["embed.category"][vocab.category_pad_id] = 0.0
    params["embed.position"] = tn(cfg.max_seq_len, d)
    params["embed.segment"] = tn(2, d)
    for i in range(cfg.num_layers):
        pre = f"enc{i}"
        for name in ("Wq", "Wk", "Wv", "Wo"):
            params[f"{pre}.attn.{name}"] = tn(d, d)
        for name in ("bq", "bk", "bv", "bo"):
            params[f"{pre}.attn.{name}"] = zeros(d)
        params[f"{pre}.ln1.g"] = ones(d)
        params[f"{pre}.ln1.b"] = zeros(d)
        params[f"{pre}.ff.W1"] = tn(d, 4 * d)
        params[f"{pre}.ff.b1"] = zeros(4 * d)
        params[f"{pre}.ff.W2"] = tn(4 * d, d)
        params[f"{pre}.ff.b2"] = zeros(d)
        params[f"{pre}.ln2.g"] = ones(d)
        params[f"{pre}.ln2.b"] = zeros(d)
    if cfg.classifier == "vanilla":
        params["head.item.W"] = tn(d, vocab.num_items)
        params["head.item.b"] = zeros(vocab.num_items)
    else:
        n_cat = int(vocab.num_categories)  # type: ignore[arg-type]
        params["head.category.W"] = tn(d, n_cat)
        params["head.category.b"] = zeros(n_cat)
        for j, members in enumerate(vocab.category_members()):
            params[f"head.local{j}.W"] = tn(d, len(members))
            params[f"head.local{j}.b"] = zeros(len(members))
    return params


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0, dtype=x.dtype)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0, dtype=x.dtype)))
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi, dtype=x.dtype)
    return cdf + x * pdf


def _layer_norm_forward(x, g, b, eps):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv)


def _layer_norm_backward(dy, g, cache):
    xhat, inv = cache
    dxhat = dy * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    dg = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    return dx, dg, db


def _softmax_last(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _dropout(x, p, rng):
    """Inverted dropout; returns (output, multiplicative mask or None)."""
    if rng is None or p <= 0.0:
        return x, None
    keep = (rng.random(x.shape) >= p).astype(x.dtype)
    mask = keep / np.asarray(1.0 - p, dtype=x.dtype)
    return x * mask, mask


# ---------------------------------------------------------------------------
# embedding
# ---------------------------------------------------------------------------


def embed_forward(
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
    batch: Batch,
    train_rng: np.random.Generator | None = None,
):
    """Sum the four embedding tables; returns (E0 of shape (b, L, d), cache)."""
    if batch.u.shape[1] > cfg.max_seq_len:
        raise ValueError(
            f"sequence length {batch.u.shape[1]} exceeds max_seq_len {cfg.max_seq_len}"
        )
    e = (
        params["embed.item"][batch.u]
        + params["embed.category"][batch.c]
        + params["embed.position"][batch.p]
        + params["embed.segment"][batch.s]
    )
    e, mask = _dropout(e, cfg.dropout, train_rng)
    return e, {"batch": batch, "drop": mask}


def embed_backward(
    cache: dict,
    dE0: np.ndarray,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    vocab: Vocabulary,
) -> None:
    """Scatter-add embedding gradients into ``grads``; PAD rows stay frozen."""
    batch: Batch = cache["batch"]
    if cache["drop"] is not None:
        dE0 = dE0 * cache["drop"]
    d = dE0.shape[-1]
    flat = dE0.reshape(-1, d)
    for key, idx in (
        ("embed.item", batch.u),
        ("embed.category", batch.c),
        ("embed.position", batch.p),
        ("embed.segment", batch.s),
    ):
        g = grads.setdefault(key, np.zeros_like(params[key]))
        np.add.at(g, idx.ravel(), flat)
    grads["embed.item"][vocab.pad_id] = 0.0
    grads["embed.category"][vocab.category_pad_id] = 0.0


# ---------------------------------------------------------------------------
# encoder stack
# ---------------------------------------------------------------------------


def _layer_forward(params, cfg, i, x, key_bias, train_rng):
    pre = f"enc{i}"
    b, l, d = x.shape
    h, dh = cfg.num_heads, cfg.head_dim
    scale = np.asarray(1.0 / np.sqrt(dh), dtype=x.dtype)

    q = x @ params[f"{pre}.attn.Wq"] + params[f"{pre}.attn.bq"]
    k = x @ params[f"{pre}.attn.Wk"] + params[f"{pre}.attn.bk"]
    v = x @ params[f"{pre}.attn.Wv"] + params[f"{pre}.attn.bv"]
    qh = q.reshape(b, l, h, dh).transpose(0, 2, 1, 3)
    kh = k.reshape(b, l, h, dh).transpose(0, 2, 1, 3)
    vh = v.reshape(b, l, h, dh).transpose(0, 2, 1, 3)
    scores = qh @ kh.transpose(0, 1, 3, 2) * scale
    if key_bias is not None:
        scores = scores + key_bias
    probs = _softmax_last(scores)
    ctx = (probs @ vh).transpose(0, 2, 1, 3).reshape(b, l, d)
    attn = ctx @ params[f"{pre}.attn.Wo"] + params[f"{pre}.attn.bo"]
    attn, mask_a = _dropout(attn, cfg.dropout, train_rng)
    x1, ln1_cache = _layer_norm_forward(
        x + attn, params[f"{pre}.ln1.g"], params[f"{pre}.ln1.b"], cfg.ln_eps
    )
    hpre = x1 @ params[f"{pre}.ff.W1"] + params[f"{pre}.ff.b1"]
    hact = gelu(hpre)
    ff = hact @ params[f"{pre}.ff.W2"] + params[f"{pre}.ff.b2"]
    ff, mask_f = _dropout(ff, cfg.dropout, train_rng)
    x2, ln2_cache = _layer_norm_forward(
        x1 + ff, params[f"{pre}.ln2.g"], params[f"{pre}.ln2.b"], cfg.ln_eps
    )
    cache = {
        "x": x,
        "qh": qh,
        "kh": kh,
        "vh": vh,
        "probs": probs,
        "ctx": ctx,
        "mask_a": mask_a,
        "x1": x1,
        "ln1": ln1_cache,
        "hpre": hpre,
        "hact": hact,
        "mask_f": mask_f,
        "ln2": ln2_cache,
        "scale": scale,
    }
    return x2, cache


def _layer_backward(params, cfg, i, cache, dx2, grads):
    pre = f"enc{i}"
    x, qh, kh, vh = cache["x"], cache["qh"], cache["kh"], cache["vh"]
    b, l, d = x.shape
    h, dh = cfg.num_heads, cfg.head_dim
    flat = lambda a: a.reshape(-1, a.shape[-1])

    dr2, dg2, db2 = _layer_norm_backward(dx2, params[f"{pre}.ln2.g"], cache["ln2"])
    grads[f"{pre}.ln2.g"] = dg2
    grads[f"{pre}.ln2.b"] = db2
    dx1 = dr2.copy()
    dff = dr2 if cache["mask_f"] is None else dr2 * cache["mask_f"]
    grads[f"{pre}.ff.W2"] = flat(cache["hact"]).T @ flat(dff)
    grads[f"{pre}.ff.b2"] = flat(dff).sum(axis=0)
    dhact = dff @ params[f"{pre}.ff.W2"].T
    dhpre = dhact * gelu_grad(cache["hpre"])
    grads[f"{pre}.ff.W1"] = flat(cache["x1"]).T @ flat(dhpre)
    grads[f"{pre}.ff.b1"] = flat(dhpre).sum(axis=0)
    dx1 += dhpre @ params[f"{pre}.ff.W1"].T

    dr1, dg1, db1 = _layer_norm_backward(dx1, params[f"{pre}.ln1.g"], cache["ln1"])
    grads[f"{pre}.ln1.g"] = dg1
    grads[f"{pre}.ln1.b"] = db1
    dx = dr1.copy()
    dattn = dr1 if cache["mask_a"] is None else dr1 * cache["mask_a"]
    grads[f"{pre}.attn.Wo"] = flat(cache["ctx"]).T @ flat(dattn)
    grads[f"{pre}.attn.bo"] = flat(dattn).sum(axis=0)
    dctx = (dattn @ params[f"{pre}.attn.Wo"].T).reshape(b, l, h, dh).transpose(0, 2, 1, 3)

    probs = cache["probs"]
    dprobs = dctx @ vh.transpose(0, 1, 3, 2)
    dvh = probs.transpose(0, 1, 3, 2) @ dctx
    dscores = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
    dscores = dscores * cache["scale"]
    dqh = dscores @ kh
    dkh = dscores.transpose(0, 1, 3, 2) @ qh

    to_bld = lambda a: a.transpose(0, 2, 1, 3).reshape(b, l, d)
    dq, dk, dv = to_bld(dqh), to_bld(dkh), to_bld(dvh)
    for name, g in (("Wq", dq), ("Wk", dk), ("Wv", dv)):
        grads[f"{pre}.attn.{name}"] = flat(x).T @ flat(g)
    for name, g in (("bq", dq), ("bk", dk), ("bv", dv)):
        grads[f"{pre}.attn.{name}"] = flat(g).sum(axis=0)
    dx += dq @ params[f"{pre}.attn.Wq"].T
    dx += dk @ params[f"{pre}.attn.Wk"].T
    dx += dv @ params[f"{pre}.attn.Wv"].T
    return dx


def encode_forward(
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
    e0: np.ndarray,
    key_mask: np.ndarray | None,
    train_rng: np.random.Generator | None = None,
):
    """Run the encoder stack; returns (latents (b, L, d), cache)."""
    key_bias = None
    if key_mask is not None and not key_mask.all():
        key_bias = np.where(key_mask, 0.0, _ATTN_NEG).astype(e0.dtype)[:, None, None, :]
    x = e0
    layer_caches = []
    for i in range(cfg.num_layers):
        x, cache = _layer_forward(params, cfg, i, x, key_bias, train_rng)
        layer_caches.append(cache)
    return x, layer_caches


def encode_backward(
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
    layer_caches: list[dict],
    d_latents: np.ndarray,
    grads: dict[str, np.ndarray],
) -> np.ndarray:
    """Backprop through the stack; returns the gradient at the embedding sum."""
    dx = d_latents
    for i in range(cfg.num_layers - 1, -1, -1):
        dx = _layer_backward(params, cfg, i, layer_caches[i], dx, grads)
    return dx


# ---------------------------------------------------------------------------
# checkpoint format
# ---------------------------------------------------------------------------

_MAGIC = b"LCCKPT1\n"


class CheckpointError(RuntimeError):
    """Raised for unreadable, truncated or inconsistent checkpoint files."""


def save_checkpoint(path: str | Path, params: dict[str, np.ndarray], cfg: ModelConfig) -> None:
    """Binary checkpoint: magic, JSON header, then raw C-order array payloads.

    The header records the config and every array's name/shape/dtype in
    payload order, so loading reconstructs the exact dict. Payload bytes are
    written verbatim, which makes round-trips bit-exact for any dtype.
    """
    header = {
        "format": 1,
        "config": asdict(cfg),
        "arrays": [
            {"name": k, "shape": list(v.shape), "dtype": str(v.dtype)}
            for k, v in params.items()
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for v in params.values():
            fh.write(np.ascontiguousarray(v).tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], ModelConfig]:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        raw_len = fh.read(8)
        if len(raw_len) != 8:
            raise CheckpointError(f"{path}: truncated header length")
        (hlen,) = struct.unpack("<Q", raw_len)
        blob = fh.read(hlen)
        if len(blob) != hlen:
            raise CheckpointError(f"{path}: truncated header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
        if header.get("format") != 1:
            raise CheckpointError(f"{path}: unsupported format {header.get('format')!r}")
        cfg = ModelConfig(**header["config"])
        params: dict[str, np.ndarray] = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            dt = np.dtype(spec["dtype"])
            nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
            buf = fh.read(nbytes)
            if len(buf) != nbytes:
                raise CheckpointError(f"{path}: truncated payload for {spec['name']!r}")
            params[spec["name"]] = np.frombuffer(buf, dtype=dt).reshape(shape).copy()
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes after payload")
    return params, cfg
