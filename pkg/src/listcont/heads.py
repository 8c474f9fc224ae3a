"""Output heads and training losses over masked-position latents.

Two head families score items from a latent vector:

* ``vanilla``: one flat matvec over all items.
* ``two_stage``: a small category classifier picks one of N categories, then a
  per-category local head scores only that category's items. At inference the
  category choice is an argmax chain; at training time each label is routed to
  the local head of its *true* category and contributes only when the category
  classifier already ranks that category first (a stop-gradient gate), so
  local heads learn from latents whose category routing will hold at test time.

Loss normalization: the category loss averages over samples; each local loss
divides by (number of gate-passing labels + eps); the flat loss divides by
(label count + eps) so that a single-category two-stage model reproduces the
flat model's loss exactly. Totals: ``L = L_cat + mean_j L_loc_j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Vocabulary
from .model import Batch, ModelConfig

__all__ = ["HeadIndex", "loss_forward", "loss_backward"]


@dataclass
class HeadIndex:
    """Precomputed category structure used to route labels to local heads."""

    num_items: int
    num_categories: int
    members: list[np.ndarray]
    local_index: np.ndarray

    @classmethod
    def from_vocab(cls, vocab: Vocabulary) -> "HeadIndex":
        return cls(
            num_items=vocab.num_items,
            num_categories=int(vocab.num_categories),  # type: ignore[arg-type]
            members=vocab.category_members(),
            local_index=vocab.local_index(),
        )


def _log_softmax_rows(logits: np.ndarray, targets: np.ndarray):
    """Row-wise (softmax, log-prob of target); numerically stabilized."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    denom = e.sum(axis=1, keepdims=True)
    soft = e / denom
    rows = np.arange(len(targets))
    logp = z[rows, targets] - np.log(denom[:, 0])
    return soft, logp


def loss_forward(
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
    index: HeadIndex,
    latents: np.ndarray,
    batch: Batch,
):
    """Compute the training loss from encoder latents.

    Returns ``(loss, parts, cache)`` where ``parts`` breaks the loss into its
    category/local (or flat) components and ``cache`` feeds
    :func:`loss_backward`.
    """
    if batch.num_labels == 0:
        raise ValueError("batch has no labels")
    e_lab = latents[batch.label_sample, batch.label_pos]
    t = batch.num_labels
    eps = cfg.local_loss_eps
    cache: dict = {"batch": batch, "cfg": cfg, "index": index, "e_lab": e_lab,
                   "latents_shape": latents.shape}

    if cfg.classifier == "vanilla":
        w, b = params["head.item.W"], params["head.item.b"]
        logits = e_lab @ w + b
        soft, logp = _log_softmax_rows(logits, batch.label_item)
        denom = t + eps
        loss = float(-logp.sum() / denom)
        cache.update(soft=soft, denom=denom, w=w)
        return loss, {"flat": loss}, cache

    n_cat = index.num_categories
    wc, bc = params["head.category.W"], params["head.category.b"]
    cat_logits = e_lab @ wc + bc
    cat_soft, cat_logp = _log_softmax_rows(cat_logits, batch.label_cat)
    cat_loss = float(-cat_logp.sum() / batch.n_samples) + 0.0
    gate = (cat_logits.argmax(axis=1) == batch.label_cat).astype(latents.dtype)

    local_losses = []
    local_cache = []
    total_local = 0.0
    for j in range(n_cat):
        idx = np.flatnonzero(batch.label_cat == j)
        if len(idx) == 0:
            local_losses.append(0.0)
            local_cache.append(None)
            continue
        wj, bj = params[f"head.local{j}.W"], params[f"head.local{j}.b"]
        ej = e_lab[idx]
        logits_j = ej @ wj + bj
        targets_j = index.local_index[batch.label_item[idx]]
        soft_j, logp_j = _log_softmax_rows(logits_j, targets_j)
        gj = gate[idx]
        denom_j = float(gj.sum()) + eps
        lj = float(-(gj * logp_j).sum() / denom_j) + 0.0  # drop negative zero
        local_losses.append(lj)
        local_cache.append(
            {"idx": idx, "soft": soft_j, "targets": targets_j, "gj": gj,
             "denom": denom_j, "wj": wj, "j": j}
        )
        total_local += lj
    loss = cat_loss + total_local / n_cat
    cache.update(
        cat_soft=cat_soft, wc=wc, local_cache=local_cache, n_cat=n_cat
    )
    parts = {"category": cat_loss, "local": local_losses}
    return loss, parts, cache


def loss_backward(cache: dict):
    """Gradient of the loss w.r.t. latents and head parameters.

    The two-stage gate is treated as a constant (no gradient flows through the
    argmax indicator). Heads with no routed labels this batch get zero grads
    so optimizers see a complete gradient dict every step.
    """
    batch: Batch = cache["batch"]
    cfg: ModelConfig = cache["cfg"]
    index: HeadIndex = cache["index"]
    e_lab = cache["e_lab"]
    t = batch.num_labels
    grads: dict[str, np.ndarray] = {}

    if cfg.classifier == "vanilla":
        dlogits = cache["soft"].copy()
        dlogits[np.arange(t), batch.label_item] -= 1.0
        dlogits /= cache["denom"]
        grads["head.item.W"] = e_lab.T @ dlogits
        grads["head.item.b"] = dlogits.sum(axis=0)
        de_lab = dlogits @ cache["w"].T
    else:
        dcat = cache["cat_soft"].copy()
        dcat[np.arange(t), batch.label_cat] -= 1.0
        dcat /= batch.n_samples
        grads["head.category.W"] = e_lab.T @ dcat
        grads["head.category.b"] = dcat.sum(axis=0)
        de_lab = dcat @ cache["wc"].T
        n_cat = cache["n_cat"]
        for j, lc in enumerate(cache["local_cache"]):
            wkey, bkey = f"head.local{j}.W", f"head.local{j}.b"
            if lc is None:
                grads[wkey] = np.zeros((e_lab.shape[1], len(index.members[j])),
                                       dtype=e_lab.dtype)
                grads[bkey] = np.zeros(len(index.members[j]), dtype=e_lab.dtype)
                continue
            dloc = lc["soft"].copy()
            dloc[np.arange(len(lc["targets"])), lc["targets"]] -= 1.0
            dloc *= lc["gj"][:, None]
            dloc /= n_cat * lc["denom"]
            grads[wkey] = e_lab[lc["idx"]].T @ dloc
            grads[bkey] = dloc.sum(axis=0)
            de_lab_j = dloc @ lc["wj"].T
            np.add.at(de_lab, lc["idx"], de_lab_j)

    d_latents = np.zeros(cache["latents_shape"], dtype=e_lab.dtype)
    np.add.at(d_latents, (batch.label_sample, batch.label_pos), de_lab)
    return d_latents, grads
