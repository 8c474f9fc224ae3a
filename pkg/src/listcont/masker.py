"""Hybrid masking and token-bundle assembly.

A training example packs a continuation pair into one token bundle::

    u = [CLS] x_masked [SEP] y_masked [SEP]

with three aligned channels: categories ``c``, positions ``p`` and segments
``s``. The two halves are corrupted differently:

* Input side: a random ``random_mask_ratio`` fraction of positions is
  selected; each selected token is replaced by MASK (prob ``mask_prob``), by a
  random real item (``replace_prob``), or kept as-is (``keep_prob``). All
  selected positions become prediction targets.
* Target side: a suffix of ``max(1, ceil(difficulty * |y|))`` positions is
  always replaced by MASK. Ramping ``difficulty`` to 1.0 recovers the
  inference regime where the whole target is hidden.

The category channel carries the true category of every *visible* item and
PAD at every labeled (corrupted) position and at CLS/SEP, so the model never
sees the category of an item it is asked to predict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import ListPair, Vocabulary

__all__ = [
    "MaskPolicy",
    "TokenBundle",
    "mask_input",
    "mask_target",
    "build_bundle",
    "build_inference_bundle",
]

# Guards binary float error in ratio * length products (e.g. 0.6 * 5 is a hair
# above 3.0 in float64); keeps exact multiples exact under ceil.
_CEIL_EPS = 1e-9


@dataclass(frozen=True)
class MaskPolicy:
    """Input-side corruption policy.

    ``mask_prob`` / ``replace_prob`` / ``keep_prob`` are conditional on a
    position being selected and must sum to 1.
    """

    random_mask_ratio: float = 0.15
    mask_prob: float = 0.80
    replace_prob: float = 0.10
    keep_prob: float = 0.10

    def __post_init__(self) -> None:
        if not 0.0 <= self.random_mask_ratio <= 1.0:
            raise ValueError(f"random_mask_ratio must be in [0, 1], got {self.random_mask_ratio}")
        probs = (self.mask_prob, self.replace_prob, self.keep_prob)
        if any(p < 0.0 for p in probs):
            raise ValueError(f"operation probabilities must be >= 0, got {probs}")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"operation probabilities must sum to 1, got {sum(probs)}")


@dataclass(frozen=True)
class TokenBundle:
    """One packed example: token/category/position/segment channels plus labels.

    ``label_positions`` index into ``u``; ``label_items`` and
    ``label_categories`` hold the true item and its true category for each
    prediction target, in ascending position order.
    """

    u: np.ndarray
    c: np.ndarray
    p: np.ndarray
    s: np.ndarray
    label_positions: np.ndarray
    label_items: np.ndarray
    label_categories: np.ndarray
    input_len: int
    target_len: int

    def __post_init__(self) -> None:
        l = len(self.u)
        if not (len(self.c) == len(self.p) == len(self.s) == l):
            raise ValueError("channel length mismatch")

    @property
    def length(self) -> int:
        return len(self.u)

    @property
    def num_labels(self) -> int:
        return len(self.label_positions)

    def to_json_dict(self) -> dict:
        return {
            "u": self.u.tolist(),
            "c": self.c.tolist(),
            "p": self.p.tolist(),
            "s": self.s.tolist(),
            "label_positions": self.label_positions.tolist(),
            "label_items": self.label_items.tolist(),
            "label_categories": self.label_categories.tolist(),
            "input_len": self.input_len,
            "target_len": self.target_len,
        }


def mask_input(
    x: tuple[int, ...] | list[int],
    policy: MaskPolicy,
    vocab: Vocabulary,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Corrupt an input list; returns (masked tokens, selected positions).

    ``round(random_mask_ratio * len(x))`` positions are drawn without
    replacement (half-to-even at exact halves) and corrupted per the policy.
    Selected positions are returned sorted ascending; every one is a label.
    """
    n = len(x)
    out = np.asarray(x, dtype=np.int64).copy()
    k = int(round(policy.random_mask_ratio * n))
    if k == 0:
        return out, np.empty(0, dtype=np.int64)
    chosen = np.sort(rng.choice(n, size=k, replace=False))
    draws = rng.random(k)
    for pos, d in zip(chosen, draws):
        if d < policy.mask_prob:
            out[pos] = vocab.mask_id
        elif d < policy.mask_prob + policy.replace_prob:
            out[pos] = rng.integers(vocab.num_items)
        # else: keep the original token; the position is still predicted
    return out, chosen


def mask_target(
    y: tuple[int, ...] | list[int],
    difficulty: float,
    vocab: Vocabulary,
) -> tuple[np.ndarray, np.ndarray]:
    """Mask the trailing ``max(1, ceil(difficulty * |y|))`` target positions.

    Deterministic: the masked region is always a suffix and always uses the
    MASK token. Returns (masked tokens, masked positions ascending).
    """
    if not 0.0 < difficulty <= 1.0:
        raise ValueError(f"difficulty must be in (0, 1], got {difficulty}")
    n = len(y)
    if n == 0:
        raise ValueError("target list is empty")
    k = max(1, math.ceil(difficulty * n - _CEIL_EPS))
    out = np.asarray(y, dtype=np.int64).copy()
    out[n - k :] = vocab.mask_id
    return out, np.arange(n - k, n, dtype=np.int64)


def _categories_of(items: np.ndarray, vocab: Vocabulary) -> np.ndarray:
    assert vocab.item_to_category is not None
    return vocab.item_to_category[items]


def _assemble(
    x_tokens: np.ndarray,
    x_visible: np.ndarray,
    y_tokens: np.ndarray,
    y_visible: np.ndarray,
    vocab: Vocabulary,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Build the four channels; ``*_visible`` marks positions whose true
    category may be shown."""
    nx, ny = len(x_tokens), len(y_tokens)
    l = nx + ny + 3
    u = np.empty(l, dtype=np.int64)
    c = np.full(l, vocab.category_pad_id, dtype=np.int64)
    u[0] = vocab.cls_id
    u[1 : 1 + nx] = x_tokens
    u[1 + nx] = vocab.sep_id
    u[2 + nx : 2 + nx + ny] = y_tokens
    u[l - 1] = vocab.sep_id
    if nx:
        vis = np.flatnonzero(x_visible)
        c[1 + vis] = _categories_of(x_tokens[vis], vocab)
    if ny:
        vis = np.flatnonzero(y_visible)
        c[2 + nx + vis] = _categories_of(y_tokens[vis], vocab)
    p = np.arange(l, dtype=np.int64)
    s = np.where(p <= 1 + nx, 0, 1).astype(np.int64)
    return u, c, p, s


def build_bundle(
    pair: ListPair,
    policy: MaskPolicy,
    difficulty: float,
    vocab: Vocabulary,
    rng: np.random.Generator,
) -> TokenBundle:
    """Corrupt a training pair and pack it into a :class:`TokenBundle`."""
    if not vocab.has_categories:
        raise ValueError("vocabulary needs a category assignment to build bundles")
    x = np.asarray(pair.input_items, dtype=np.int64)
    y = np.asarray(pair.target_items, dtype=np.int64)
    x_masked, x_sel = mask_input(pair.input_items, policy, vocab, rng)
    y_masked, y_sel = mask_target(pair.target_items, difficulty, vocab)

    x_visible = np.ones(len(x), dtype=bool)
    x_visible[x_sel] = False
    y_visible = np.ones(len(y), dtype=bool)
    y_visible[y_sel] = False
    u, c, p, s = _assemble(x_masked, x_visible, y_masked, y_visible, vocab)

    # Bundle-coordinate label positions: input side shifted by CLS, target
    # side by CLS + input + SEP.
    pos = np.concatenate([1 + x_sel, 2 + len(x) + y_sel])
    items = np.concatenate([x[x_sel], y[y_sel]])
    cats = _categories_of(items, vocab) if len(items) else np.empty(0, dtype=np.int64)
    return TokenBundle(
        u=u,
        c=c,
        p=p,
        s=s,
        label_positions=pos.astype(np.int64),
        label_items=items.astype(np.int64),
        label_categories=cats.astype(np.int64),
        input_len=len(x),
        target_len=len(y),
    )


def build_inference_bundle(
    x: tuple[int, ...] | list[int],
    visible_target: tuple[int, ...] | list[int],
    num_masks: int,
    vocab: Vocabulary,
) -> tuple[TokenBundle, np.ndarray]:
    """Pack a generation query: input list, visible target prefix, mask slots.

    Returns the bundle and the bundle coordinates of the ``num_masks`` mask
    slots (the positions whose latents get classified). The input list is not
    corrupted at inference time.
    """
    if not vocab.has_categories:
        raise ValueError("vocabulary needs a category assignment to build bundles")
    if num_masks < 1:
        raise ValueError(f"num_masks must be >= 1, got {num_masks}")
    if len(x) == 0:
        raise ValueError("input list is empty")
    xa = np.asarray(x, dtype=np.int64)
    prefix = np.asarray(visible_target, dtype=np.int64)
    y_tokens = np.concatenate([prefix, np.full(num_masks, vocab.mask_id, dtype=np.int64)])
    y_visible = np.concatenate([np.ones(len(prefix), dtype=bool), np.zeros(num_masks, dtype=bool)])
    u, c, p, s = _assemble(xa, np.ones(len(xa), dtype=bool), y_tokens, y_visible, vocab)
    empty = np.empty(0, dtype=np.int64)
    bundle = TokenBundle(
        u=u,
        c=c,
        p=p,
        s=s,
        label_positions=empty,
        label_items=empty,
        label_categories=empty,
        input_len=len(xa),
        target_len=len(y_tokens),
    )
    first = 2 + len(xa) + len(prefix)
    return bundle, np.arange(first, first + num_masks, dtype=np.int64)
