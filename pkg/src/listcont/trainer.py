"""Training loop: curriculum masking, Adam, early stopping, evaluation.

Each epoch asks the difficulty schedule for the target-mask ratio, corrupts
every training pair freshly (input-side randomness comes from the epoch's RNG
stream, so runs are bit-reproducible given a seed), and takes Adam steps on
the full manual-backprop gradient. After every epoch the model is scored on
the validation split; the best parameters seen are kept and restored at the
end, and training stops early once the metric fails to improve for
``patience`` consecutive epochs (``patience <= 0`` disables early stopping).
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field

import numpy as np

from .corpus import DatasetSplits, ListPair, Vocabulary
from .heads import HeadIndex, loss_backward, loss_forward
from .masker import MaskPolicy, build_bundle
from .metrics import hr_at_k, ndcg_at_k
from .model import (
    Batch,
    ModelConfig,
    collate_bundles,
    embed_backward,
    embed_forward,
    encode_backward,
    encode_forward,
)
from .scheduler import DifficultySchedule
from .inference import GenerationEngine, GenerationRequest

__all__ = [
    "TrainConfig",
    "TrainResult",
    "loss_and_grads",
    "loss_only",
    "clip_gradients",
    "AdamState",
    "adam_step",
    "train",
    "evaluate",
]

_METRICS = ("ndcg", "hr", "loss")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; defaults follow the reference regime."""

    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 256
    max_epochs: int = 200
    patience: int = 3
    grad_clip: float = 5.0  # global norm; <= 0 disables clipping
    metric: str = "ndcg@10"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lr <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("lr must be > 0, batch_size and max_epochs >= 1")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ValueError("betas must be in [0, 1)")
        if self.adam_eps <= 0:
            raise ValueError("adam_eps must be > 0")
        name = self.metric.split("@")[0]
        if name not in _METRICS:
            raise ValueError(f"metric must be one of {_METRICS} (with optional @k)")
        if name != "loss" and "@" in self.metric:
            k = self.metric.split("@", 1)[1]
            if not k.isdigit() or int(k) < 1:
                raise ValueError(f"bad metric cutoff in {self.metric!r}")

    @property
    def metric_name(self) -> str:
        return self.metric.split("@")[0]

    @property
    def metric_k(self) -> int:
        return int(self.metric.split("@")[1]) if "@" in self.metric else 10

    @property
    def higher_is_better(self) -> bool:
        return self.metric_name != "loss"


@dataclass
class TrainResult:
    """Best parameters plus the per-epoch history that selected them."""

    params: dict[str, np.ndarray]
    best_epoch: int
    best_metric: float
    history: list[dict] = field(default_factory=list)
    stopped_early: bool = False


# ---------------------------------------------------------------------------
# full forward/backward composition
# ---------------------------------------------------------------------------


def loss_and_grads(
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
    vocab: Vocabulary,
    index: HeadIndex,
    batch: Batch,
    train_rng: np.random.Generator | None = None,
):
    """End-to-end loss and gradients for one collated batch."""
    e0, ecache = embed_forward(params, cfg, batch, train_rng)
    latents, lcaches = encode_forward(params, cfg, e0, batch.key_mask, train_rng)
    loss, parts, hcache = loss_forward(params, cfg, index, latents, batch)
    d_latents, grads = loss_backward(hcache)
    de0 = encode_backward(params, cfg, lcaches, d_latents, grads)
    embed_backward(ecache, de0, params, grads, vocab)
    return loss, parts, grads


def loss_only(
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
    vocab: Vocabulary,
    index: HeadIndex,
    batch: Batch,
    train_rng: np.random.Generator | None = None,
) -> float:
    """Forward-only loss; pass a freshly seeded ``train_rng`` per call to make
    dropout a deterministic function of the parameters (finite differences
    need the corruption masks to repeat exactly)."""
    e0, _ = embed_forward(params, cfg, batch, train_rng)
    latents, _ = encode_forward(params, cfg, e0, batch.key_mask, train_rng)
    loss, _, _ = loss_forward(params, cfg, index, latents, batch)
    return loss


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``.

    Returns the pre-clip norm. ``max_norm <= 0`` leaves gradients untouched.
    """
    sq = 0.0
    for g in grads.values():
        sq += float(np.vdot(g, g))
    norm = float(np.sqrt(sq))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= np.asarray(scale, dtype=g.dtype)
    return norm


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    tc: TrainConfig,
) -> None:
    """In-place Adam update with bias correction."""
    state.t += 1
    b1, b2 = tc.beta1, tc.beta2
    corr1 = 1.0 - b1**state.t
    corr2 = 1.0 - b2**state.t
    for key, p in params.items():
        g = grads[key]
        m = state.m[key]
        v = state.v[key]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / corr1
        vhat = v / corr2
        p -= tc.lr * mhat / (np.sqrt(vhat) + tc.adam_eps)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def evaluate(
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
    vocab: Vocabulary,
    pairs: list[ListPair],
    *,
    ks: tuple[int, ...] = (5, 10),
    mode: str = "nar",
    max_pairs: int | None = None,
) -> dict[str, float]:
    """Mean HR@k / NDCG@k of generated continuations over ``pairs``."""
    if not pairs:
        raise ValueError("no pairs to evaluate")
    engine = GenerationEngine(params, cfg, vocab)
    subset = pairs[:max_pairs] if max_pairs else pairs
    sums = {f"{name}@{k}": 0.0 for name in ("hr", "ndcg") for k in ks}
    kmax = max(ks)
    for pair in subset:
        generated = engine.generate(
            GenerationRequest(input_items=pair.input_items, k=kmax, mode=mode)
        )
        for k in ks:
            sums[f"hr@{k}"] += hr_at_k(generated, pair.target_items, k)
            sums[f"ndcg@{k}"] += ndcg_at_k(generated, pair.target_items, k)
    n = len(subset)
    return {key: val / n for key, val in sums.items()}


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


def _epoch_batches(
    pairs: list[ListPair],
    policy: MaskPolicy,
    difficulty: float,
    vocab: Vocabulary,
    batch_size: int,
    rng: np.random.Generator,
):
    order = rng.permutation(len(pairs))
    for start in range(0, len(order), batch_size):
        chunk = order[start : start + batch_size]
        bundles = [
            build_bundle(pairs[i], policy, difficulty, vocab, rng) for i in chunk
        ]
        yield collate_bundles(bundles, vocab)


def train(
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
    vocab: Vocabulary,
    splits: DatasetSplits,
    tc: TrainConfig,
    policy: MaskPolicy,
    schedule: DifficultySchedule,
    *,
    eval_fn=None,
    eval_mode: str = "nar",
    log_fn=None,
) -> TrainResult:
    """Optimize ``params`` in place and return the best state seen.

    ``len(schedule)`` caps the epoch count together with ``tc.max_epochs``.
    ``eval_fn(params) -> float`` overrides validation scoring (tests inject
    deterministic sequences); the default generates continuations for the
    validation split and reads ``tc.metric``. ``log_fn`` receives each history
    row as it is produced.
    """
    if not splits.train:
        raise ValueError("training split is empty")
    index = HeadIndex.from_vocab(vocab)
    state = AdamState.for_params(params)
    rng = np.random.default_rng(tc.seed)
    n_epochs = min(tc.max_epochs, len(schedule))

    def default_eval(p: dict[str, np.ndarray]) -> float:
        if tc.metric_name == "loss":
            dev_rng = np.random.default_rng(tc.seed + 1)
            total, count = 0.0, 0
            for batch in _epoch_batches(
                splits.valid, policy, 1.0, vocab, tc.batch_size, dev_rng
            ):
                total += loss_only(p, cfg, vocab, index, batch)
                count += 1
            return total / max(count, 1)
        scores = evaluate(
            p, cfg, vocab, splits.valid, ks=(tc.metric_k,), mode=eval_mode
        )
        return scores[f"{tc.metric_name}@{tc.metric_k}"]

    score_fn = eval_fn or default_eval
    best_params = copy.deepcopy(params)
    best_metric = -np.inf if tc.higher_is_better else np.inf
    best_epoch = -1
    bad_epochs = 0
    history: list[dict] = []
    stopped_early = False

    for epoch in range(n_epochs):
        difficulty = schedule.difficulty_at(epoch)
        t0 = time.perf_counter()
        total_loss, n_batches = 0.0, 0
        for batch in _epoch_batches(
            splits.train, policy, difficulty, vocab, tc.batch_size, rng
        ):
            loss, _, grads = loss_and_grads(
                params, cfg, vocab, index, batch, train_rng=rng
            )
            clip_gradients(grads, tc.grad_clip)
            adam_step(params, grads, state, tc)
            total_loss += loss
            n_batches += 1
        metric = float(score_fn(params))
        improved = metric > best_metric if tc.higher_is_better else metric < best_metric
        if improved:
            best_metric = metric
            best_epoch = epoch
            best_params = copy.deepcopy(params)
            bad_epochs = 0
        else:
            bad_epochs += 1
        row = {
            "epoch": epoch,
            "difficulty": difficulty,
            "train_loss": total_loss / max(n_batches, 1),
            "valid_metric": metric,
            "improved": improved,
            "seconds": time.perf_counter() - t0,
        }
        history.append(row)
        if log_fn is not None:
            log_fn(row)
        if tc.patience > 0 and bad_epochs >= tc.patience:
            stopped_early = True
            break

    for key in params:
        params[key] = best_params[key]
    return TrainResult(
        params=params,
        best_epoch=best_epoch,
        best_metric=best_metric,
        history=history,
        stopped_early=stopped_early,
    )
