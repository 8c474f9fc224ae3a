"""Item categorization: co-occurrence embeddings clustered into categories.

Items that appear in similar list contexts should share a category, so the
two-stage classifier's first hop carries real signal. This module learns
CBOW-style embeddings with negative sampling over the (already filtered)
lists, then partitions items with k-means. Both parts are implemented
directly in numpy so a seed fully determines the result and the clustering
invariants (monotone inertia, farthest-point reseeding of emptied clusters)
hold by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EmbeddingTable",
    "ClusterModel",
    "train_item_embeddings",
    "cluster_items",
    "categorize_items",
]


@dataclass
class EmbeddingTable:
    """One vector per dense item id; ``vectors[i]`` embeds item ``i``."""

    vectors: np.ndarray

    @property
    def num_items(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class ClusterModel:
    """k-means result: centroids, per-item labels and the inertia trace.

    ``inertia_history[t]`` is the total squared distance to assigned centroids
    after assignment step ``t``; Lloyd iterations make it non-increasing.
    """

    centroids: np.ndarray
    labels: np.ndarray
    inertia_history: list[float] = field(default_factory=list)
    n_iter: int = 0

    @property
    def num_clusters(self) -> int:
        return self.centroids.shape[0]

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1] if self.inertia_history else float("nan")


# ---------------------------------------------------------------------------
# CBOW with negative sampling
# ---------------------------------------------------------------------------


def _build_examples(lists: list[list[int]], window: int):
    """(contexts, targets): context rows padded with -1 to width 2 * window."""
    ctx_rows: list[list[int]] = []
    targets: list[int] = []
    width = 2 * window
    for items in lists:
        n = len(items)
        for t in range(n):
            lo, hi = max(0, t - window), min(n, t + window + 1)
            ctx = items[lo:t] + items[t + 1 : hi]
            if not ctx:
                continue
            ctx_rows.append(ctx + [-1] * (width - len(ctx)))
            targets.append(items[t])
    if not targets:
        raise ValueError("no training contexts; lists too short for the window")
    return np.asarray(ctx_rows, dtype=np.int64), np.asarray(targets, dtype=np.int64)


def train_item_embeddings(
    encoded_lists: list[list[int]],
    num_items: int,
    *,
    dim: int = 64,
    window: int = 2,
    negatives: int = 5,
    epochs: int = 20,
    lr: float = 0.025,
    batch_size: int = 512,
    seed: int = 0,
) -> EmbeddingTable:
    """Learn CBOW embeddings: predict each item from the mean of its window.

    The target and ``negatives`` sampled items (unigram^0.75 distribution) are
    scored against the context mean with a sigmoid; updates are plain SGD with
    the learning rate decaying linearly to ~0 over all batches. Item vectors
    are the input-side matrix.
    """
    if num_items < 1 or dim < 1 or window < 1 or negatives < 1:
        raise ValueError("num_items, dim, window and negatives must be >= 1")
    if epochs < 1 or lr <= 0 or batch_size < 1:
        raise ValueError("epochs and batch_size must be >= 1, lr > 0")
    rng = np.random.default_rng(seed)
    ctx, tgt = _build_examples(encoded_lists, window)
    n_examples = len(tgt)

    counts = np.bincount(tgt, minlength=num_items).astype(np.float64)
    noise = counts**0.75
    noise_sum = noise.sum()
    if noise_sum <= 0:
        raise ValueError("degenerate corpus: no item occurrences")
    noise /= noise_sum

    w_in = (rng.random((num_items, dim)) - 0.5) / dim
    w_out = np.zeros((num_items, dim))

    total_batches = epochs * ((n_examples + batch_size - 1) // batch_size)
    step = 0
    for _ in range(epochs):
        order = rng.permutation(n_examples)
        for start in range(0, n_examples, batch_size):
            sel = order[start : start + batch_size]
            cur_lr = lr * max(1.0 - step / total_batches, 1e-4)
            step += 1
            c = ctx[sel]
            valid = c >= 0
            n_ctx = valid.sum(axis=1, keepdims=True)
            vecs = w_in[np.where(valid, c, 0)] * valid[:, :, None]
            h = vecs.sum(axis=1) / n_ctx

            neg = rng.choice(num_items, size=(len(sel), negatives), p=noise)
            cols = np.concatenate([tgt[sel][:, None], neg], axis=1)
            out = w_out[cols]
            scores = np.einsum("bd,bkd->bk", h, out)
            # saturated sigmoid: clamp to keep exp() in range, gradients there
            # are numerically zero anyway
            sig = 1.0 / (1.0 + np.exp(-np.clip(scores, -30.0, 30.0)))
            sig[:, 0] -= 1.0  # gradient of -log sigma at the positive column

            dh = np.einsum("bk,bkd->bd", sig, out)
            dout = sig[:, :, None] * h[:, None, :]
            np.add.at(w_out, cols, -cur_lr * dout)
            dctx = (dh / n_ctx)[:, None, :] * valid[:, :, None]
            np.add.at(w_in, np.where(valid, c, 0), -cur_lr * dctx)
    return EmbeddingTable(vectors=w_in)


# ---------------------------------------------------------------------------
# k-means (Lloyd with k-means++ seeding)
# ---------------------------------------------------------------------------


def _sq_dist_to(points: np.ndarray, centroid: np.ndarray) -> np.ndarray:
    diff = points - centroid
    return (diff * diff).sum(axis=1)


def _all_sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n_points, n_centroids) squared Euclidean distances, computed exactly."""
    out = np.empty((points.shape[0], centroids.shape[0]))
    for j in range(centroids.shape[0]):
        out[:, j] = _sq_dist_to(points, centroids[j])
    return out


def _seed_centroids(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++: spread initial centroids proportional to squared distance."""
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = _sq_dist_to(points, centroids[0])
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[j] = points[rng.integers(n)]
        else:
            centroids[j] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, _sq_dist_to(points, centroids[j]))
    return centroids


def cluster_items(
    table: EmbeddingTable | np.ndarray,
    num_clusters: int,
    *,
    max_iter: int = 100,
    seed: int = 0,
) -> ClusterModel:
    """Partition item vectors into ``num_clusters`` groups with Lloyd k-means.

    A cluster that loses all members is reseeded to the point farthest from
    its currently assigned centroid, which keeps every category non-empty.
    Iteration stops when assignments are stable or ``max_iter`` is reached.
    """
    points = np.asarray(table.vectors if isinstance(table, EmbeddingTable) else table,
                        dtype=np.float64)
    n = points.shape[0]
    if num_clusters < 1:
        raise ValueError(f"num_clusters must be >= 1, got {num_clusters}")
    if n < num_clusters:
        raise ValueError(f"cannot form {num_clusters} clusters from {n} points")
    rng = np.random.default_rng(seed)
    centroids = _seed_centroids(points, num_clusters, rng)

    labels = np.zeros(n, dtype=np.int64)
    history: list[float] = []
    n_iter = 0
    rows = np.arange(n)
    for n_iter in range(1, max_iter + 1):
        dists = _all_sq_dists(points, centroids)
        new_labels = dists.argmin(axis=1)
        cur_d = dists[rows, new_labels].copy()
        history.append(float(cur_d.sum()))
        if n_iter > 1 and np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
        for j in range(num_clusters):
            members = np.flatnonzero(labels == j)
            if len(members) == 0:
                # Reseed to the worst-fit point (farthest from its assigned
                # centroid) so no category dies; zero its distance so a second
                # empty cluster in the same sweep picks a different point.
                worst = int(cur_d.argmax())
                centroids[j] = points[worst]
                labels[worst] = j
                cur_d[worst] = 0.0
            else:
                centroids[j] = points[members].mean(axis=0)
    return ClusterModel(
        centroids=centroids, labels=labels, inertia_history=history, n_iter=n_iter
    )


def categorize_items(
    encoded_lists: list[list[int]],
    num_items: int,
    num_categories: int,
    *,
    dim: int = 64,
    window: int = 2,
    negatives: int = 5,
    epochs: int = 20,
    lr: float = 0.025,
    batch_size: int = 512,
    seed: int = 0,
) -> tuple[np.ndarray, EmbeddingTable, ClusterModel]:
    """Embed items from list co-occurrence, then cluster into categories.

    Returns ``(item_to_category, embeddings, cluster_model)``.
    """
    table = train_item_embeddings(
        encoded_lists,
        num_items,
        dim=dim,
        window=window,
        negatives=negatives,
        epochs=epochs,
        lr=lr,
        batch_size=batch_size,
        seed=seed,
    )
    model = cluster_items(table, num_categories, seed=seed + 1)
    return model.labels.copy(), table, model
