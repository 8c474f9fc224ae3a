"""
Discovering categories from co-occurrence
=========================================

The hierarchical classifier needs every item assigned to a category. When no
catalogue taxonomy exists, categories are discovered from the corpus itself:
items are embedded by list co-occurrence (CBOW with negative sampling) and
the embeddings are clustered with k-means.
"""

import numpy as np

from listcont.categorizer import categorize_items
from listcont.corpus import build_vocabulary, encode_lists

# Four blocks of 25 items; every list samples items from a single block, so
# co-occurrence alone pins down the block structure.
rng = np.random.default_rng(3)
per_block, blocks = 25, 4
lists = []
for _ in range(600):
    block = int(rng.integers(blocks))
    picks = rng.choice(per_block, size=10, replace=False)
    lists.append([str(int(p) + block * per_block) for p in picks])

vocab = build_vocabulary(lists)
encoded = encode_lists(lists, vocab)
true_block = np.array([int(tok) // per_block for tok in vocab.tokens])

# Embed then cluster. Both stages are seeded, so reruns reproduce bit for bit.
labels, table, model = categorize_items(
    encoded, vocab.num_items, blocks, dim=16, window=3, epochs=10, seed=0
)
print(f"embeddings: {table.vectors.shape}, k-means iterations: {model.n_iter}")
print(f"inertia trace (first 5): {[round(v, 2) for v in model.inertia_history[:5]]}")

# The discovered labels are arbitrary permutations of the true blocks, so
# measure agreement by the best label each true block maps to.
agreement = 0
for block in range(blocks):
    members = labels[true_block == block]
    agreement += int(np.bincount(members, minlength=blocks).max())
print(f"cluster/block agreement: {agreement}/{vocab.num_items} items")

# Once assigned, the vocabulary exposes the category partition the model and
# the two-stage classifier use: contiguous local indices inside each category.
vocab.assign_categories(labels, blocks)
sizes = [int(np.sum(labels == c)) for c in range(blocks)]
print(f"category sizes: {sizes} (sum {sum(sizes)} = catalogue size)")
