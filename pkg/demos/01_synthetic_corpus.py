"""
Building a corpus: synthesis, filtering, vocabulary, splits
===========================================================

A training corpus is a plain text file with one item list per line. This
demo generates a synthetic corpus with planted category structure, cleans
it, and turns it into the (input, target) pairs the trainer consumes.
"""

from collections import Counter

from listcont.corpus import (
    build_vocabulary,
    encode_lists,
    filter_and_truncate,
    make_splits,
    synthesize_corpus,
)

# Each of the 6 categories owns a block of 20 items arranged in a cycle.
# A list is a walk: with probability 0.9 it steps to the cycle successor,
# otherwise it jumps to a uniformly random item.
lists, truth = synthesize_corpus(
    num_items=120,
    num_categories=6,
    num_lists=500,
    len_min=5,
    len_max=18,
    pattern_strength=0.9,
    seed=0,
)
print(f"synthesized {len(lists)} lists, e.g. {lists[0][:8]} ...")

# Drop rare items and clamp list lengths. The two passes interact (dropping
# an item can shorten a list below the minimum), so the filter iterates to a
# fixpoint: running it again changes nothing.
filtered = filter_and_truncate(lists, min_freq=5, min_len=4, max_len=15)
assert filter_and_truncate(filtered, min_freq=5, min_len=4, max_len=15) == filtered
print(f"after filtering: {len(filtered)} lists "
      f"(lengths {min(map(len, filtered))}..{max(map(len, filtered))})")

# The vocabulary assigns dense integer ids by descending frequency.
vocab = build_vocabulary(filtered)
encoded = encode_lists(filtered, vocab)
print(f"vocabulary: {vocab.num_items} items; "
      f"most frequent token {vocab.tokens[0]!r} (count {vocab.frequencies[0]})")

# Every list is split into an input prefix and a target suffix (the part the
# model must continue), then the pairs are shuffled into 8:1:1 train/valid/test.
splits = make_splits(encoded, ratios=(8, 1, 1), seed=1)
pair = splits.train[0]
print(f"splits: {len(splits.train)}/{len(splits.valid)}/{len(splits.test)} pairs")
print(f"example pair: input {pair.input_items} -> target {pair.target_items}")

# The planted ground truth is available for every surviving token.
cats = Counter(truth[tok] for tok in vocab.tokens)
print(f"true category sizes among kept items: {sorted(cats.values(), reverse=True)}")
