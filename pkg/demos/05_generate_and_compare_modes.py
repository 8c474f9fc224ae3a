"""
Generating continuations: one-shot, sequential, and recall decoding
===================================================================

The same trained model supports three decode modes. One-shot ("nar") plants
K mask tokens and fills them all from a single encoder pass; sequential
("ar") reveals one item per pass, K passes total; "recall" ranks a single
mask's distribution and takes the top K. The engine counts encoder calls,
so the cost difference is visible directly.
"""

import numpy as np

from listcont.corpus import build_vocabulary, encode_lists, make_splits, synthesize_corpus
from listcont.inference import GenerationEngine, GenerationRequest
from listcont.masker import MaskPolicy
from listcont.model import ModelConfig, init_params
from listcont.scheduler import make_schedule
from listcont.trainer import TrainConfig, train

lists, truth = synthesize_corpus(
    num_items=200, num_categories=4, num_lists=1200,
    len_min=8, len_max=16, pattern_strength=0.95, seed=0,
)
vocab = build_vocabulary(lists)
vocab.assign_categories(np.array([truth[t] for t in vocab.tokens]), 4)
splits = make_splits(encode_lists(lists, vocab), ratios=(8, 1, 1), seed=1)

cfg = ModelConfig(dim=16, num_layers=1, num_heads=2, classifier="two_stage",
                  max_seq_len=48, dropout=0.0)
params = init_params(cfg, vocab, np.random.default_rng(2))
result = train(
    params, cfg, vocab, splits,
    TrainConfig(lr=0.01, batch_size=128, max_epochs=14, patience=0, seed=3),
    MaskPolicy(),
    make_schedule("stepwise", 5, 14),
)

engine = GenerationEngine(result.params, cfg, vocab)

# Pick a test pair the model handles well, so the modes have something to
# disagree about; aggregate quality belongs to the evaluate() helper.
def hits_at_5(pair):
    out = engine.generate(GenerationRequest(input_items=pair.input_items, k=5, mode="nar"))
    return len(set(out) & set(pair.target_items))

pair = max(splits.test[:40], key=hits_at_5)
print(f"input:  {list(pair.input_items)}")
print(f"truth:  {list(pair.target_items)}")

for mode in ("nar", "ar", "recall"):
    engine.reset_counters()
    request = GenerationRequest(input_items=pair.input_items, k=5, mode=mode)
    generated = engine.generate(request)
    hits = len(set(generated) & set(pair.target_items))
    print(f"{mode:6s}: {generated}  encoder calls {engine.encoder_calls}  "
          f"hits {hits}/5")

# Per-position candidates (with joint log-probability scores) are available
# for inspection; the duplicate-free final list is a greedy scan over them.
cands = engine.topk_per_position(
    GenerationRequest(input_items=pair.input_items, k=3, mode="nar")
)
for pos in range(cands.num_positions):
    row = ", ".join(f"{item} ({score:.2f})"
                    for item, score in zip(cands.items[pos][:3], cands.scores[pos][:3]))
    print(f"position {pos}: {row}")
