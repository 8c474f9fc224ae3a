"""
Measuring decode latency and classifier cost
============================================

The benchmark harness times generation stage by stage (embed, encode,
classify, sort/dedup) and counts classifier multiply-accumulates exactly.
Random weights are fine for latency work: the arithmetic is the same.

Run with threads pinned for stable numbers, e.g.::

    OMP_NUM_THREADS=1 OPENBLAS_NUM_THREADS=1 python demos/06_latency_benchmark.py
"""

import numpy as np

from listcont.bench import (
    estimate_classifier_macs,
    make_uniform_vocab,
    random_inputs,
    speedup,
    sweep_categories,
    time_inference,
)
from listcont.inference import GenerationEngine
from listcont.model import ModelConfig, init_params

# --- one-shot vs sequential decoding on a 20k-item catalogue ---------------
vocab = make_uniform_vocab(20_000, 10)
cfg = ModelConfig(dim=32, num_layers=1, num_heads=4, classifier="vanilla",
                  max_seq_len=80, dropout=0.0)
params = init_params(cfg, vocab, np.random.default_rng(0))
inputs = random_inputs(4, 40, vocab.num_items, seed=1)

reports = {}
for mode in ("nar", "ar"):
    engine = GenerationEngine(params, cfg, vocab, collect_timing=True)
    reports[mode] = time_inference(engine, inputs, k=10, mode=mode, runs=3, warmup=2)
    rep = reports[mode]
    stages = "  ".join(f"{name} {ms:.3f}" for name, ms in rep.stage_ms_per_sample.items())
    print(f"{mode:4s}: {rep.mean_ms_per_sample:7.3f} ms/sample  "
          f"(encoder calls {rep.encoder_calls_per_sample:.0f}; {stages})")
print(f"one-shot speedup over sequential: {speedup(reports['ar'], reports['nar']):.2f}x\n")

# --- how category count changes classifier cost ----------------------------
# Splitting an M-way softmax into N categories costs about k*d*(N + M/N)
# multiply-accumulates, minimized near N = sqrt(M).
for n in (1, 10, 100, 1000):
    est = estimate_classifier_macs(k=10, dim=32, num_items=20_000, num_categories=n)
    print(f"N={n:5d}: estimated classifier MACs {est:12.0f}")

# The sweep measures it: same encoder, same inputs, only the category count
# varies. Realized MAC counts match the analytic estimate on balanced blocks.
rows = sweep_categories(
    num_items=20_000, category_grid=[1, 10, 100, 1000], k=10,
    dim=32, num_layers=1, num_heads=4, input_len=40,
    num_samples=3, runs=2, warmup=1, seed=2,
)
print(f"\n{'N':>6s} {'classify ms':>12s} {'macs':>12s}")
for row in rows:
    print(f"{row['num_categories']:6d} {row['classify_ms_per_sample']:12.4f} "
          f"{row['classifier_macs_per_sample']:12d}")
