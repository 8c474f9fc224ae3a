"""Latency measurement and classifier cost accounting.

Timing protocol: batch size 1, a warmup pass that is never timed, then
``runs`` repetitions over the same inputs on the monotonic high-resolution
clock. Reports carry per-stage wall time (embed / encode / classify /
sort_dedup, where classify is score computation and sort_dedup covers
candidate ranking plus de-duplication), encoder-call and multiply-accumulate
counters, and the clock resolution so a reader can judge significance.

MAC accounting covers the classifier only: the flat head costs ``k * d * M``
per generation; the two-stage head costs ``k * d * N`` for the category hop
plus ``d * width`` for each realized local head. A single-category two-stage
model skips the category hop and costs exactly the flat amount.
"""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Vocabulary
from .inference import GenerationEngine, GenerationRequest
from .model import ModelConfig, init_params

__all__ = [
    "LatencyReport",
    "time_inference",
    "speedup",
    "stage_fractions",
    "count_classifier_macs",
    "estimate_classifier_macs",
    "make_uniform_vocab",
    "random_inputs",
    "sweep_categories",
    "write_sweep_csv",
]

STAGES = ("embed", "encode", "classify", "sort_dedup")


@dataclass
class LatencyReport:
    """Result of one timed configuration."""

    mode: str
    classifier: str
    k: int
    num_items: int
    num_categories: int
    dim: int
    num_layers: int
    num_samples: int
    runs: int
    warmup: int
    run_totals_ms: list[float]
    mean_ms_per_sample: float
    std_ms_per_sample: float
    stage_ms_per_sample: dict[str, float]
    stage_coverage: float
    encoder_calls_per_sample: float
    classifier_macs_per_sample: float
    clock_resolution_s: float
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def time_inference(
    engine: GenerationEngine,
    inputs: list[tuple[int, ...]],
    k: int,
    mode: str,
    *,
    runs: int = 5,
    warmup: int = 10,
) -> LatencyReport:
    """Time ``engine`` over ``inputs`` one sample at a time.

    The same requests are replayed ``runs`` times after ``warmup`` untimed
    generations; counters are identical across runs (the decode is
    deterministic), so they are read from the final run.
    """
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    if warmup < 0:
        raise ValueError(f"warmup must be >= 0, got {warmup}")
    if not inputs:
        raise ValueError("no inputs to time")
    requests = [GenerationRequest(input_items=tuple(x), k=k, mode=mode) for x in inputs]
    engine.clock.enabled = True
    for i in range(warmup):
        engine.generate(requests[i % len(requests)])

    n = len(requests)
    run_totals: list[float] = []
    stage_totals = {name: 0.0 for name in STAGES}
    for _ in range(runs):
        engine.reset_counters()
        t0 = time.perf_counter()
        for req in requests:
            engine.generate(req)
        run_totals.append(time.perf_counter() - t0)
        for name in STAGES:
            stage_totals[name] += engine.clock.seconds[name]

    totals_ms = [t * 1000.0 for t in run_totals]
    per_sample = np.array(totals_ms) / n
    stage_ms = {name: stage_totals[name] * 1000.0 / (runs * n) for name in STAGES}
    total_stage = sum(stage_totals.values())
    cfg = engine.cfg
    return LatencyReport(
        mode=mode,
        classifier=cfg.classifier,
        k=k,
        num_items=engine.vocab.num_items,
        num_categories=int(engine.vocab.num_categories or 0),
        dim=cfg.dim,
        num_layers=cfg.num_layers,
        num_samples=n,
        runs=runs,
        warmup=warmup,
        run_totals_ms=totals_ms,
        mean_ms_per_sample=float(per_sample.mean()),
        std_ms_per_sample=float(per_sample.std()),
        stage_ms_per_sample=stage_ms,
        stage_coverage=float(total_stage / sum(run_totals)) if sum(run_totals) else 0.0,
        encoder_calls_per_sample=engine.encoder_calls / n,
        classifier_macs_per_sample=engine.classifier_macs / n,
        clock_resolution_s=time.get_clock_info("perf_counter").resolution,
    )


def speedup(baseline: LatencyReport, candidate: LatencyReport) -> float:
    """How many times faster the candidate is, on mean per-sample time."""
    return baseline.mean_ms_per_sample / candidate.mean_ms_per_sample


def stage_fractions(report: LatencyReport) -> dict[str, float]:
    """Each stage's share of the summed stage time."""
    total = sum(report.stage_ms_per_sample.values())
    if total <= 0:
        return {name: 0.0 for name in STAGES}
    return {name: ms / total for name, ms in report.stage_ms_per_sample.items()}


# ---------------------------------------------------------------------------
# MAC accounting
# ---------------------------------------------------------------------------


def count_classifier_macs(
    *,
    k: int,
    dim: int,
    num_items: int,
    classifier: str,
    num_categories: int = 1,
    local_widths: list[int] | None = None,
) -> int:
    """Exact classifier multiply-accumulates for one generation.

    ``local_widths`` lists the realized local-head width for every scored
    position (engines record them); it is required for a multi-category
    two-stage count because the widths depend on which categories the model
    picked.
    """
    if k < 1 or dim < 1 or num_items < 1:
        raise ValueError("k, dim and num_items must be >= 1")
    if classifier == "vanilla":
        return k * dim * num_items
    if classifier != "two_stage":
        raise ValueError(f"unknown classifier {classifier!r}")
    if num_categories < 1:
        raise ValueError("num_categories must be >= 1")
    if num_categories == 1:
        # The category softmax over one logit is a constant; engines skip it.
        return k * dim * num_items
    if local_widths is None:
        raise ValueError("local_widths is required for multi-category counts")
    return k * dim * num_categories + dim * int(sum(local_widths))


def estimate_classifier_macs(
    *, k: int, dim: int, num_items: int, num_categories: int
) -> float:
    """Balanced-partition estimate ``k * d * (N + M / N)``; minimized near
    ``N = sqrt(M)``, which is the point of the category sweep."""
    if num_categories == 1:
        return float(k * dim * num_items)
    return k * dim * (num_categories + num_items / num_categories)


# ---------------------------------------------------------------------------
# synthetic setups for benchmarking
# ---------------------------------------------------------------------------


def make_uniform_vocab(num_items: int, num_categories: int) -> Vocabulary:
    """A vocabulary of ``num_items`` synthetic tokens in balanced contiguous
    category blocks (sizes differ by at most one)."""
    vocab = Vocabulary(
        tokens=[str(i) for i in range(num_items)],
        frequencies=np.ones(num_items, dtype=np.int64),
    )
    base, rem = divmod(num_items, num_categories)
    sizes = [base + (1 if c < rem else 0) for c in range(num_categories)]
    vocab.assign_categories(np.repeat(np.arange(num_categories), sizes), num_categories)
    return vocab


def random_inputs(
    num_samples: int, input_len: int, num_items: int, seed: int = 0
) -> list[tuple[int, ...]]:
    """Uniform random input lists for benchmarking."""
    rng = np.random.default_rng(seed)
    return [
        tuple(int(v) for v in rng.integers(num_items, size=input_len))
        for _ in range(num_samples)
    ]


def sweep_categories(
    *,
    num_items: int,
    category_grid: list[int],
    k: int = 10,
    dim: int = 64,
    num_layers: int = 3,
    num_heads: int = 8,
    input_len: int = 60,
    num_samples: int = 20,
    runs: int = 3,
    warmup: int = 5,
    seed: int = 0,
) -> list[dict]:
    """Time the two-stage classifier across category counts on one item set.

    Every grid point gets a fresh balanced vocabulary and fresh random
    parameters; rows carry per-sample latency, classify-stage latency,
    realized MACs and the balanced-partition estimate.
    """
    inputs = random_inputs(num_samples, input_len, num_items, seed=seed)
    rows: list[dict] = []
    for n_cat in category_grid:
        vocab = make_uniform_vocab(num_items, n_cat)
        cfg = ModelConfig(
            dim=dim,
            num_layers=num_layers,
            num_heads=num_heads,
            classifier="two_stage",
            max_seq_len=input_len + k + 3,
            dropout=0.0,
        )
        params = init_params(cfg, vocab, np.random.default_rng(seed + n_cat))
        engine = GenerationEngine(params, cfg, vocab, collect_timing=True)
        report = time_inference(engine, inputs, k, "nar", runs=runs, warmup=warmup)
        rows.append(
            {
                "num_categories": n_cat,
                "num_items": num_items,
                "k": k,
                "dim": dim,
                "mean_ms_per_sample": report.mean_ms_per_sample,
                "classify_ms_per_sample": report.stage_ms_per_sample["classify"],
                "classifier_macs_per_sample": int(report.classifier_macs_per_sample),
                "estimated_macs": estimate_classifier_macs(
                    k=k, dim=dim, num_items=num_items, num_categories=n_cat
                ),
            }
        )
    return rows


def write_sweep_csv(path: str | Path, rows: list[dict]) -> None:
    if not rows:
        raise ValueError("no sweep rows to write")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
