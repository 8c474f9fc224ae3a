"""Command-line pipeline: synthesize, preprocess, categorize, train, use.

Every subcommand reads one INI config (``--config``, optional; defaults
apply) plus any number of ``--override section.key=value`` flags, works
inside ``[run] out_dir``, and re-serializes the fully resolved config there
as ``resolved.cfg``. Stage seeds derive from ``[run] seed`` with fixed
offsets (synthesis +0, splitting +1, categorizer +2, model init +3, training
+4, benchmark inputs +5), so a single seed pins the whole pipeline.

Exit codes: 0 success, 1 pipeline failure (bad data, infeasible request,
broken checkpoint), 2 configuration or usage error.

Artifacts per subcommand::

    synth       synthetic.txt, true_categories.tsv
    preprocess  vocab.tsv, train/valid/test.txt, manifest.json
    categorize  categories.tsv, item_embeddings.npy, cluster_meta.json
    train       checkpoint.bin, train_log.jsonl, train_summary.json,
                schedule.csv (or bundles.json with --dump-bundles)
    eval        metrics.json
    infer       infer.json
    bench       bench_report.json, macs.csv, latency.csv
    sweep       sweep.csv
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .categorizer import categorize_items
from .config import ConfigError, ExperimentConfig
from .corpus import (
    CorpusError,
    build_vocabulary,
    encode_lists,
    filter_and_truncate,
    load_categories,
    load_splits,
    load_vocabulary,
    make_splits,
    parse_corpus_file,
    save_categories,
    save_splits,
    save_vocabulary,
    synthesize_corpus,
    write_corpus_file,
)
from .inference import GenerationEngine, GenerationError, GenerationRequest
from .masker import build_bundle
from .model import CheckpointError, init_params, load_checkpoint, save_checkpoint
from .trainer import evaluate, train

__all__ = ["main"]


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare_run(cfg: ExperimentConfig) -> Path:
    out = Path(str(cfg.get("run", "out_dir")))
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved.cfg").write_text(cfg.to_ini(), encoding="utf-8")
    return out


def _load_workspace(out: Path):
    """Vocabulary (with categories) and splits produced by earlier stages."""
    vocab_path = out / "vocab.tsv"
    if not vocab_path.exists():
        raise CorpusError(f"{vocab_path} missing; run the preprocess subcommand first")
    vocab = load_vocabulary(vocab_path)
    cat_path = out / "categories.tsv"
    if not cat_path.exists():
        raise CorpusError(f"{cat_path} missing; run the categorize subcommand first")
    load_categories(cat_path, vocab)
    splits = load_splits(out)
    return vocab, splits


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(cfg: ExperimentConfig, args) -> int:
    out = _prepare_run(cfg)
    seed = int(cfg.get("run", "seed"))
    lists, truth = synthesize_corpus(
        num_items=cfg.get("synthetic", "num_items"),
        num_categories=cfg.get("synthetic", "num_categories"),
        num_lists=cfg.get("synthetic", "num_lists"),
        len_min=cfg.get("synthetic", "len_min"),
        len_max=cfg.get("synthetic", "len_max"),
        pattern_strength=cfg.get("synthetic", "pattern_strength"),
        seed=seed,
    )
    write_corpus_file(out / "synthetic.txt", lists)
    with open(out / "true_categories.tsv", "w", encoding="utf-8") as fh:
        for tok in sorted(truth, key=int):
            fh.write(f"{tok}\t{truth[tok]}\n")
    print(f"synth: wrote {len(lists)} lists over {len(truth)} items to {out}")
    return 0


def cmd_preprocess(cfg: ExperimentConfig, args) -> int:
    out = _prepare_run(cfg)
    path = str(cfg.get("corpus", "path")) or str(out / "synthetic.txt")
    lists = parse_corpus_file(path)
    filtered = filter_and_truncate(
        lists,
        min_freq=cfg.get("corpus", "min_freq"),
        min_len=cfg.get("corpus", "min_len"),
        max_len=cfg.get("corpus", "max_len"),
    )
    if not filtered:
        raise CorpusError("no lists survive filtering; loosen corpus settings")
    vocab = build_vocabulary(filtered)
    encoded = encode_lists(filtered, vocab)
    splits = make_splits(
        encoded,
        ratios=cfg.split_ratios(),
        seed=int(cfg.get("run", "seed")) + 1,
        extra_manifest={
            "source": path,
            "min_freq": cfg.get("corpus", "min_freq"),
            "min_len": cfg.get("corpus", "min_len"),
            "max_len": cfg.get("corpus", "max_len"),
            "num_items": vocab.num_items,
        },
    )
    save_splits(out, splits)
    save_vocabulary(out / "vocab.tsv", vocab)
    counts = splits.manifest["counts"]
    print(
        f"preprocess: {len(lists)} -> {len(filtered)} lists, {vocab.num_items} items; "
        f"splits {counts['train']}/{counts['valid']}/{counts['test']}"
    )
    return 0


def cmd_categorize(cfg: ExperimentConfig, args) -> int:
    out = _prepare_run(cfg)
    vocab_path = out / "vocab.tsv"
    if not vocab_path.exists():
        raise CorpusError(f"{vocab_path} missing; run the preprocess subcommand first")
    vocab = load_vocabulary(vocab_path)
    splits = load_splits(out)
    all_lists = [
        list(pair.full_list) for _, pairs in splits for pair in pairs
    ]
    labels, table, model = categorize_items(
        all_lists,
        vocab.num_items,
        cfg.get("categorizer", "num_categories"),
        dim=cfg.get("categorizer", "dim"),
        window=cfg.get("categorizer", "window"),
        negatives=cfg.get("categorizer", "negatives"),
        epochs=cfg.get("categorizer", "epochs"),
        lr=cfg.get("categorizer", "lr"),
        batch_size=cfg.get("categorizer", "batch_size"),
        seed=int(cfg.get("run", "seed")) + 2,
    )
    vocab.assign_categories(labels, int(cfg.get("categorizer", "num_categories")))
    save_categories(out / "categories.tsv", vocab)
    np.save(out / "item_embeddings.npy", table.vectors)
    sizes = [int(len(m)) for m in vocab.category_members()]
    _write_json(
        out / "cluster_meta.json",
        {
            "num_categories": len(sizes),
            "category_sizes": sizes,
            "inertia_history": model.inertia_history,
            "n_iter": model.n_iter,
        },
    )
    print(
        f"categorize: {vocab.num_items} items -> {len(sizes)} categories, "
        f"sizes {min(sizes)}..{max(sizes)}, inertia {model.inertia:.4f} "
        f"after {model.n_iter} iterations"
    )
    return 0


def cmd_train(cfg: ExperimentConfig, args) -> int:
    out = _prepare_run(cfg)
    vocab, splits = _load_workspace(out)
    model_cfg = cfg.model_config()
    policy = cfg.mask_policy()
    schedule = cfg.schedule()
    tc = cfg.train_config()
    rng = np.random.default_rng(int(cfg.get("run", "seed")) + 3)
    params = init_params(model_cfg, vocab, rng)

    if args.dump_bundles:
        dump_rng = np.random.default_rng(tc.seed)
        difficulty = schedule.difficulty_at(0)
        bundles = [
            build_bundle(pair, policy, difficulty, vocab, dump_rng).to_json_dict()
            for pair in splits.train[: args.dump_bundles]
        ]
        _write_json(out / "bundles.json", {"difficulty": difficulty, "bundles": bundles})
        print(f"train: dumped {len(bundles)} bundles to {out / 'bundles.json'}")
        return 0

    schedule.to_csv(out / "schedule.csv")
    log_path = out / "train_log.jsonl"
    max_pairs = int(cfg.get("trainer", "eval_max_pairs")) or None
    if max_pairs:
        eval_split = splits.valid[:max_pairs]
        splits = type(splits)(
            train=splits.train, valid=eval_split, test=splits.test, manifest=splits.manifest
        )
    with open(log_path, "w", encoding="utf-8") as log_fh:

        def log_fn(row: dict) -> None:
            log_fh.write(json.dumps(row, sort_keys=True) + "\n")
            log_fh.flush()
            print(
                f"epoch {row['epoch']:3d} difficulty {row['difficulty']:.2f} "
                f"loss {row['train_loss']:.4f} valid {row['valid_metric']:.4f}"
                + (" *" if row["improved"] else "")
            )

        result = train(
            params, model_cfg, vocab, splits, tc, policy, schedule, log_fn=log_fn
        )
    save_checkpoint(out / "checkpoint.bin", result.params, model_cfg)
    _write_json(
        out / "train_summary.json",
        {
            "best_epoch": result.best_epoch,
            "best_metric": result.best_metric,
            "epochs_run": len(result.history),
            "stopped_early": result.stopped_early,
            "metric": tc.metric,
        },
    )
    print(
        f"train: best {tc.metric}={result.best_metric:.4f} at epoch {result.best_epoch}; "
        f"checkpoint {out / 'checkpoint.bin'}"
    )
    return 0


def _load_model(out: Path):
    ckpt = out / "checkpoint.bin"
    if not ckpt.exists():
        raise CheckpointError(f"{ckpt} missing; run the train subcommand first")
    return load_checkpoint(ckpt)


def cmd_eval(cfg: ExperimentConfig, args) -> int:
    out = _prepare_run(cfg)
    vocab, splits = _load_workspace(out)
    params, model_cfg = _load_model(out)
    k = int(cfg.get("inference", "k"))
    mode = str(cfg.get("inference", "mode"))
    max_pairs = int(cfg.get("trainer", "eval_max_pairs")) or None
    ks = tuple(sorted({5, k}))
    scores = evaluate(
        params, model_cfg, vocab, splits.test, ks=ks, mode=mode, max_pairs=max_pairs
    )
    payload = {
        "mode": mode,
        "k": k,
        "classifier": model_cfg.classifier,
        "num_pairs": len(splits.test[:max_pairs] if max_pairs else splits.test),
        **{key: round(val, 10) for key, val in scores.items()},
    }
    _write_json(out / "metrics.json", payload)
    print("eval: " + "  ".join(f"{key}={val:.4f}" for key, val in sorted(scores.items())))
    return 0


def cmd_infer(cfg: ExperimentConfig, args) -> int:
    out = _prepare_run(cfg)
    vocab, _splits = _load_workspace(out)
    params, model_cfg = _load_model(out)
    raw = args.input or str(cfg.get("inference", "input_items"))
    if not raw.strip():
        raise GenerationError(
            "no input list; pass --input \"3 17 42\" or set inference.input_items"
        )
    try:
        items = tuple(int(tok) for tok in raw.split())
    except ValueError:
        raise GenerationError(f"input items must be integers, got {raw!r}") from None
    request = GenerationRequest(
        input_items=items,
        k=int(cfg.get("inference", "k")),
        mode=str(cfg.get("inference", "mode")),
    )
    engine = GenerationEngine(params, model_cfg, vocab)
    generated = engine.generate(request)
    payload = {
        "input": list(items),
        "mode": request.mode,
        "k": request.k,
        "generated": generated,
        "generated_tokens": [vocab.decode(i) for i in generated],
        "encoder_calls": engine.encoder_calls,
    }
    if bool(cfg.get("inference", "emit_topk")) and request.mode != "ar":
        cands = engine.topk_per_position(request)
        payload["topk_per_position"] = [
            [
                {"item": int(it), "score": float(sc)}
                for it, sc in zip(cands.items[i], cands.scores[i])
            ]
            for i in range(cands.num_positions)
        ]
    _write_json(out / "infer.json", payload)
    print(f"infer[{request.mode}]: {list(items)} -> {generated}")
    return 0


def cmd_bench(cfg: ExperimentConfig, args) -> int:
    out = _prepare_run(cfg)
    seed = int(cfg.get("run", "seed"))
    ckpt = out / "checkpoint.bin"
    if ckpt.exists() and (out / "vocab.tsv").exists():
        vocab, splits = _load_workspace(out)
        params, model_cfg = _load_model(out)
        inputs = [pair.input_items for pair in splits.test[: cfg.get("bench", "num_samples")]]
        source = "checkpoint"
    else:
        # No trained pipeline in this directory: time fresh random weights,
        # which is equivalent for latency purposes.
        model_cfg = cfg.model_config()
        vocab = bench_mod.make_uniform_vocab(
            cfg.get("synthetic", "num_items"), cfg.get("categorizer", "num_categories")
        )
        params = init_params(model_cfg, vocab, np.random.default_rng(seed + 3))
        inputs = bench_mod.random_inputs(
            cfg.get("bench", "num_samples"),
            cfg.get("bench", "input_len"),
            vocab.num_items,
            seed=seed + 5,
        )
        source = "random"
    if not inputs:
        raise GenerationError("no benchmark inputs available")
    k = int(cfg.get("inference", "k"))
    reports = {}
    for mode in cfg.bench_modes():
        engine = GenerationEngine(params, model_cfg, vocab, collect_timing=True)
        reports[mode] = bench_mod.time_inference(
            engine,
            inputs,
            k,
            mode,
            runs=cfg.get("bench", "runs"),
            warmup=cfg.get("bench", "warmup"),
        )
        del engine
    payload = {
        "source": source,
        "reports": {mode: rep.to_dict() for mode, rep in reports.items()},
    }
    if "nar" in reports and "ar" in reports:
        payload["nar_speedup_vs_ar"] = bench_mod.speedup(reports["ar"], reports["nar"])
    _write_json(out / "bench_report.json", payload)

    with open(out / "macs.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("mode,classifier,k,num_items,num_categories,samples,encoder_calls,classifier_macs\n")
        for mode, rep in reports.items():
            fh.write(
                f"{mode},{rep.classifier},{rep.k},{rep.num_items},{rep.num_categories},"
                f"{rep.num_samples},{int(rep.encoder_calls_per_sample * rep.num_samples)},"
                f"{int(rep.classifier_macs_per_sample * rep.num_samples)}\n"
            )

    # Timing table (not byte-reproducible; macs.csv above carries the
    # deterministic counters). Speedup is relative to the slowest mode timed.
    slowest = max(reports.values(), key=lambda r: r.mean_ms_per_sample)
    with open(out / "latency.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("mode,classifier,M,N,K,d,H,per_sample_ms,mac_count,speedup\n")
        for mode, rep in reports.items():
            fh.write(
                f"{mode},{rep.classifier},{rep.num_items},{rep.num_categories},{rep.k},"
                f"{rep.dim},{rep.num_layers},{rep.mean_ms_per_sample:.6f},"
                f"{int(rep.classifier_macs_per_sample * rep.num_samples)},"
                f"{bench_mod.speedup(slowest, rep):.4f}\n"
            )
    for mode, rep in reports.items():
        print(
            f"bench[{mode}]: {rep.mean_ms_per_sample:.3f} ms/sample "
            f"(stages {', '.join(f'{s}={v:.3f}' for s, v in rep.stage_ms_per_sample.items())})"
        )
    if "nar_speedup_vs_ar" in payload:
        print(f"bench: nar is {payload['nar_speedup_vs_ar']:.2f}x faster than ar")
    return 0


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    out = _prepare_run(cfg)
    rows = bench_mod.sweep_categories(
        num_items=cfg.get("synthetic", "num_items"),
        category_grid=cfg.category_grid(),
        k=cfg.get("inference", "k"),
        dim=cfg.get("model", "dim"),
        num_layers=cfg.get("model", "num_layers"),
        num_heads=cfg.get("model", "num_heads"),
        input_len=cfg.get("bench", "input_len"),
        num_samples=cfg.get("bench", "num_samples"),
        runs=cfg.get("bench", "runs"),
        warmup=cfg.get("bench", "warmup"),
        seed=int(cfg.get("run", "seed")) + 5,
    )
    bench_mod.write_sweep_csv(out / "sweep.csv", rows)
    print(f"{'N':>6} {'ms/sample':>12} {'classify ms':>12} {'macs':>14}")
    for row in rows:
        print(
            f"{row['num_categories']:>6} {row['mean_ms_per_sample']:>12.3f} "
            f"{row['classify_ms_per_sample']:>12.3f} {row['classifier_macs_per_sample']:>14}"
        )
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="listcont",
        description="Fast item-list continuation: train and benchmark one-pass decoders.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "synth": (cmd_synth, "generate a synthetic category-structured corpus"),
        "preprocess": (cmd_preprocess, "filter a corpus and build vocabulary + splits"),
        "categorize": (cmd_categorize, "learn item embeddings and cluster into categories"),
        "train": (cmd_train, "train the continuation model"),
        "eval": (cmd_eval, "score the checkpoint on the test split"),
        "infer": (cmd_infer, "generate a continuation for one input list"),
        "bench": (cmd_bench, "time inference modes and count classifier work"),
        "sweep": (cmd_sweep, "latency/MACs across category counts"),
    }
    for name, (fn, help_text) in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="INI config path (defaults apply if omitted)")
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override one config value; repeatable",
        )
        if name == "train":
            p.add_argument(
                "--dump-bundles",
                type=int,
                default=0,
                metavar="N",
                help="write N masked training bundles as JSON and exit",
            )
        if name == "infer":
            p.add_argument("--input", default=None, help="space-separated dense item ids")
        p.set_defaults(fn=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config, args.override)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.fn(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CorpusError, GenerationError, CheckpointError, OSError, ValueError) as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
