"""Tests for INI configuration handling and the command-line pipeline."""

from __future__ import annotations

import json

import numpy as np
import pytest

from listcont.cli import main
from listcont.config import ConfigError, ExperimentConfig


def write_config(tmp_path, body: str):
    path = tmp_path / "exp.ini"
    path.write_text(body)
    return str(path)


def test_defaults_cover_every_schema_key():
    """The default config materializes every section and key."""
    cfg = ExperimentConfig.defaults()
    assert cfg.get("run", "seed") == 42
    assert cfg.get("model", "classifier") == "two_stage"
    assert cfg.get("masker", "mask_prob") == 0.80
    assert cfg.get("inference", "emit_topk") is False
    assert cfg.split_ratios() == (8, 1, 1)
    assert cfg.category_grid() == [1, 5, 10, 20, 50, 100]
    assert cfg.bench_modes() == ["nar", "ar"]


def test_load_ini_overrides_defaults(tmp_path):
    """Values in the file replace schema defaults; others remain."""
    path = write_config(tmp_path, "[model]\ndim = 16\nnum_heads = 4\n\n[run]\nseed = 7\n")
    cfg = ExperimentConfig.load(path)
    assert cfg.get("model", "dim") == 16
    assert cfg.get("model", "num_heads") == 4
    assert cfg.get("run", "seed") == 7
    assert cfg.get("model", "num_layers") == 3  # untouched default


def test_load_rejects_unknown_sections_and_keys(tmp_path):
    """Typos fail loudly with the offending name."""
    path = write_config(tmp_path, "[modle]\ndim = 16\n")
    with pytest.raises(ConfigError, match="modle"):
        ExperimentConfig.load(path)

    path = write_config(tmp_path, "[model]\ndimension = 16\n")
    with pytest.raises(ConfigError, match="dimension"):
        ExperimentConfig.load(path)


def test_load_rejects_bad_types(tmp_path):
    """Unparseable values name the dotted field path."""
    path = write_config(tmp_path, "[model]\ndim = large\n")
    with pytest.raises(ConfigError, match="model.dim"):
        ExperimentConfig.load(path)

    path = write_config(tmp_path, "[masker]\nmask_prob = 1.5\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(path)


def test_load_missing_file_errors():
    """A nonexistent config path is a config error."""
    with pytest.raises(ConfigError):
        ExperimentConfig.load("/nonexistent/exp.ini")


def test_bool_parsing(tmp_path):
    """Booleans accept 1/true/yes/on and 0/false/no/off only."""
    for raw, want in (("1", True), ("true", True), ("YES", True), ("on", True),
                      ("0", False), ("False", False), ("no", False), ("off", False)):
        path = write_config(tmp_path, f"[inference]\nemit_topk = {raw}\n")
        assert ExperimentConfig.load(path).get("inference", "emit_topk") is want

    path = write_config(tmp_path, "[inference]\nemit_topk = maybe\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(path)


def test_overrides_apply_and_validate():
    """Dotted overrides parse values and reject unknown or malformed specs."""
    cfg = ExperimentConfig.load(None, overrides=["model.dim=32", "run.seed=3"])
    assert cfg.get("model", "dim") == 32
    assert cfg.get("run", "seed") == 3

    with pytest.raises(ConfigError):
        ExperimentConfig.load(None, overrides=["model.dim"])  # no '='
    with pytest.raises(ConfigError):
        ExperimentConfig.load(None, overrides=["model=16"])  # no key
    with pytest.raises(ConfigError):
        ExperimentConfig.load(None, overrides=["model.nope=16"])


def test_cross_field_validation():
    """Constraints that span keys are enforced at load time."""
    with pytest.raises(ConfigError):
        ExperimentConfig.load(None, overrides=["corpus.min_len=50", "corpus.max_len=20"])
    with pytest.raises(ConfigError):
        ExperimentConfig.load(None, overrides=["masker.mask_prob=0.5"])  # sum != 1
    with pytest.raises(ConfigError):
        ExperimentConfig.load(None, overrides=["model.dim=30"])  # 30 % 8 != 0
    with pytest.raises(ConfigError):
        ExperimentConfig.load(
            None, overrides=["scheduler.steps=10", "trainer.max_epochs=5"]
        )
    with pytest.raises(ConfigError):
        ExperimentConfig.load(None, overrides=["corpus.split_ratios=8:1"])
    with pytest.raises(ConfigError):
        ExperimentConfig.load(None, overrides=["bench.modes=nar,beam"])
    with pytest.raises(ConfigError):
        ExperimentConfig.load(None, overrides=["bench.category_grid=0,5"])


def test_typed_accessors():
    """Config sections convert into the library's value objects."""
    cfg = ExperimentConfig.load(
        None,
        overrides=[
            "model.dim=16", "model.num_heads=2", "model.dropout=0.0",
            "trainer.max_epochs=10", "scheduler.steps=2", "run.seed=5",
        ],
    )
    mc = cfg.model_config()
    assert mc.dim == 16 and mc.num_heads == 2 and mc.dropout == 0.0
    tc = cfg.train_config()
    assert tc.max_epochs == 10
    assert tc.seed == 5 + 4  # stage seed offset from the run seed
    policy = cfg.mask_policy()
    assert policy.random_mask_ratio == 0.15
    sched = cfg.schedule()
    assert sched.kind == "stepwise" and sched.steps == 2 and len(sched) == 10


def test_to_ini_round_trips(tmp_path):
    """Serialized configs reload to the same values, deterministically."""
    cfg = ExperimentConfig.load(None, overrides=["model.dim=48", "model.num_heads=6"])
    text = cfg.to_ini()
    assert text == cfg.to_ini()  # deterministic ordering
    path = tmp_path / "copy.ini"
    path.write_text(text)
    back = ExperimentConfig.load(str(path))
    for section, keys in back.values.items():
        assert keys == cfg.values[section], section


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def run_cli(*argv) -> int:
    return main(list(argv))


def base_overrides(tmp_path, extra=()):
    settings = [
        f"run.out_dir={tmp_path}",
        "synthetic.num_items=40",
        "synthetic.num_categories=4",
        "synthetic.num_lists=120",
        "synthetic.len_min=6",
        "synthetic.len_max=10",
        "corpus.min_freq=2",
        "corpus.min_len=4",
        "corpus.max_len=10",
        "categorizer.dim=8",
        "categorizer.epochs=2",
        "categorizer.num_categories=4",
        "model.dim=8",
        "model.num_layers=1",
        "model.num_heads=2",
        "model.max_seq_len=32",
        "model.dtype=float64",
        "trainer.batch_size=32",
        "trainer.max_epochs=2",
        "trainer.patience=0",
        "scheduler.steps=2",
        "inference.k=5",
        *extra,
    ]
    return [a for setting in settings for a in ("--override", setting)]


def test_cli_exit_code_2_on_config_error(tmp_path, capsys):
    """Config problems exit 2 with a message on stderr."""
    assert run_cli("synth", "--override", "model.dim=oops") == 2
    assert "config error" in capsys.readouterr().err
    assert run_cli("synth", "--config", "/nonexistent.ini") == 2


def test_cli_exit_code_1_on_pipeline_error(tmp_path, capsys):
    """Missing artifacts exit 1 with the failing subcommand named."""
    rc = run_cli("eval", *base_overrides(tmp_path))
    assert rc == 1
    assert "error [eval]" in capsys.readouterr().err


def test_cli_unknown_subcommand_exits_via_argparse(tmp_path):
    """argparse rejects unknown subcommands with SystemExit(2)."""
    with pytest.raises(SystemExit) as exc:
        run_cli("explode")
    assert exc.value.code == 2


def test_cli_synth_preprocess_categorize(tmp_path):
    """The corpus stages produce their documented artifacts."""
    assert run_cli("synth", *base_overrides(tmp_path)) == 0
    assert (tmp_path / "synthetic.txt").exists()
    assert (tmp_path / "true_categories.tsv").exists()

    corpus_override = f"corpus.path={tmp_path / 'synthetic.txt'}"
    assert run_cli("preprocess", *base_overrides(tmp_path, [corpus_override])) == 0
    assert (tmp_path / "vocab.tsv").exists()
    assert (tmp_path / "manifest.json").exists()
    for split in ("train", "valid", "test"):
        assert (tmp_path / f"{split}.txt").exists()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["counts"]["train"] > 0

    assert run_cli("categorize", *base_overrides(tmp_path)) == 0
    assert (tmp_path / "categories.tsv").exists()
    assert (tmp_path / "item_embeddings.npy").exists()
    meta = json.loads((tmp_path / "cluster_meta.json").read_text())
    assert meta["num_categories"] == 4
    emb = np.load(tmp_path / "item_embeddings.npy")
    assert emb.ndim == 2 and emb.shape[1] == 8


def test_cli_train_eval_infer(tmp_path):
    """Training, evaluation, and generation run end to end on a tiny setup."""
    over = base_overrides(tmp_path)
    corpus_override = f"corpus.path={tmp_path / 'synthetic.txt'}"
    assert run_cli("synth", *over) == 0
    assert run_cli("preprocess", *base_overrides(tmp_path, [corpus_override])) == 0
    assert run_cli("categorize", *over) == 0
    assert run_cli("train", *over) == 0
    assert (tmp_path / "checkpoint.bin").exists()
    assert (tmp_path / "train_summary.json").exists()
    assert (tmp_path / "schedule.csv").exists()
    log_lines = (tmp_path / "train_log.jsonl").read_text().strip().splitlines()
    assert len(log_lines) == 2  # one row per epoch
    assert {"epoch", "difficulty", "train_loss"} <= set(json.loads(log_lines[0]))

    assert run_cli("eval", *over) == 0
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert "hr@5" in metrics and "ndcg@5" in metrics
    scores = {k: v for k, v in metrics.items() if k.startswith(("hr@", "ndcg@"))}
    assert all(0.0 <= v <= 1.0 for v in scores.values())

    assert run_cli("infer", "--input", "1 2 3", *over) == 0
    result = json.loads((tmp_path / "infer.json").read_text())
    assert len(result["generated"]) == 5
    assert len(set(result["generated"])) == 5

    # No input anywhere: pipeline error, not a crash.
    assert run_cli("infer", *over) == 1


def test_cli_train_dump_bundles(tmp_path):
    """--dump-bundles writes the requested number of assembled examples."""
    over = base_overrides(tmp_path)
    corpus_override = f"corpus.path={tmp_path / 'synthetic.txt'}"
    assert run_cli("synth", *over) == 0
    assert run_cli("preprocess", *base_overrides(tmp_path, [corpus_override])) == 0
    assert run_cli("categorize", *over) == 0
    assert run_cli("train", "--dump-bundles", "3", *over) == 0
    payload = json.loads((tmp_path / "bundles.json").read_text())
    assert 0.0 < payload["difficulty"] <= 1.0
    bundles = payload["bundles"]
    assert len(bundles) == 3
    first = bundles[0]
    assert {"u", "c", "p", "s", "label_positions", "label_items"} <= set(first)
    assert len(first["u"]) == len(first["c"]) == len(first["p"]) == len(first["s"])
