"""Experiment configuration: INI files with a strict schema and overrides.

Every pipeline stage reads one config. Unknown sections or keys are rejected
(typos must fail loudly, not silently fall back to defaults), every value is
type-checked and range-checked at load time, and errors carry the dotted
field path. ``--override section.key=value`` edits a loaded config from the
command line; the fully resolved config is re-serialized into each run
directory so results are reproducible from the directory alone.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from .masker import MaskPolicy
from .model import ModelConfig
from .scheduler import DifficultySchedule, make_schedule
from .trainer import TrainConfig

__all__ = ["ConfigError", "ExperimentConfig"]


class ConfigError(ValueError):
    """Raised for unknown keys, type errors or out-of-range values."""


def _positive(v) -> bool:
    return v > 0


def _non_negative(v) -> bool:
    return v >= 0


def _fraction(v) -> bool:
    return 0.0 <= v <= 1.0


def _any(v) -> bool:
    return True


# (type, default, validator, description)
SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "seed": (int, 42, _non_negative, "base seed for every stage"),
        "out_dir": (str, "runs/default", _any, "artifact directory"),
    },
    "corpus": {
        "path": (str, "", _any, "input corpus file for preprocess"),
        "min_freq": (int, 10, _positive, "drop items rarer than this"),
        "min_len": (int, 10, lambda v: v >= 2, "drop lists shorter than this"),
        "max_len": (int, 60, _positive, "truncate lists longer than this"),
        "split_ratios": (str, "8:1:1", _any, "train:valid:test"),
    },
    "synthetic": {
        "num_items": (int, 2000, _positive, "items in the generated corpus"),
        "num_categories": (int, 10, _positive, "ground-truth categories"),
        "num_lists": (int, 5000, _positive, "lists to generate"),
        "len_min": (int, 10, _positive, "minimum list length"),
        "len_max": (int, 60, _positive, "maximum list length"),
        "pattern_strength": (float, 0.9, _fraction, "probability of following the category cycle"),
    },
    "categorizer": {
        "dim": (int, 64, _positive, "embedding width"),
        "window": (int, 2, _positive, "context window"),
        "negatives": (int, 5, _positive, "negative samples per example"),
        "epochs": (int, 20, _positive, "embedding training epochs"),
        "lr": (float, 0.025, _positive, "initial learning rate"),
        "batch_size": (int, 512, _positive, "examples per update"),
        "num_categories": (int, 10, _positive, "clusters to form"),
    },
    "masker": {
        "random_mask_ratio": (float, 0.15, _fraction, "input-side corruption rate"),
        "mask_prob": (float, 0.80, _fraction, "corrupt with MASK"),
        "replace_prob": (float, 0.10, _fraction, "corrupt with a random item"),
        "keep_prob": (float, 0.10, _fraction, "keep token, still predict it"),
    },
    "scheduler": {
        "kind": (str, "stepwise", lambda v: v in ("naive", "stepwise"), "curriculum kind"),
        "steps": (int, 5, _positive, "curriculum units"),
    },
    "model": {
        "dim": (int, 64, _positive, "latent width"),
        "num_layers": (int, 3, _positive, "encoder depth"),
        "num_heads": (int, 8, _positive, "attention heads"),
        "classifier": (str, "two_stage", lambda v: v in ("vanilla", "two_stage"), "head family"),
        "max_seq_len": (int, 128, lambda v: v >= 4, "position table size"),
        "dropout": (float, 0.1, lambda v: 0.0 <= v < 1.0, "dropout rate"),
        "local_loss_eps": (float, 1e-8, _positive, "gated-denominator guard"),
        "init_std": (float, 0.02, _positive, "truncated-normal std"),
        "ln_eps": (float, 1e-12, _positive, "layer-norm epsilon"),
        "dtype": (str, "float32", lambda v: v in ("float32", "float64"), "compute dtype"),
    },
    "trainer": {
        "lr": (float, 0.01, _positive, "Adam learning rate"),
        "batch_size": (int, 256, _positive, "pairs per step"),
        "max_epochs": (int, 200, _positive, "epoch cap"),
        "patience": (int, 3, _non_negative, "early-stop patience; 0 disables"),
        "grad_clip": (float, 5.0, _any, "global-norm clip; <= 0 disables"),
        "metric": (str, "ndcg@10", _any, "selection metric"),
        "eval_max_pairs": (int, 0, _non_negative, "cap validation pairs; 0 = all"),
    },
    "inference": {
        "k": (int, 10, _positive, "items to generate"),
        "mode": (str, "nar", lambda v: v in ("nar", "ar", "recall"), "decode mode"),
        "input_items": (str, "", _any, "space-separated dense item ids"),
        "emit_topk": (bool, False, _any, "include per-position candidates in output"),
    },
    "bench": {
        "runs": (int, 5, _positive, "timed repetitions"),
        "warmup": (int, 10, _non_negative, "untimed generations first"),
        "num_samples": (int, 20, _positive, "inputs per run"),
        "input_len": (int, 60, _positive, "benchmark input length"),
        "modes": (str, "nar,ar", _any, "comma-separated modes to time"),
        "category_grid": (str, "1,5,10,20,50,100", _any, "sweep category counts"),
    },
}


def _parse_value(section: str, key: str, raw: str):
    typ, _default, validator, _desc = SCHEMA[section][key]
    path = f"{section}.{key}"
    try:
        if typ is bool:
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                value = True
            elif lowered in ("0", "false", "no", "off"):
                value = False
            else:
                raise ValueError(f"not a boolean: {raw!r}")
        else:
            value = typ(raw)
    except ValueError as exc:
        raise ConfigError(f"{path}: expected {typ.__name__}, got {raw!r}") from exc
    if not validator(value):
        raise ConfigError(f"{path}: value {value!r} out of range")
    return value


@dataclass
class ExperimentConfig:
    """Validated configuration; ``values[section][key]`` holds typed values."""

    values: dict[str, dict[str, object]]

    @classmethod
    def defaults(cls) -> "ExperimentConfig":
        return cls(
            values={
                sec: {key: spec[1] for key, spec in keys.items()}
                for sec, keys in SCHEMA.items()
            }
        )

    @classmethod
    def load(cls, path: str | Path | None, overrides: list[str] | None = None) -> "ExperimentConfig":
        """Read an INI file (optional) and apply dotted overrides."""
        cfg = cls.defaults()
        if path is not None:
            parser = configparser.ConfigParser(interpolation=None)
            try:
                with open(path, encoding="utf-8") as fh:
                    parser.read_file(fh)
            except FileNotFoundError:
                raise ConfigError(f"config file not found: {path}") from None
            except configparser.Error as exc:
                raise ConfigError(f"{path}: {exc}") from exc
            for section in parser.sections():
                if section not in SCHEMA:
                    raise ConfigError(f"unknown section [{section}]")
                for key, raw in parser.items(section):
                    if key not in SCHEMA[section]:
                        raise ConfigError(f"unknown key {section}.{key}")
                    cfg.values[section][key] = _parse_value(section, key, raw)
        for ov in overrides or []:
            cfg.apply_override(ov)
        cfg.validate()
        return cfg

    def apply_override(self, spec: str) -> None:
        """Apply one ``section.key=value`` override."""
        if "=" not in spec:
            raise ConfigError(f"override {spec!r} must look like section.key=value")
        path, raw = spec.split("=", 1)
        if "." not in path:
            raise ConfigError(f"override {spec!r} must look like section.key=value")
        section, key = path.split(".", 1)
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {section}.{key}")
        self.values[section][key] = _parse_value(section, key, raw)

    def validate(self) -> None:
        """Cross-field checks that single-value validators cannot express."""
        if self.get("corpus", "max_len") < self.get("corpus", "min_len"):
            raise ConfigError("corpus.max_len must be >= corpus.min_len")
        if self.get("synthetic", "len_max") < self.get("synthetic", "len_min"):
            raise ConfigError("synthetic.len_max must be >= synthetic.len_min")
        probs = [self.get("masker", k) for k in ("mask_prob", "replace_prob", "keep_prob")]
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ConfigError("masker probabilities must sum to 1")
        if self.get("model", "dim") % self.get("model", "num_heads") != 0:
            raise ConfigError("model.dim must be divisible by model.num_heads")
        if self.get("scheduler", "steps") > self.get("trainer", "max_epochs"):
            raise ConfigError("scheduler.steps must not exceed trainer.max_epochs")
        try:
            self.split_ratios()
        except ConfigError:
            raise
        for mode in self.get("bench", "modes").split(","):
            if mode.strip() not in ("nar", "ar", "recall"):
                raise ConfigError(f"bench.modes: unknown mode {mode.strip()!r}")
        for tok in self.get("bench", "category_grid").split(","):
            if not tok.strip().isdigit() or int(tok.strip()) < 1:
                raise ConfigError(f"bench.category_grid: bad entry {tok.strip()!r}")

    # ----- typed accessors -----

    def get(self, section: str, key: str):
        try:
            return self.values[section][key]
        except KeyError:
            raise ConfigError(f"unknown key {section}.{key}") from None

    def split_ratios(self) -> tuple[int, int, int]:
        raw = str(self.get("corpus", "split_ratios"))
        parts = raw.split(":")
        if len(parts) != 3 or not all(p.strip().isdigit() for p in parts):
            raise ConfigError(f"corpus.split_ratios: expected A:B:C integers, got {raw!r}")
        return tuple(int(p) for p in parts)  # type: ignore[return-value]

    def category_grid(self) -> list[int]:
        return [int(tok.strip()) for tok in self.get("bench", "category_grid").split(",")]

    def bench_modes(self) -> list[str]:
        return [tok.strip() for tok in self.get("bench", "modes").split(",")]

    def model_config(self) -> ModelConfig:
        m = self.values["model"]
        try:
            return ModelConfig(**m)  # type: ignore[arg-type]
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from exc

    def train_config(self) -> TrainConfig:
        t = self.values["trainer"]
        try:
            return TrainConfig(
                lr=t["lr"],  # type: ignore[arg-type]
                batch_size=t["batch_size"],  # type: ignore[arg-type]
                max_epochs=t["max_epochs"],  # type: ignore[arg-type]
                patience=t["patience"],  # type: ignore[arg-type]
                grad_clip=t["grad_clip"],  # type: ignore[arg-type]
                metric=t["metric"],  # type: ignore[arg-type]
                seed=self.get("run", "seed") + 4,  # type: ignore[operator]
            )
        except ValueError as exc:
            raise ConfigError(f"trainer: {exc}") from exc

    def mask_policy(self) -> MaskPolicy:
        m = self.values["masker"]
        try:
            return MaskPolicy(**m)  # type: ignore[arg-type]
        except ValueError as exc:
            raise ConfigError(f"masker: {exc}") from exc

    def schedule(self) -> DifficultySchedule:
        try:
            return make_schedule(
                str(self.get("scheduler", "kind")),
                int(self.get("scheduler", "steps")),  # type: ignore[arg-type]
                int(self.get("trainer", "max_epochs")),  # type: ignore[arg-type]
            )
        except ValueError as exc:
            raise ConfigError(f"scheduler: {exc}") from exc

    def to_ini(self) -> str:
        """Deterministic serialization of the resolved config."""
        lines: list[str] = []
        for section in SCHEMA:
            lines.append(f"[{section}]")
            for key in SCHEMA[section]:
                lines.append(f"{key} = {self.values[section][key]}")
            lines.append("")
        return "\n".join(lines)
