"""Corpus handling: parsing, filtering, vocabulary, pair splitting, synthesis.

The on-disk corpus format is one item list per line::

    <list_id> TAB <token> <token> <token> ...

List ids are opaque strings kept only for traceability; items are whitespace-
separated string tokens. Internally every surviving item is mapped to a dense
integer id in ``[0, num_items)`` by :class:`Vocabulary`, which also owns the
derived special-token ids used by the model (MASK/CLS/SEP/PAD) and, once a
categorizer has run, the item -> category assignment.

Each list is split into an (input, target) continuation pair: the input is the
first ``ceil(L / 2)`` items, the target the remaining ``floor(L / 2)``.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "CorpusError",
    "ListPair",
    "Vocabulary",
    "DatasetSplits",
    "parse_corpus_file",
    "write_corpus_file",
    "filter_and_truncate",
    "build_vocabulary",
    "encode_lists",
    "split_list",
    "make_splits",
    "save_splits",
    "load_splits",
    "save_vocabulary",
    "load_vocabulary",
    "save_categories",
    "load_categories",
    "synthesize_corpus",
]


class CorpusError(ValueError):
    """Raised for malformed corpus files or infeasible preprocessing settings."""


@dataclass(frozen=True)
class ListPair:
    """An (input, target) continuation pair holding dense item ids."""

    input_items: tuple[int, ...]
    target_items: tuple[int, ...]

    @property
    def full_list(self) -> tuple[int, ...]:
        return self.input_items + self.target_items


@dataclass
class Vocabulary:
    """Dense item-id space plus derived special tokens and category map.

    Item ids occupy ``[0, num_items)``. Four special item tokens are appended
    after the real items: MASK, CLS, SEP, PAD (PAD rows stay zero in the
    model's embedding table). The category id space is ``[0, num_categories)``
    with one PAD special at index ``num_categories``; one further row is
    reserved so the category table has ``num_categories + 2`` rows in total.
    """

    tokens: list[str]
    frequencies: np.ndarray
    item_to_category: np.ndarray | None = None
    num_categories: int | None = None
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.tokens) == 0:
            raise CorpusError("vocabulary is empty after preprocessing")
        self._index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise CorpusError("duplicate tokens in vocabulary")

    # ----- item token space -----

    @property
    def num_items(self) -> int:
        return len(self.tokens)

    @property
    def mask_id(self) -> int:
        return self.num_items

    @property
    def cls_id(self) -> int:
        return self.num_items + 1

    @property
    def sep_id(self) -> int:
        return self.num_items + 2

    @property
    def pad_id(self) -> int:
        return self.num_items + 3

    @property
    def num_item_tokens(self) -> int:
        """Rows of the item embedding table: real items + MASK/CLS/SEP/PAD."""
        return self.num_items + 4

    def encode(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise CorpusError(f"unknown item token {token!r}") from None

    def decode(self, item_id: int) -> str:
        if not 0 <= item_id < self.num_items:
            raise CorpusError(f"item id {item_id} outside [0, {self.num_items})")
        return self.tokens[item_id]

    # ----- category space -----

    @property
    def has_categories(self) -> bool:
        return self.item_to_category is not None

    @property
    def category_pad_id(self) -> int:
        self._require_categories()
        return int(self.num_categories)  # type: ignore[arg-type]

    @property
    def num_category_tokens(self) -> int:
        """Rows of the category embedding table: categories + PAD + reserved."""
        self._require_categories()
        return int(self.num_categories) + 2  # type: ignore[operator]

    def assign_categories(self, item_to_category: np.ndarray, num_categories: int) -> None:
        """Attach a category partition: one id in [0, num_categories) per item."""
        arr = np.asarray(item_to_category, dtype=np.int64)
        if arr.shape != (self.num_items,):
            raise CorpusError(
                f"category map has shape {arr.shape}, expected ({self.num_items},)"
            )
        if num_categories < 1:
            raise CorpusError("num_categories must be >= 1")
        if arr.min() < 0 or arr.max() >= num_categories:
            raise CorpusError("category ids must lie in [0, num_categories)")
        self.item_to_category = arr
        self.num_categories = int(num_categories)

    def category_members(self) -> list[np.ndarray]:
        """Item ids per category, ascending; the lists partition the items."""
        self._require_categories()
        assert self.item_to_category is not None
        return [
            np.flatnonzero(self.item_to_category == c)
            for c in range(int(self.num_categories))  # type: ignore[arg-type]
        ]

    def local_index(self) -> np.ndarray:
        """Position of each item inside its own category's member list."""
        members = self.category_members()
        local = np.empty(self.num_items, dtype=np.int64)
        for ids in members:
            local[ids] = np.arange(len(ids))
        return local

    def _require_categories(self) -> None:
        if self.item_to_category is None or self.num_categories is None:
            raise CorpusError("vocabulary has no category assignment yet")


@dataclass
class DatasetSplits:
    """Train/valid/test continuation pairs plus the split manifest."""

    train: list[ListPair]
    valid: list[ListPair]
    test: list[ListPair]
    manifest: dict

    def __iter__(self):
        yield from (("train", self.train), ("valid", self.valid), ("test", self.test))


# ---------------------------------------------------------------------------
# parsing and writing
# ---------------------------------------------------------------------------


def parse_corpus_file(path: str | Path) -> list[list[str]]:
    """Read a corpus file into token lists, preserving line order.

    Raises:
        CorpusError: with the 1-based line number for lines missing the tab
            separator or carrying an empty item list.
    """
    lists: list[list[str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise CorpusError(f"{path}:{lineno}: missing TAB between id and items")
            _, items_part = line.split("\t", 1)
            items = items_part.split()
            if not items:
                raise CorpusError(f"{path}:{lineno}: empty item list")
            lists.append(items)
    return lists


def write_corpus_file(path: str | Path, lists: list[list[str]]) -> None:
    """Write token lists in the corpus format with generated sequential ids."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, items in enumerate(lists):
            fh.write(f"L{i:06d}\t{' '.join(items)}\n")


# ---------------------------------------------------------------------------
# filtering
# ---------------------------------------------------------------------------


def _filter_pass(
    lists: list[list[str]], min_freq: int, min_len: int, max_len: int
) -> list[list[str]]:
    freq: Counter[str] = Counter()
    for items in lists:
        freq.update(items)
    out: list[list[str]] = []
    for items in lists:
        kept = [tok for tok in items if freq[tok] >= min_freq]
        if len(kept) > max_len:
            kept = kept[:max_len]
        if len(kept) >= min_len:
            out.append(kept)
    return out


def filter_and_truncate(
    lists: list[list[str]], *, min_freq: int, min_len: int, max_len: int
) -> list[list[str]]:
    """Iterate rare-item removal and length enforcement to a fixed point.

    Each pass drops items whose corpus frequency fell below ``min_freq``,
    truncates lists longer than ``max_len`` (keeping the head), and drops
    lists shorter than ``min_len``. Truncation changes frequencies and rare
    removal changes lengths, so passes repeat until the corpus is stable.
    The result satisfies both constraints simultaneously.
    """
    if min_freq < 1:
        raise CorpusError(f"min_freq must be >= 1, got {min_freq}")
    if min_len < 2:
        raise CorpusError(f"min_len must be >= 2 to form (input, target) pairs, got {min_len}")
    if max_len < min_len:
        raise CorpusError(f"max_len {max_len} < min_len {min_len}")
    cur = [list(items) for items in lists]
    while True:
        nxt = _filter_pass(cur, min_freq, min_len, max_len)
        if nxt == cur:
            return cur
        cur = nxt


# ---------------------------------------------------------------------------
# vocabulary and encoding
# ---------------------------------------------------------------------------


def build_vocabulary(lists: list[list[str]]) -> Vocabulary:
    """Assign dense ids by descending frequency, ties broken lexically."""
    freq: Counter[str] = Counter()
    for items in lists:
        freq.update(items)
    ordered = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
    tokens = [tok for tok, _ in ordered]
    counts = np.array([n for _, n in ordered], dtype=np.int64)
    return Vocabulary(tokens=tokens, frequencies=counts)


def encode_lists(lists: list[list[str]], vocab: Vocabulary) -> list[list[int]]:
    return [[vocab.encode(tok) for tok in items] for items in lists]


# ---------------------------------------------------------------------------
# pair construction and splits
# ---------------------------------------------------------------------------


def split_list(items: tuple[int, ...] | list[int]) -> ListPair:
    """Split one list into a continuation pair: input ceil(L/2), target floor(L/2)."""
    n = len(items)
    if n < 2:
        raise CorpusError(f"need at least 2 items to split, got {n}")
    cut = (n + 1) // 2
    seq = tuple(items)
    return ListPair(input_items=seq[:cut], target_items=seq[cut:])


def make_splits(
    encoded_lists: list[list[int]],
    *,
    ratios: tuple[int, int, int] = (8, 1, 1),
    seed: int = 0,
    extra_manifest: dict | None = None,
) -> DatasetSplits:
    """Shuffle lists with ``seed`` and partition into train/valid/test pairs.

    Valid and test sizes are ``floor(n * r / sum(ratios))``; train absorbs the
    rounding remainder. The manifest records seed, ratios and counts so a
    split is reproducible from its directory alone.
    """
    if any(r < 0 for r in ratios) or ratios[0] <= 0 or sum(ratios) <= 0:
        raise CorpusError(f"invalid split ratios {ratios}")
    n = len(encoded_lists)
    if n < 3:
        raise CorpusError(f"need at least 3 lists to split, got {n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    total = sum(ratios)
    n_valid = n * ratios[1] // total
    n_test = n * ratios[2] // total
    n_train = n - n_valid - n_test
    pairs = [split_list(encoded_lists[i]) for i in order]
    splits = DatasetSplits(
        train=pairs[:n_train],
        valid=pairs[n_train : n_train + n_valid],
        test=pairs[n_train + n_valid :],
        manifest={
            "seed": seed,
            "ratios": list(ratios),
            "counts": {"train": n_train, "valid": n_valid, "test": n_test},
            **(extra_manifest or {}),
        },
    )
    return splits


def save_splits(out_dir: str | Path, splits: DatasetSplits) -> None:
    """Write train/valid/test corpus files (dense-id tokens) and the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, pairs in splits:
        rows = [[str(i) for i in pair.full_list] for pair in pairs]
        write_corpus_file(out / f"{name}.txt", rows)
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(splits.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_splits(split_dir: str | Path) -> DatasetSplits:
    """Read a directory written by :func:`save_splits`."""
    d = Path(split_dir)
    parts: dict[str, list[ListPair]] = {}
    for name in ("train", "valid", "test"):
        rows = parse_corpus_file(d / f"{name}.txt")
        parts[name] = [split_list([int(tok) for tok in items]) for items in rows]
    with open(d / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    return DatasetSplits(manifest=manifest, **parts)


# ---------------------------------------------------------------------------
# vocabulary and category persistence
# ---------------------------------------------------------------------------


def save_vocabulary(path: str | Path, vocab: Vocabulary) -> None:
    """TSV rows ``dense_id TAB token TAB frequency`` in id order."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, tok in enumerate(vocab.tokens):
            fh.write(f"{i}\t{tok}\t{int(vocab.frequencies[i])}\n")


def load_vocabulary(path: str | Path) -> Vocabulary:
    tokens: list[str] = []
    freqs: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusError(f"{path}:{lineno}: expected 3 TSV fields")
            idx, tok, freq = parts
            if int(idx) != len(tokens):
                raise CorpusError(f"{path}:{lineno}: ids must be dense and ordered")
            tokens.append(tok)
            freqs.append(int(freq))
    return Vocabulary(tokens=tokens, frequencies=np.array(freqs, dtype=np.int64))


def save_categories(path: str | Path, vocab: Vocabulary) -> None:
    """TSV rows ``item_id TAB category_id`` for the current assignment."""
    vocab._require_categories()
    assert vocab.item_to_category is not None
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# num_categories\t{vocab.num_categories}\n")
        for i, c in enumerate(vocab.item_to_category):
            fh.write(f"{i}\t{int(c)}\n")


def load_categories(path: str | Path, vocab: Vocabulary) -> None:
    """Attach a category file written by :func:`save_categories` to ``vocab``."""
    num_categories: int | None = None
    assignment = np.full(vocab.num_items, -1, dtype=np.int64)
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                parts = line.split("\t")
                if len(parts) == 2 and parts[0] == "# num_categories":
                    num_categories = int(parts[1])
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusError(f"{path}:{lineno}: expected 2 TSV fields")
            item, cat = int(parts[0]), int(parts[1])
            if not 0 <= item < vocab.num_items:
                raise CorpusError(f"{path}:{lineno}: item id {item} out of range")
            assignment[item] = cat
    if num_categories is None:
        raise CorpusError(f"{path}: missing '# num_categories' header")
    if (assignment < 0).any():
        missing = int(np.flatnonzero(assignment < 0)[0])
        raise CorpusError(f"{path}: no category for item {missing}")
    vocab.assign_categories(assignment, num_categories)


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------


def synthesize_corpus(
    *,
    num_items: int,
    num_categories: int,
    num_lists: int,
    len_min: int,
    len_max: int,
    pattern_strength: float,
    seed: int = 0,
) -> tuple[list[list[str]], dict[str, int]]:
    """Generate category-structured lists with a known ground-truth partition.

    Items are divided into contiguous category blocks (sizes differing by at
    most one). Each category's block forms a cycle; a list is a walk that with
    probability ``pattern_strength`` steps to the cycle successor of the
    current item and otherwise jumps to a uniformly random item. Returns the
    token lists and the token -> true category map.
    """
    if num_items < num_categories or num_categories < 1:
        raise CorpusError("need num_items >= num_categories >= 1")
    if not 0.0 <= pattern_strength <= 1.0:
        raise CorpusError(f"pattern_strength must be in [0, 1], got {pattern_strength}")
    if not 1 <= len_min <= len_max:
        raise CorpusError(f"invalid length bounds [{len_min}, {len_max}]")
    rng = np.random.default_rng(seed)

    base, rem = divmod(num_items, num_categories)
    sizes = [base + (1 if c < rem else 0) for c in range(num_categories)]
    starts = np.cumsum([0] + sizes[:-1])
    item_cat = np.repeat(np.arange(num_categories), sizes)

    def successor(item: int) -> int:
        c = item_cat[item]
        lo, size = starts[c], sizes[c]
        return int(lo + (item - lo + 1) % size)

    lists: list[list[str]] = []
    lengths = rng.integers(len_min, len_max + 1, size=num_lists)
    for n in lengths:
        walk = [int(rng.integers(num_items))]
        for _ in range(int(n) - 1):
            if rng.random() < pattern_strength:
                walk.append(successor(walk[-1]))
            else:
                walk.append(int(rng.integers(num_items)))
        lists.append([str(i) for i in walk])
    truth = {str(i): int(item_cat[i]) for i in range(num_items)}
    return lists, truth
