"""Tests for corpus parsing, filtering, vocabulary, and splits."""

from __future__ import annotations

from collections import Counter

import numpy as np
import pytest

from listcont.corpus import (
    CorpusError,
    Vocabulary,
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
    split_list,
    synthesize_corpus,
    write_corpus_file,
)


def test_corpus_file_round_trip(tmp_path):
    """write_corpus_file output parses back to the same token lists."""
    lists = [["a", "b", "c"], ["d", "e"], ["a", "a", "f"]]
    path = tmp_path / "corpus.txt"
    write_corpus_file(path, lists)
    assert parse_corpus_file(path) == lists


def test_parse_skips_blank_lines(tmp_path):
    """Blank and whitespace-only lines are ignored."""
    path = tmp_path / "corpus.txt"
    path.write_text("L0\ta b\n\n   \nL1\tc\n")
    assert parse_corpus_file(path) == [["a", "b"], ["c"]]


def test_parse_errors_carry_line_numbers(tmp_path):
    """Malformed lines raise CorpusError naming the 1-based line."""
    path = tmp_path / "bad.txt"
    path.write_text("L0\ta b\nL1 no tab here\n")
    with pytest.raises(CorpusError, match=":2"):
        parse_corpus_file(path)

    path.write_text("L0\ta\nL1\t   \n")
    with pytest.raises(CorpusError, match=":2"):
        parse_corpus_file(path)


def test_filter_and_truncate_enforces_constraints():
    """Output lists satisfy frequency, min-length, and max-length bounds."""
    rng = np.random.default_rng(5)
    lists = [
        [str(int(t)) for t in rng.integers(0, 40, size=rng.integers(2, 15))]
        for _ in range(120)
    ]
    out = filter_and_truncate(lists, min_freq=4, min_len=3, max_len=8)
    freq = Counter(tok for items in out for tok in items)
    assert all(3 <= len(items) <= 8 for items in out)
    assert all(count >= 4 for count in freq.values())


def test_filter_cascade_reaches_fixed_point():
    """Truncation can strand a token below min_freq; later passes remove it."""
    # "z" appears twice, but one occurrence sits beyond the max_len cut.
    lists = [
        ["a", "b", "z"],
        ["a", "b", "c", "z"],  # truncated to 3, dropping this "z"
        ["a", "b", "c"],
    ]
    out = filter_and_truncate(lists, min_freq=2, min_len=2, max_len=3)
    # After truncation "z" survives once, falls below min_freq=2, and the
    # first list shrinks to ["a", "b"], which still meets min_len=2.
    assert out == [["a", "b"], ["a", "b", "c"], ["a", "b", "c"]]
    # Idempotence at the fixed point.
    assert filter_and_truncate(out, min_freq=2, min_len=2, max_len=3) == out


def test_filter_validation():
    """Degenerate filter parameters are rejected."""
    with pytest.raises(CorpusError):
        filter_and_truncate([["a", "b"]], min_freq=0, min_len=2, max_len=4)
    with pytest.raises(CorpusError):
        filter_and_truncate([["a", "b"]], min_freq=1, min_len=1, max_len=4)
    with pytest.raises(CorpusError):
        filter_and_truncate([["a", "b"]], min_freq=1, min_len=4, max_len=3)


def test_build_vocabulary_orders_by_frequency_then_token():
    """Ids go to frequent tokens first; ties break lexicographically."""
    lists = [["b", "a", "c"], ["b", "c"], ["b"]]
    vocab = build_vocabulary(lists)
    assert vocab.tokens == ["b", "c", "a"]
    assert list(vocab.frequencies) == [3, 2, 1]
    assert vocab.encode("b") == 0
    assert vocab.decode(2) == "a"

    tied = build_vocabulary([["y", "x"], ["x", "y"]])
    assert tied.tokens == ["x", "y"]


def test_vocabulary_special_token_ids():
    """Special ids occupy the four rows after the M real items."""
    vocab = build_vocabulary([["a", "b", "c"]])
    assert vocab.num_items == 3
    assert vocab.mask_id == 3
    assert vocab.cls_id == 4
    assert vocab.sep_id == 5
    assert vocab.pad_id == 6
    assert vocab.num_item_tokens == 7


def test_vocabulary_encode_decode_errors():
    """Unknown tokens and out-of-range ids raise CorpusError."""
    vocab = build_vocabulary([["a", "b"]])
    with pytest.raises(CorpusError):
        vocab.encode("zz")
    with pytest.raises(CorpusError):
        vocab.decode(2)  # special tokens do not decode to items
    with pytest.raises(CorpusError):
        vocab.decode(-1)


def test_vocabulary_rejects_duplicates_and_empties():
    """Constructing a vocabulary with duplicate tokens fails."""
    with pytest.raises(CorpusError):
        Vocabulary(tokens=["a", "a"], frequencies=[2, 1])
    with pytest.raises(CorpusError):
        build_vocabulary([])


def test_category_assignment_and_partition(tiny_vocab):
    """Category members partition the items and local_index inverts it."""
    vocab = tiny_vocab
    assert vocab.has_categories
    assert vocab.category_pad_id == 3
    assert vocab.num_category_tokens == 5
    members = vocab.category_members()
    assert sorted(np.concatenate(members).tolist()) == list(range(12))
    local = vocab.local_index()
    for cat, mem in enumerate(members):
        for j, item in enumerate(mem):
            assert local[item] == j
            assert vocab.item_to_category[item] == cat


def test_category_access_requires_assignment():
    """Category APIs raise until categories are assigned."""
    vocab = build_vocabulary([["a", "b"]])
    assert not vocab.has_categories
    with pytest.raises(CorpusError):
        vocab.category_members()
    with pytest.raises(CorpusError):
        _ = vocab.category_pad_id
    with pytest.raises(CorpusError):
        vocab.assign_categories(np.array([0, 5]), 2)  # out of range
    with pytest.raises(CorpusError):
        vocab.assign_categories(np.array([0]), 2)  # wrong shape


def test_split_list_cuts_after_ceil_half():
    """The input keeps ceil(n/2) items and the target gets the rest."""
    pair = split_list([1, 2, 3, 4, 5])
    assert pair.input_items == (1, 2, 3)
    assert pair.target_items == (4, 5)
    assert pair.full_list == (1, 2, 3, 4, 5)

    pair = split_list([1, 2, 3, 4])
    assert pair.input_items == (1, 2)
    assert pair.target_items == (3, 4)

    pair = split_list([1, 2])
    assert pair.input_items == (1,)
    assert pair.target_items == (2,)

    with pytest.raises(CorpusError):
        split_list([1])


def test_make_splits_counts_and_determinism():
    """Split sizes follow the ratios and the permutation is seed-stable."""
    lists = [[i, i + 1, i + 2] for i in range(100)]
    splits = make_splits(lists, ratios=(8, 1, 1), seed=7)
    assert len(splits.train) == 80
    assert len(splits.valid) == 10
    assert len(splits.test) == 10

    again = make_splits(lists, ratios=(8, 1, 1), seed=7)
    assert [p.full_list for p in again.train] == [p.full_list for p in splits.train]

    other = make_splits(lists, ratios=(8, 1, 1), seed=8)
    assert [p.full_list for p in other.train] != [p.full_list for p in splits.train]

    # Every input list appears exactly once across the three splits.
    seen = sorted(
        p.full_list for _, pairs in splits for p in pairs
    )
    assert seen == sorted(tuple(l) for l in lists)


def test_make_splits_validation():
    """Too few lists or a zero train ratio raise."""
    with pytest.raises(CorpusError):
        make_splits([[1, 2], [3, 4]], ratios=(8, 1, 1), seed=0)
    with pytest.raises(CorpusError):
        make_splits([[1, 2]] * 10, ratios=(0, 1, 1), seed=0)


def test_splits_save_load_round_trip(tmp_path):
    """Persisted splits reload to equal pairs and manifest."""
    lists = [[i, i + 1, i + 2, i + 3] for i in range(12)]
    splits = make_splits(lists, ratios=(8, 1, 1), seed=3)
    save_splits(tmp_path, splits)
    back = load_splits(tmp_path)
    for (name_a, pairs_a), (name_b, pairs_b) in zip(splits, back):
        assert name_a == name_b
        assert [p.full_list for p in pairs_a] == [p.full_list for p in pairs_b]
        assert [p.input_items for p in pairs_a] == [p.input_items for p in pairs_b]
    assert back.manifest == splits.manifest


def test_vocabulary_save_load_round_trip(tmp_path):
    """Vocabulary TSV persists tokens, ids, and frequencies."""
    vocab = build_vocabulary([["a", "b", "c"], ["a", "b"], ["a"]])
    path = tmp_path / "vocab.tsv"
    save_vocabulary(path, vocab)
    back = load_vocabulary(path)
    assert back.tokens == vocab.tokens
    assert np.array_equal(back.frequencies, vocab.frequencies)

    path.write_text("0\ta\t3\n2\tb\t1\n")  # non-dense ids
    with pytest.raises(CorpusError):
        load_vocabulary(path)


def test_categories_save_load_round_trip(tmp_path, tiny_vocab):
    """Category TSV round-trips labels and the num_categories header."""
    path = tmp_path / "categories.tsv"
    save_categories(path, tiny_vocab)
    fresh = Vocabulary(
        tokens=list(tiny_vocab.tokens), frequencies=list(tiny_vocab.frequencies)
    )
    load_categories(path, fresh)
    assert fresh.num_categories == 3
    assert np.array_equal(fresh.item_to_category, tiny_vocab.item_to_category)

    # Missing header.
    lines = path.read_text().splitlines()
    path.write_text("\n".join(l for l in lines if not l.startswith("#")) + "\n")
    bare = Vocabulary(
        tokens=list(tiny_vocab.tokens), frequencies=list(tiny_vocab.frequencies)
    )
    with pytest.raises(CorpusError):
        load_categories(path, bare)


def test_encode_lists_maps_tokens_to_ids():
    """encode_lists applies vocab.encode elementwise."""
    vocab = build_vocabulary([["a", "b", "c"]])
    assert encode_lists([["a", "c"], ["b"]], vocab) == [
        [vocab.encode("a"), vocab.encode("c")],
        [vocab.encode("b")],
    ]


def test_synthesize_corpus_structure():
    """Synthetic lists respect length bounds and the planted partition."""
    lists, truth = synthesize_corpus(
        num_items=20,
        num_categories=4,
        num_lists=50,
        len_min=5,
        len_max=9,
        pattern_strength=0.9,
        seed=1,
    )
    assert len(lists) == 50
    assert all(5 <= len(l) <= 9 for l in lists)
    assert sorted(truth.keys(), key=int) == [str(i) for i in range(20)]
    # Contiguous balanced blocks: 4 categories of 5 items each.
    labels = [truth[str(i)] for i in range(20)]
    assert labels == sorted(labels)
    assert Counter(labels) == {0: 5, 1: 5, 2: 5, 3: 5}


def test_synthesize_corpus_pure_pattern_walks_cycles():
    """With pattern_strength=1 every step is the within-category successor."""
    lists, truth = synthesize_corpus(
        num_items=12,
        num_categories=3,
        num_lists=20,
        len_min=4,
        len_max=6,
        pattern_strength=1.0,
        seed=2,
    )
    for items in lists:
        for a, b in zip(items, items[1:]):
            ca, cb = truth[a], truth[b]
            assert ca == cb
            lo = 4 * ca  # block start for 12 items in 3 equal blocks
            assert int(b) == lo + (int(a) - lo + 1) % 4


def test_synthesize_corpus_validation():
    """Impossible synthesizer parameters raise."""
    with pytest.raises(CorpusError):
        synthesize_corpus(
            num_items=3,
            num_categories=5,
            num_lists=2,
            len_min=2,
            len_max=3,
            pattern_strength=0.5,
        )
    with pytest.raises(CorpusError):
        synthesize_corpus(
            num_items=5,
            num_categories=2,
            num_lists=2,
            len_min=2,
            len_max=3,
            pattern_strength=1.5,
        )
