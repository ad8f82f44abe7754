"""Tokenization, vocabulary construction, and n-gram counting."""

from __future__ import annotations

import io
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxbias.corpus import (
    BOS,
    EOS,
    UNK,
    build_vocab,
    count_ngrams,
    iter_sentences,
    read_vocab_tsv,
    tokenize,
    word_unigram_counts,
    write_vocab_tsv,
)
from ctxbias.errors import ConfigError, EmptyCorpusError, ParseError

WORDS = st.text(alphabet="abcdefg", min_size=1, max_size=5)
SENTENCES = st.lists(st.lists(WORDS, min_size=1, max_size=6), min_size=1, max_size=20)


def test_tokenize_lowercases_and_splits():
    assert tokenize("  The  World CUP ") == ["the", "world", "cup"]
    assert tokenize("") == []
    assert tokenize("   \t ") == []


def test_iter_sentences_skips_empty_lines():
    assert list(iter_sentences(["a b", "", "  ", "c"])) == [["a", "b"], ["c"]]


def test_build_vocab_frequency_rank_with_lexicographic_ties():
    # the:3; cat, dog, sat all tie at 1 and order lexicographically.
    sents = [["the", "cat"], ["the", "dog"], ["the", "sat"]]
    v = build_vocab(sents, 10)
    assert v.words == ("the", "cat", "dog", "sat")
    assert v.counts == (3, 1, 1, 1)


def test_build_vocab_cap_keeps_most_frequent():
    sents = [["a"] * 5 + ["b"] * 3 + ["c"] * 2 + ["d"]]
    v = build_vocab(sents, 2)
    assert v.words == ("a", "b")
    assert "c" not in v
    assert v.get("c") == v.unk_id


def test_build_vocab_empty_corpus_raises():
    with pytest.raises(EmptyCorpusError):
        build_vocab([], 10)
    with pytest.raises(ConfigError):
        build_vocab([["a"]], 0)


def test_special_ids_follow_words():
    v = build_vocab([["a", "b"]], 10)
    assert (v.unk_id, v.bos_id, v.eos_id) == (2, 3, 4)
    assert v.token(v.unk_id) == UNK
    assert v.token(v.bos_id) == BOS
    assert v.token(v.eos_id) == EOS
    assert v.get(BOS) == v.bos_id
    assert v.get(EOS) == v.eos_id
    with pytest.raises(KeyError):
        v.token(v.eos_id + 1)


def test_checksum_tracks_word_list():
    v1 = build_vocab([["a", "b"]], 10)
    v2 = build_vocab([["a", "b"]], 10)
    v3 = build_vocab([["a", "c"]], 10)
    assert v1.checksum() == v2.checksum()
    assert v1.checksum() != v3.checksum()


def test_count_ngrams_hand_case():
    v = build_vocab([["a", "b"]], 10)
    c = count_ngrams([["a", "b"]], v, 2)
    a, b = v.id_of["a"], v.id_of["b"]
    assert c.count((a,)) == 1
    assert c.count((b,)) == 1
    assert c.count((v.bos_id,)) == 1
    assert c.count((v.eos_id,)) == 1
    assert c.count((v.bos_id, a)) == 1
    assert c.count((a, b)) == 1
    assert c.count((b, v.eos_id)) == 1
    assert c.count((b, a)) == 0
    assert c.total_tokens == 4


def test_count_ngrams_maps_oov_to_unk():
    v = build_vocab([["a", "b"]], 10)
    c = count_ngrams([["a", "zzz"]], v, 2)
    assert c.count((v.unk_id,)) == 1
    assert c.count((v.id_of["a"], v.unk_id)) == 1


def test_count_ngrams_rejects_bad_order():
    v = build_vocab([["a"]], 10)
    with pytest.raises(ConfigError):
        count_ngrams([["a"]], v, 0)


def test_word_unigram_counts_excludes_markers():
    v = build_vocab([["a", "b"]], 10)
    c = count_ngrams([["a", "b"], ["a", "zzz"]], v, 1)
    uni = word_unigram_counts(c, v)
    assert uni == {v.id_of["a"]: 2, v.id_of["b"]: 1}


@given(SENTENCES)
@settings(max_examples=50, deadline=None)
def test_unigram_total_matches_token_count(sents):
    v = build_vocab(sents, 1000)
    c = count_ngrams(sents, v, 1)
    n_tokens = sum(len(s) for s in sents)
    assert sum(cnt for g, cnt in c.grams_of_order(1) if g[0] < v.bos_id) == n_tokens
    # Every sentence contributes exactly one <s> and one </s>.
    assert c.count((v.bos_id,)) == len(sents)
    assert c.count((v.eos_id,)) == len(sents)


@given(SENTENCES)
@settings(max_examples=50, deadline=None)
def test_vocab_deterministic_and_every_token_scorable(sents):
    v1 = build_vocab(sents, 1000)
    v2 = build_vocab(list(sents), 1000)
    assert v1 == v2
    for s in sents:
        for w in s:
            assert 0 <= v1.get(w) <= v1.eos_id


def test_vocab_tsv_round_trip():
    v = build_vocab([["the", "cat"], ["the", "dog"]], 10)
    buf = io.StringIO()
    write_vocab_tsv(v, buf)
    buf.seek(0)
    v2 = read_vocab_tsv(buf)
    assert v2.words == v.words
    assert v2.counts == v.counts
    assert v2.checksum() == v.checksum()


def test_vocab_tsv_rejects_sparse_ids():
    with pytest.raises(ParseError) as e:
        read_vocab_tsv(io.StringIO("the\t0\t3\ncat\t2\t1\n"))
    assert e.value.line_no == 2


def test_vocab_tsv_rejects_malformed_rows():
    with pytest.raises(ParseError):
        read_vocab_tsv(io.StringIO("the\t0\n"))
    with pytest.raises(ParseError):
        read_vocab_tsv(io.StringIO("the\tzero\tthree\n"))
    with pytest.raises(ParseError):
        read_vocab_tsv(io.StringIO(""))


def test_sharded_counting_is_order_independent():
    sents = [["a", "b", "c"], ["b", "c"], ["a"], ["c", "c", "a"]]
    v = build_vocab(sents, 10)
    whole = count_ngrams(sents, v, 3)
    merged = Counter()
    for shard in (sents[:2], sents[2:]):
        merged.update(count_ngrams(shard, v, 3).counts)
    assert dict(merged) == whole.counts
