"""Corpus tokenization, capped vocabulary, and n-gram counting.

Input corpora are UTF-8 plain text, one sentence per line.  Tokenization is
deliberately minimal: lowercase + whitespace split.  Sentence boundary
markers are injected at counting time and are never vocabulary words.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator, Sequence, TextIO

from ctxbias.errors import ConfigError, EmptyCorpusError, ParseError

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"


@lru_cache(maxsize=64)
def _words_checksum(words: tuple[str, ...]) -> str:
    h = hashlib.sha256()
    for w in words:
        h.update(w.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def tokenize(line: str) -> list[str]:
    """Lowercase, whitespace-split tokens of one sentence."""
    return line.lower().split()


def iter_sentences(lines: Iterable[str]) -> Iterator[list[str]]:
    """Token sequences for each line; empty lines yield nothing."""
    for line in lines:
        toks = tokenize(line)
        if toks:
            yield toks


@dataclass(frozen=True)
class Vocabulary:
    """Frequency-ranked word<->id map with a trailing unknown token.

    ids are dense 0..|words|-1 in descending corpus frequency (ties broken
    lexicographically).  The unk token and the sentence markers live just
    past the word ids so the LM can key n-grams on them, but they are not
    vocabulary words and are never eligible for biasing.
    """

    words: tuple[str, ...]
    counts: tuple[int, ...]
    max_size: int
    id_of: dict[str, int] = field(repr=False)

    @property
    def unk_id(self) -> int:
        return len(self.words)

    @property
    def bos_id(self) -> int:
        return len(self.words) + 1

    @property
    def eos_id(self) -> int:
        return len(self.words) + 2

    def __len__(self) -> int:
        return len(self.words)

    def get(self, word: str) -> int:
        """id of `word`, mapping any out-of-list word to unk."""
        if word == BOS:
            return self.bos_id
        if word == EOS:
            return self.eos_id
        return self.id_of.get(word, self.unk_id)

    def token(self, word_id: int) -> str:
        if word_id < len(self.words):
            return self.words[word_id]
        if word_id == self.unk_id:
            return UNK
        if word_id == self.bos_id:
            return BOS
        if word_id == self.eos_id:
            return EOS
        raise KeyError(word_id)

    def __contains__(self, word: str) -> bool:
        return word in self.id_of

    def checksum(self) -> str:
        return _words_checksum(self.words)


def build_vocab(sentences: Iterable[Sequence[str]], max_size: int) -> Vocabulary:
    """Vocabulary of the `max_size` most frequent words.

    Deterministic: frequency ties break lexicographically.  Raises
    EmptyCorpusError when no tokens are seen.
    """
    if max_size < 1:
        raise ConfigError(f"max_size must be >= 1, got {max_size}")
    freq = Counter()
    for sent in sentences:
        freq.update(sent)
    if not freq:
        raise EmptyCorpusError("no tokens in corpus")
    ranked = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))[:max_size]
    words = tuple(w for w, _ in ranked)
    counts = tuple(c for _, c in ranked)
    return Vocabulary(
        words=words,
        counts=counts,
        max_size=max_size,
        id_of={w: i for i, w in enumerate(words)},
    )


@dataclass(frozen=True)
class NgramCounts:
    """Counts of all 1..order-grams over id sequences (markers included)."""

    order: int
    counts: dict[tuple[int, ...], int] = field(repr=False)
    total_tokens: int = 0

    def count(self, gram: tuple[int, ...]) -> int:
        return self.counts.get(gram, 0)

    def grams_of_order(self, k: int) -> Iterator[tuple[tuple[int, ...], int]]:
        for gram, c in self.counts.items():
            if len(gram) == k:
                yield gram, c


def count_ngrams(
    sentences: Iterable[Sequence[str]], vocab: Vocabulary, order: int
) -> NgramCounts:
    """Count 1..order-grams with OOV mapped to unk and <s>/</s> framing.

    Sharding note: counting is a pure sum of per-sentence count maps, so the
    corpus may be split and the maps merged in any order.
    """
    if order < 1:
        raise ConfigError(f"order must be >= 1, got {order}")
    counts: dict[tuple[int, ...], int] = {}
    total = 0
    for sent in sentences:
        ids = [vocab.bos_id] + [vocab.get(w) for w in sent] + [vocab.eos_id]
        total += len(ids)
        n = len(ids)
        for k in range(1, order + 1):
            for i in range(n - k + 1):
                gram = tuple(ids[i : i + k])
                counts[gram] = counts.get(gram, 0) + 1
    return NgramCounts(order=order, counts=counts, total_tokens=total)


def word_unigram_counts(counts: NgramCounts, vocab: Vocabulary) -> dict[int, int]:
    """Unigram counts restricted to real vocabulary words (no markers/unk)."""
    return {
        (wid := gram[0]): c
        for gram, c in counts.grams_of_order(1)
        if gram[0] < len(vocab)
    }


def write_vocab_tsv(vocab: Vocabulary, sink: TextIO) -> None:
    """TSV `word<TAB>id<TAB>count`, sorted by id."""
    for i, (w, c) in enumerate(zip(vocab.words, vocab.counts)):
        sink.write(f"{w}\t{i}\t{c}\n")


def read_vocab_tsv(source: TextIO, max_size: int | None = None) -> Vocabulary:
    words: list[str] = []
    counts: list[int] = []
    for line_no, line in enumerate(source, 1):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(f"expected 3 tab-separated fields, got {len(parts)}", line_no)
        word, id_str, count_str = parts
        try:
            wid, c = int(id_str), int(count_str)
        except ValueError:
            raise ParseError(f"non-integer id/count in {line!r}", line_no) from None
        if wid != len(words):
            raise ParseError(f"ids must be dense and sorted; expected {len(words)}, got {wid}", line_no)
        words.append(word)
        counts.append(c)
    if not words:
        raise ParseError("empty vocabulary file")
    return Vocabulary(
        words=tuple(words),
        counts=tuple(counts),
        max_size=max_size if max_size is not None else len(words),
        id_of={w: i for i, w in enumerate(words)},
    )
