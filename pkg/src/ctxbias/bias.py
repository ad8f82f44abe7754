"""Static bias table and context-dependent boost scoring.

The table stores, for every vocabulary word, the negative log of its
class-conditional unigram probability.  That value is the largest boost
that can be applied to the word without disturbing its class-level n-gram
statistics, so common words get a near-zero boost and rare words a large
one.  The table is built once at training time and is independent of the
context list, the scale factor, and the OOV boost.

Context phrases are handled by one of two schemes:

* expansion - a multi-word phrase becomes a single decoder token whose
  constituent word biases apply only on an exact full-phrase match;
* oov - a multi-word phrase is treated as one opaque unknown token and
  boosted by the flat OOV score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence, TextIO

from ctxbias.clustering import ClusterAssignment
from ctxbias.corpus import Vocabulary, build_vocab, count_ngrams, tokenize
from ctxbias.errors import ConfigError, IntegrityError, ParseError
from ctxbias.ngram_lm import NgramModel

# Joins phrase constituents into a single decoder token; outside the corpus
# alphabet (tokenization splits on whitespace and lowercases), so it cannot
# collide with a real word.
PHRASE_JOIN = "\x1f"

EXPANSION = "expansion"
OOV = "oov"
SCHEMES = (EXPANSION, OOV)


@dataclass(frozen=True)
class BiasConfig:
    """Scale factor for in-vocabulary boosts and flat boost for OOVs."""

    lam: float = 1.0
    alpha: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ConfigError(f"lambda must be finite and >= 0, got {self.lam}")
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ConfigError(f"alpha must be finite and >= 0, got {self.alpha}")


@dataclass(frozen=True)
class BiasTable:
    """word-id -> upper-bound boost (-log P(w | C(w))), all >= 0."""

    base_bias: dict[int, float] = field(repr=False)
    vocab_checksum: str = ""

    def __getitem__(self, word_id: int) -> float:
        return self.base_bias[word_id]


class PhraseEntry(NamedTuple):
    token: str
    words: tuple[str, ...]
    # Per constituent: vocabulary id, or None for an OOV constituent.
    ids: tuple[int | None, ...]


@dataclass(frozen=True)
class ContextSet:
    """Compiled context list; compilation is pure lookup-table construction,
    no n-gram estimation of any kind."""

    scheme: str
    word_entries: frozenset[int]
    oov_word_entries: frozenset[str]
    phrase_entries: tuple[PhraseEntry, ...]
    phrase_index: dict[str, PhraseEntry] = field(repr=False)
    vocab_checksum: str = ""

    def __len__(self) -> int:
        return len(self.word_entries) + len(self.oov_word_entries) + len(self.phrase_entries)


def build_bias_table(assignment: ClusterAssignment, vocab: Vocabulary) -> BiasTable:
    """Freeze -log P(w|C(w)) per word; the assignment may be discarded
    afterward, decoding needs only this table."""
    base = {w: max(0.0, -lp) for w, lp in assignment.class_cond_logp.items()}
    return BiasTable(base_bias=base, vocab_checksum=vocab.checksum())


def compile_context(
    phrases: Iterable[str], vocab: Vocabulary, scheme: str
) -> ContextSet:
    """Sort raw context strings into word / OOV-word / phrase entries.

    Duplicates are dropped; an empty phrase list yields a valid empty set
    (bias degenerates to zero everywhere).
    """
    if scheme not in SCHEMES:
        raise ConfigError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    word_entries: set[int] = set()
    oov_words: set[str] = set()
    phrase_entries: list[PhraseEntry] = []
    index: dict[str, PhraseEntry] = {}
    # Hot path: called with very large context lists, so bind lookups once.
    id_get = vocab.id_of.get
    join = PHRASE_JOIN.join
    append = phrase_entries.append
    add_word = word_entries.add
    add_oov = oov_words.add
    for raw in phrases:
        toks = raw.lower().split()
        if len(toks) == 1:
            w = toks[0]
            wid = id_get(w)
            if wid is not None:
                add_word(wid)
            else:
                add_oov(w)
            continue
        if not toks:
            continue
        token = join(toks)
        if token in index:
            continue
        entry = PhraseEntry(
            token=token,
            words=tuple(toks),
            ids=tuple(map(id_get, toks)),
        )
        append(entry)
        index[token] = entry
    return ContextSet(
        scheme=scheme,
        word_entries=frozenset(word_entries),
        oov_word_entries=frozenset(oov_words),
        phrase_entries=tuple(phrase_entries),
        phrase_index=index,
        vocab_checksum=vocab.checksum(),
    )


class CompileBenchmark(NamedTuple):
    compile_seconds: float
    train_seconds: float


def context_compile_benchmark(
    phrases: Sequence[str],
    vocab: Vocabulary,
    scheme: str = EXPANSION,
    lm_order: int = 4,
    repeats: int = 3,
) -> CompileBenchmark:
    """Time context compilation against training a throwaway LM on the
    same phrases.

    Compilation is pure table construction, so it should beat even a toy
    n-gram estimation over the phrase list by a wide margin; the returned
    timings let callers assert that margin.  Best-of-`repeats` timings are
    reported to suppress scheduler noise.
    """
    import time

    from ctxbias.ngram_lm import TrainConfig, train_lm

    compile_best = float("inf")
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        compile_context(phrases, vocab, scheme)
        compile_best = min(compile_best, time.perf_counter() - t0)

    sentences = [tokenize(p) for p in phrases]
    train_best = float("inf")
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        toy_vocab = build_vocab(sentences, len(phrases))
        toy_counts = count_ngrams(sentences, toy_vocab, lm_order)
        train_lm(toy_counts, toy_vocab, TrainConfig(order=lm_order))
        train_best = min(train_best, time.perf_counter() - t0)
    return CompileBenchmark(compile_seconds=compile_best, train_seconds=train_best)


def bias_score(
    table: BiasTable,
    context: ContextSet,
    config: BiasConfig,
    token: int | str,
) -> float:
    """The boost for one decoder token; zero for anything outside the
    context.  Independent of any decoding history by construction."""
    if table.vocab_checksum != context.vocab_checksum:
        raise IntegrityError(
            "bias table and context set were built from different vocabularies"
        )
    if isinstance(token, int):
        if token in context.word_entries:
            return config.lam * table.base_bias[token]
        return 0.0
    if token in context.oov_word_entries:
        return config.alpha
    entry = context.phrase_index.get(token)
    if entry is None:
        return 0.0
    if context.scheme == OOV:
        return config.alpha
    total = 0.0
    for wid in entry.ids:
        if wid is None:
            total += config.alpha
        else:
            total += config.lam * table.base_bias[wid]
    return total


def combined_score(
    model: NgramModel,
    table: BiasTable,
    context: ContextSet,
    config: BiasConfig,
    history: Sequence[str],
    token: int | str,
) -> float:
    """LM score plus bias for one token given a word history.

    Expansion-scheme phrase tokens score the LM over their constituent
    words; OOV-scheme phrase tokens score as a single unk.  With an empty
    context this equals the plain LM score exactly.
    """
    if table.vocab_checksum != model.vocab.checksum():
        raise IntegrityError("bias table was built from a different vocabulary")
    v = model.vocab
    hist_ids = [v.get(w) for w in history]
    sb = bias_score(table, context, config, token)
    if isinstance(token, int):
        return model.score(hist_ids, token) + sb
    entry = context.phrase_index.get(token)
    if entry is not None and context.scheme == EXPANSION:
        sg = 0.0
        ids = list(hist_ids)
        for w, wid in zip(entry.words, entry.ids):
            tid = wid if wid is not None else v.unk_id
            sg += model.score(ids, tid)
            ids.append(tid)
        return sg + sb
    # OOV context word, OOV-scheme phrase, or any unknown string: one unk.
    return model.score(hist_ids, v.unk_id) + sb


def write_bias_table_tsv(table: BiasTable, vocab: Vocabulary, sink: TextIO) -> None:
    """TSV `word<TAB>base_bias`; header line binds the table to its
    vocabulary checksum."""
    sink.write(f"# vocab_sha256\t{table.vocab_checksum}\n")
    for w in sorted(table.base_bias):
        sink.write(f"{vocab.words[w]}\t{table.base_bias[w]:.10f}\n")


def read_bias_table_tsv(source: TextIO, vocab: Vocabulary) -> BiasTable:
    header = source.readline().rstrip("\n")
    if not header.startswith("# vocab_sha256\t"):
        raise ParseError("missing vocabulary checksum header", 1)
    checksum = header.split("\t", 1)[1]
    if checksum != vocab.checksum():
        raise IntegrityError("bias table was built from a different vocabulary")
    base: dict[int, float] = {}
    for line_no, line in enumerate(source, 2):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(f"expected 2 fields, got {len(parts)}", line_no)
        word, val = parts
        if word not in vocab:
            raise IntegrityError(f"word {word!r} not in vocabulary")
        base[vocab.id_of[word]] = float(val)
    return BiasTable(base_bias=base, vocab_checksum=checksum)
