"""WER measurement and the four experimental protocols.

Protocols mirror the oracle / distractors / class-count / adversarial
structure of the source experiments at desk scale: a baseline decode
splits the test set into with-error and without-error utterances, oracle
context is extracted from the baseline's mistakes, distractors are
sampled from phrases guaranteed absent from the with-error targets, and
the adversarial condition biases the most common words.

WER aggregation is corpus-level: sum of errors over sum of reference
lengths, not the mean of per-utterance ratios.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, asdict
from typing import Iterable, Sequence, TextIO

from ctxbias.bias import (
    BiasConfig,
    BiasTable,
    ContextSet,
    compile_context,
)
from ctxbias.corpus import NgramCounts, Vocabulary, tokenize, word_unigram_counts
from ctxbias.decode_sim import (
    ConfusionLattice,
    NoiseConfig,
    PlainScorer,
    Scorer,
    beam_decode,
    inject_context_arcs,
    make_lattice,
)
from ctxbias.errors import ConfigError
from ctxbias.ngram_lm import NgramModel

MATCH, SUB, INS, DEL = "match", "sub", "ins", "del"

CONDITIONS = ("baseline", "oracle", "distractors", "oracle+distractors", "adversarial")


@dataclass(frozen=True)
class WerStats:
    substitutions: int
    insertions: int
    deletions: int
    reference_length: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer(self) -> float:
        return self.errors / self.reference_length

    def __add__(self, other: "WerStats") -> "WerStats":
        return WerStats(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.reference_length + other.reference_length,
        )


def align(
    reference: Sequence[str], hypothesis: Sequence[str]
) -> list[tuple[str, int, int]]:
    """Minimal-edit alignment as (op, ref_index, hyp_index) triples.

    Unit costs; on ties the backtrace prefers substitution over insertion
    over deletion, so alignments are deterministic.
    """
    r, h = len(reference), len(hypothesis)
    dist = [[0] * (h + 1) for _ in range(r + 1)]
    for i in range(1, r + 1):
        dist[i][0] = i
    for j in range(1, h + 1):
        dist[0][j] = j
    for i in range(1, r + 1):
        ref_w = reference[i - 1]
        row = dist[i]
        prev = dist[i - 1]
        for j in range(1, h + 1):
            row[j] = min(
                prev[j - 1] + (ref_w != hypothesis[j - 1]),
                row[j - 1] + 1,
                prev[j] + 1,
            )
    ops: list[tuple[str, int, int]] = []
    i, j = r, h
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + (
            reference[i - 1] != hypothesis[j - 1]
        ):
            op = MATCH if reference[i - 1] == hypothesis[j - 1] else SUB
            ops.append((op, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif j > 0 and dist[i][j] == dist[i][j - 1] + 1:
            ops.append((INS, i - 1, j - 1))
            j -= 1
        else:
            ops.append((DEL, i - 1, j - 1))
            i -= 1
    ops.reverse()
    return ops


def wer(reference: Sequence[str], hypothesis: Sequence[str]) -> WerStats:
    """Levenshtein-alignment word error counts for one utterance."""
    if not reference:
        raise ConfigError("reference must be non-empty")
    ops = align(reference, hypothesis)
    return WerStats(
        substitutions=sum(1 for op, *_ in ops if op == SUB),
        insertions=sum(1 for op, *_ in ops if op == INS),
        deletions=sum(1 for op, *_ in ops if op == DEL),
        reference_length=len(reference),
    )


def extract_oracle_context(
    reference: Sequence[str],
    baseline_hypothesis: Sequence[str],
    max_phrase_len: int = 3,
) -> list[str]:
    """Reference words the baseline missed, merged into phrases.

    Adjacent error words (substitutions and deletions) merge into one
    phrase; runs longer than `max_phrase_len` split left-to-right.
    """
    if max_phrase_len < 1:
        raise ConfigError(f"max_phrase_len must be >= 1, got {max_phrase_len}")
    error_pos = sorted(
        i for op, i, _ in align(reference, baseline_hypothesis) if op in (SUB, DEL)
    )
    runs: list[list[int]] = []
    for pos in error_pos:
        if runs and runs[-1][-1] == pos - 1:
            runs[-1].append(pos)
        else:
            runs.append([pos])
    phrases: list[str] = []
    seen: set[str] = set()
    for run in runs:
        for k in range(0, len(run), max_phrase_len):
            chunk = run[k : k + max_phrase_len]
            phrase = " ".join(reference[i] for i in chunk)
            if phrase not in seen:
                seen.add(phrase)
                phrases.append(phrase)
    return phrases


def _contains_sublist(haystack: Sequence[str], needle: Sequence[str]) -> bool:
    n, k = len(haystack), len(needle)
    return any(tuple(haystack[i : i + k]) == tuple(needle) for i in range(n - k + 1))


def sample_distractors(
    pool: Sequence[str],
    protected: Iterable[Sequence[str]],
    n: int,
    seed: int,
) -> list[str]:
    """Seeded uniform sample of irrelevant phrases.

    Pool phrases occurring contiguously inside any protected transcript
    are filtered out first; too small a filtered pool is an error.
    """
    protected_list = [tuple(t) for t in protected]
    filtered = []
    seen: set[str] = set()
    for raw in pool:
        if raw in seen:
            continue
        seen.add(raw)
        toks = tokenize(raw)
        if not toks or len(toks) > 3:
            continue
        if any(_contains_sublist(t, toks) for t in protected_list):
            continue
        filtered.append(raw)
    if len(filtered) < n:
        raise ConfigError(
            f"distractor pool exhausted: need {n}, only {len(filtered)} available"
        )
    return random.Random(seed).sample(filtered, n)


def top_common_words(
    counts: NgramCounts, vocab: Vocabulary, pool_size: int, n: int, seed: int
) -> list[str]:
    """Seeded sample of n words from the pool_size highest-count words."""
    if pool_size > len(vocab):
        raise ConfigError(f"pool_size {pool_size} exceeds vocabulary size {len(vocab)}")
    if n > pool_size:
        raise ConfigError(f"n {n} exceeds pool_size {pool_size}")
    uni = word_unigram_counts(counts, vocab)
    ranked = sorted(range(len(vocab)), key=lambda w: (-uni.get(w, 0), w))[:pool_size]
    chosen = sorted(random.Random(seed).sample(ranked, n))
    return [vocab.words[w] for w in chosen]


@dataclass(frozen=True)
class ExperimentConfig:
    condition: str = "baseline"
    scheme: str = "expansion"
    lambdas: tuple[float, ...] = (1.0,)
    alphas: tuple[float, ...] = (0.0,)
    num_distractors: int = 0
    adversarial_pool: int = 100
    adversarial_n: int = 50
    subset: str = "with-error"
    beam: int = 8
    max_phrase_len: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ConfigError(f"unknown condition {self.condition!r}")
        if self.subset not in ("with-error", "all"):
            raise ConfigError(f"unknown subset {self.subset!r}")


@dataclass(frozen=True)
class Artifacts:
    """Everything a protocol run needs, already loaded."""

    vocab: Vocabulary
    model: NgramModel
    counts: NgramCounts
    bias_table: BiasTable
    test_refs: tuple[tuple[str, ...], ...]
    noise: NoiseConfig = NoiseConfig()


@dataclass(frozen=True)
class GridCell:
    lam: float
    alpha: float
    aggregate: WerStats
    per_utterance: tuple[WerStats, ...]
    hypotheses: tuple[tuple[str, ...], ...]


@dataclass(frozen=True)
class EvalReport:
    condition: str
    scheme: str
    config: dict
    baseline: WerStats
    cells: tuple[GridCell, ...]
    utterance_ids: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "scheme": self.scheme,
            "config": self.config,
            "baseline": asdict(self.baseline) | {"wer": self.baseline.wer},
            "utterance_ids": list(self.utterance_ids),
            "cells": [
                {
                    "lambda": c.lam,
                    "alpha": c.alpha,
                    "wer": c.aggregate.wer,
                    "aggregate": asdict(c.aggregate),
                    "per_utterance": [asdict(s) for s in c.per_utterance],
                }
                for c in self.cells
            ],
        }


def write_report_json(report: EvalReport, sink: TextIO) -> None:
    json.dump(report.to_dict(), sink, indent=2, sort_keys=True)
    sink.write("\n")


def baseline_decode(
    art: Artifacts, beam: int = 8
) -> tuple[list[ConfusionLattice], list[tuple[str, ...]], list[WerStats]]:
    """Lattices, hypotheses, and per-utterance stats for the no-context decode."""
    lattices = [make_lattice(r, art.vocab, art.noise) for r in art.test_refs]
    plain = PlainScorer(art.model)
    hyps = [beam_decode(lat, plain, beam).tokens for lat in lattices]
    stats = [wer(r, h) for r, h in zip(art.test_refs, hyps)]
    return lattices, hyps, stats


def distractor_pool(test_refs: Sequence[Sequence[str]]) -> list[str]:
    """All distinct 1-3 word contiguous phrases over the test transcripts."""
    pool: list[str] = []
    seen: set[str] = set()
    for ref in test_refs:
        for k in (1, 2, 3):
            for i in range(len(ref) - k + 1):
                phrase = " ".join(ref[i : i + k])
                if phrase not in seen:
                    seen.add(phrase)
                    pool.append(phrase)
    return pool


def run_experiment(art: Artifacts, cfg: ExperimentConfig) -> EvalReport:
    """Execute one evaluation condition over the (lambda, alpha) grid.

    Per-utterance decoding is independent across utterances; lattice
    construction and context-arc injection are hoisted out of the grid
    loop since neither depends on lambda or alpha.
    """
    lattices, base_hyps, base_stats = baseline_decode(art, cfg.beam)
    with_error = [i for i, s in enumerate(base_stats) if s.errors > 0]
    subset = with_error if cfg.subset == "with-error" else list(range(len(lattices)))
    baseline_agg = _aggregate(base_stats[i] for i in subset)

    shared_phrases: list[str] = []
    if cfg.condition in ("distractors", "oracle+distractors") and cfg.num_distractors:
        pool = distractor_pool(art.test_refs)
        protected = [art.test_refs[i] for i in with_error]
        shared_phrases = sample_distractors(
            pool, protected, cfg.num_distractors, cfg.seed
        )
    elif cfg.condition == "adversarial":
        shared_phrases = top_common_words(
            art.counts, art.vocab, cfg.adversarial_pool, cfg.adversarial_n, cfg.seed
        )

    use_oracle = cfg.condition in ("oracle", "oracle+distractors")
    contexts: list[ContextSet] = []
    injected: list[ConfusionLattice] = []
    for i in subset:
        phrases = list(shared_phrases)
        if cfg.condition == "adversarial":
            # The attack measures pure over-biasing: context that does not
            # represent the utterance.  At desk-corpus scale a global common
            # word sample inevitably overlaps some references, which would
            # smuggle in relevant (oracle-like) context, so drop each
            # utterance's own reference words from its attack context.
            ref_words = set(art.test_refs[i])
            phrases = [p for p in phrases if p not in ref_words]
        if use_oracle:
            phrases = (
                extract_oracle_context(
                    art.test_refs[i], base_hyps[i], cfg.max_phrase_len
                )
                + phrases
            )
        ctx = compile_context(phrases, art.vocab, cfg.scheme)
        contexts.append(ctx)
        injected.append(inject_context_arcs(lattices[i], ctx))

    cells = []
    for lam in cfg.lambdas:
        for alpha in cfg.alphas:
            bias_cfg = BiasConfig(lam=lam, alpha=alpha)
            stats = []
            hyps = []
            for ctx, lat, i in zip(contexts, injected, subset):
                scorer = Scorer(art.model, art.bias_table, ctx, bias_cfg)
                hyp = beam_decode(lat, scorer, cfg.beam)
                stats.append(wer(art.test_refs[i], hyp.tokens))
                hyps.append(hyp.tokens)
            cells.append(
                GridCell(
                    lam=lam,
                    alpha=alpha,
                    aggregate=_aggregate(stats),
                    per_utterance=tuple(stats),
                    hypotheses=tuple(hyps),
                )
            )

    echo = {
        "condition": cfg.condition,
        "scheme": cfg.scheme,
        "lambdas": list(cfg.lambdas),
        "alphas": list(cfg.alphas),
        "num_distractors": cfg.num_distractors,
        "subset": cfg.subset,
        "beam": cfg.beam,
        "seed": cfg.seed,
        "noise": asdict(art.noise),
        "num_utterances": len(subset),
    }
    return EvalReport(
        condition=cfg.condition,
        scheme=cfg.scheme,
        config=echo,
        baseline=baseline_agg,
        cells=tuple(cells),
        utterance_ids=tuple(subset),
    )


def _aggregate(stats: Iterable[WerStats]) -> WerStats:
    total = WerStats(0, 0, 0, 0)
    for s in stats:
        total = total + s
    if total.reference_length == 0:
        raise ConfigError("cannot aggregate over an empty subset")
    return total
