"""WER accounting, context extraction, and the evaluation protocols."""

from __future__ import annotations

import io
import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxbias.corpus import build_vocab, count_ngrams
from ctxbias.decode_sim import NoiseConfig
from ctxbias.errors import ConfigError
from ctxbias.evaluation import (
    DEL,
    INS,
    MATCH,
    SUB,
    Artifacts,
    ExperimentConfig,
    WerStats,
    align,
    baseline_decode,
    distractor_pool,
    extract_oracle_context,
    run_experiment,
    sample_distractors,
    top_common_words,
    wer,
    write_report_json,
)

WORDS = st.lists(st.sampled_from(["a", "b", "c", "d"]), min_size=0, max_size=7)


def _edit_ops_distance(ref, hyp):
    """Independent word-level Levenshtein distance (full DP matrix)."""
    r, h = len(ref), len(hyp)
    d = [[0] * (h + 1) for _ in range(r + 1)]
    for i in range(r + 1):
        d[i][0] = i
    for j in range(h + 1):
        d[0][j] = j
    for i in range(1, r + 1):
        for j in range(1, h + 1):
            d[i][j] = min(
                d[i - 1][j] + 1,
                d[i][j - 1] + 1,
                d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]),
            )
    return d[r][h]


# --- alignment and WER ---

def test_align_hand_case():
    ops = align(["the", "world", "cup"], ["the", "word", "cup"])
    assert ops == [(MATCH, 0, 0), (SUB, 1, 1), (MATCH, 2, 2)]


def test_align_insertion_and_deletion():
    assert align(["a"], ["a", "b"]) == [(MATCH, 0, 0), (INS, 0, 1)]
    assert align(["a", "b"], ["a"]) == [(MATCH, 0, 0), (DEL, 1, 0)]


def test_align_covers_all_positions():
    ref, hyp = ["a", "b", "c"], ["b", "c", "d", "e"]
    ops = align(ref, hyp)
    assert [i for op, i, _ in ops if op in (MATCH, SUB, DEL)] == list(range(len(ref)))
    assert [j for op, _, j in ops if op in (MATCH, SUB, INS)] == list(range(len(hyp)))


def test_wer_hand_cases():
    s = wer(["the", "world", "cup"], ["the", "word", "cup"])
    assert (s.substitutions, s.insertions, s.deletions) == (1, 0, 0)
    assert s.wer == pytest.approx(1 / 3)
    s = wer(["a", "b"], ["a", "b", "c"])
    assert (s.substitutions, s.insertions, s.deletions) == (0, 1, 0)
    s = wer(["a", "b", "c"], ["a", "c"])
    assert (s.substitutions, s.insertions, s.deletions) == (0, 0, 1)
    assert wer(["a"], []).deletions == 1
    with pytest.raises(ConfigError):
        wer([], ["a"])


@given(WORDS, WORDS)
@settings(max_examples=100, deadline=None)
def test_wer_errors_equal_reference_edit_distance(ref, hyp):
    if not ref:
        return
    s = wer(ref, hyp)
    assert s.errors == _edit_ops_distance(ref, hyp)
    assert s.reference_length == len(ref)
    assert len(hyp) == s.reference_length - s.deletions + s.insertions


def test_werstats_addition_is_corpus_level():
    a = WerStats(1, 0, 1, 4)
    b = WerStats(0, 2, 0, 6)
    c = a + b
    assert (c.substitutions, c.insertions, c.deletions, c.reference_length) == (1, 2, 1, 10)
    # Corpus-level WER, not the mean of the two ratios.
    assert c.wer == pytest.approx(4 / 10)
    assert c.wer != pytest.approx((a.wer + b.wer) / 2)


# --- oracle context extraction ---

def test_oracle_context_merges_adjacent_errors():
    got = extract_oracle_context(
        ["the", "world", "cup", "final"], ["the", "word", "cut", "final"]
    )
    assert got == ["world cup"]


def test_oracle_context_perfect_hypothesis_is_empty():
    assert extract_oracle_context(["a", "b"], ["a", "b"]) == []


def test_oracle_context_splits_long_runs():
    got = extract_oracle_context(["a", "b", "c", "d"], ["x", "x", "x", "x"], 3)
    assert got == ["a b c", "d"]


def test_oracle_context_includes_deletions_not_insertions():
    # "b" deleted -> in context; inserted "z" is not a reference word.
    assert extract_oracle_context(["a", "b", "c"], ["a", "c"]) == ["b"]
    assert extract_oracle_context(["a", "c"], ["a", "z", "c"]) == []


def test_oracle_context_dedups_repeated_phrases():
    got = extract_oracle_context(["a", "x", "a"], ["b", "x", "b"])
    assert got == ["a"]


def test_oracle_context_rejects_bad_phrase_len():
    with pytest.raises(ConfigError):
        extract_oracle_context(["a"], ["a"], 0)


# --- distractor and adversarial sampling ---

def test_sample_distractors_filters_protected_sublists():
    pool = ["x y", "a b", "b", "q", "long one two three four"]
    protected = [("a", "b", "c")]
    # Only "x y" and "q" survive the filters, so asking for exactly those
    # two must return them; asking for three must fail.
    assert sorted(sample_distractors(pool, protected, 2, seed=0)) == ["q", "x y"]
    with pytest.raises(ConfigError):
        sample_distractors(pool, protected, 3, seed=0)


def test_sample_distractors_exact_and_errors():
    pool = ["x", "y", "z"]
    assert sample_distractors(pool, [], 0, seed=1) == []
    assert sorted(sample_distractors(pool, [], 3, seed=1)) == ["x", "y", "z"]
    assert sample_distractors(pool, [], 2, seed=5) == sample_distractors(pool, [], 2, seed=5)
    with pytest.raises(ConfigError):
        sample_distractors(pool, [], 4, seed=0)
    with pytest.raises(ConfigError):
        sample_distractors(pool, [("x",), ("y",), ("z",)], 1, seed=0)


def test_top_common_words_ranks_by_count(toy_counts, toy_vocab):
    # pool = vocabulary, sample = pool: returns every word, sorted by id.
    n = len(toy_vocab)
    got = top_common_words(toy_counts, toy_vocab, n, n, seed=0)
    assert got == list(toy_vocab.words)
    # Pool of 1 can only ever yield the single most frequent word.
    top = top_common_words(toy_counts, toy_vocab, 1, 1, seed=9)
    assert top == [toy_vocab.words[0]]
    with pytest.raises(ConfigError):
        top_common_words(toy_counts, toy_vocab, n + 1, 1, seed=0)
    with pytest.raises(ConfigError):
        top_common_words(toy_counts, toy_vocab, 2, 3, seed=0)


def test_distractor_pool_enumerates_short_phrases():
    pool = distractor_pool([("a", "b", "c")])
    assert pool == ["a", "b", "c", "a b", "b c", "a b c"]
    # Duplicates across utterances appear once.
    assert distractor_pool([("a",), ("a",)]) == ["a"]


# --- experiment protocols at toy scale ---

@pytest.fixture()
def toy_artifacts(toy_vocab, toy_model, toy_counts, toy_table):
    refs = (
        ("the", "world", "cup", "is", "big"),
        ("not", "a", "cup"),
        ("the", "big", "game"),
        ("world", "cup", "final"),
    )
    noise = NoiseConfig(confusers=3, gamma=1.5, truth_drop=0.5, rare_rank=2, seed=0)
    return Artifacts(
        vocab=toy_vocab,
        model=toy_model,
        counts=toy_counts,
        bias_table=toy_table,
        test_refs=refs,
        noise=noise,
    )


def test_experiment_config_validation():
    ExperimentConfig(condition="oracle")
    with pytest.raises(ConfigError):
        ExperimentConfig(condition="sabotage")
    with pytest.raises(ConfigError):
        ExperimentConfig(subset="without-error")


def test_baseline_decode_is_deterministic(toy_artifacts):
    a = baseline_decode(toy_artifacts)
    b = baseline_decode(toy_artifacts)
    assert a == b


def test_baseline_condition_cell_equals_baseline(toy_artifacts):
    cfg = ExperimentConfig(condition="baseline", subset="all")
    rep = run_experiment(toy_artifacts, cfg)
    (cell,) = rep.cells
    assert cell.aggregate == rep.baseline
    assert rep.utterance_ids == tuple(range(len(toy_artifacts.test_refs)))


def test_with_error_subset_selects_imperfect_utterances(toy_artifacts):
    _, hyps, stats = baseline_decode(toy_artifacts)
    expected = tuple(i for i, s in enumerate(stats) if s.errors > 0)
    rep = run_experiment(toy_artifacts, ExperimentConfig(condition="baseline"))
    assert rep.utterance_ids == expected
    assert len(expected) >= 1  # noise config must actually cause errors


def test_oracle_with_zero_strength_only_changes_via_injection(toy_artifacts):
    # lam = alpha = 0 turns off all score boosts; any WER change relative
    # to baseline can come only from injected arcs/candidates.
    cfg = ExperimentConfig(condition="oracle", lambdas=(0.0,), alphas=(0.0,))
    rep = run_experiment(toy_artifacts, cfg)
    (cell,) = rep.cells
    assert cell.aggregate.wer <= rep.baseline.wer + 1e-12


def test_oracle_biasing_reduces_wer_at_toy_scale(toy_artifacts):
    cfg = ExperimentConfig(condition="oracle", lambdas=(1.0,), alphas=(5.0,))
    rep = run_experiment(toy_artifacts, cfg)
    (cell,) = rep.cells
    assert cell.aggregate.wer < rep.baseline.wer


def test_run_experiment_deterministic(toy_artifacts):
    cfg = ExperimentConfig(
        condition="oracle", lambdas=(0.5, 1.0), alphas=(0.0, 3.0), seed=4
    )
    assert run_experiment(toy_artifacts, cfg) == run_experiment(toy_artifacts, cfg)


def test_grid_enumerates_lambda_alpha_product(toy_artifacts):
    cfg = ExperimentConfig(
        condition="oracle", lambdas=(0.0, 1.0, 2.0), alphas=(0.0, 5.0)
    )
    rep = run_experiment(toy_artifacts, cfg)
    assert [(c.lam, c.alpha) for c in rep.cells] == [
        (0.0, 0.0), (0.0, 5.0), (1.0, 0.0), (1.0, 5.0), (2.0, 0.0), (2.0, 5.0)
    ]
    for cell in rep.cells:
        assert len(cell.per_utterance) == len(rep.utterance_ids)
        assert cell.aggregate == sum(cell.per_utterance[1:], cell.per_utterance[0])


def test_distractors_never_overlap_protected_transcripts(toy_artifacts):
    lat, hyps, stats = baseline_decode(toy_artifacts)
    with_error = [i for i, s in enumerate(stats) if s.errors > 0]
    pool = distractor_pool(toy_artifacts.test_refs)
    protected = [toy_artifacts.test_refs[i] for i in with_error]
    phrases = sample_distractors(pool, protected, 2, seed=0)
    for p in phrases:
        toks = tuple(p.split())
        for ref in protected:
            k = len(toks)
            assert all(
                tuple(ref[i : i + k]) != toks for i in range(len(ref) - k + 1)
            )


def test_report_json_is_valid_and_complete(toy_artifacts):
    cfg = ExperimentConfig(condition="oracle", lambdas=(1.0,), alphas=(2.0,))
    rep = run_experiment(toy_artifacts, cfg)
    buf = io.StringIO()
    write_report_json(rep, buf)
    obj = json.loads(buf.getvalue())
    assert obj["condition"] == "oracle"
    assert obj["baseline"]["wer"] == pytest.approx(rep.baseline.wer)
    (cell,) = obj["cells"]
    assert cell["lambda"] == 1.0 and cell["alpha"] == 2.0
    assert cell["wer"] == pytest.approx(rep.cells[0].aggregate.wer)
    assert len(cell["per_utterance"]) == len(obj["utterance_ids"])
