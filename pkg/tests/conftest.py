"""Shared fixtures: the synthetic desk corpus and artifacts trained on it.

Training the LM and clustering the vocabulary dominate suite runtime, so
everything derived from the default desk corpus is session-scoped and the
cluster assignments are cached per class count.
"""

from __future__ import annotations

import pytest

from ctxbias.bias import BiasTable, build_bias_table
from ctxbias.clustering import ClusterAssignment, brown_cluster
from ctxbias.corpus import NgramCounts, Vocabulary, build_vocab, count_ngrams, tokenize
from ctxbias.datagen import DeskCorpus, generate_desk_corpus, rare_rank_for
from ctxbias.decode_sim import NoiseConfig
from ctxbias.evaluation import Artifacts
from ctxbias.ngram_lm import NgramModel, TrainConfig, train_lm

# Default class count for the desk pipeline: a middle point of the
# class-count trade-off (large boosts at few classes, robustness at many).
DESK_CLASSES = 128


@pytest.fixture(scope="session")
def desk() -> DeskCorpus:
    return generate_desk_corpus()


@pytest.fixture(scope="session")
def desk_sentences(desk) -> list[list[str]]:
    return [tokenize(line) for line in desk.train_lines]


@pytest.fixture(scope="session")
def desk_vocab(desk, desk_sentences) -> Vocabulary:
    return build_vocab(desk_sentences, desk.vocab_size)


@pytest.fixture(scope="session")
def desk_counts(desk_sentences, desk_vocab) -> NgramCounts:
    return count_ngrams(desk_sentences, desk_vocab, 4)


@pytest.fixture(scope="session")
def desk_model(desk_counts, desk_vocab) -> NgramModel:
    return train_lm(desk_counts, desk_vocab, TrainConfig(order=4))


@pytest.fixture(scope="session")
def desk_noise(desk_vocab) -> NoiseConfig:
    return NoiseConfig(
        confusers=4,
        gamma=2.0,
        truth_drop=0.3,
        d_max=2,
        seed=0,
        rare_rank=rare_rank_for(desk_vocab.counts),
    )


@pytest.fixture(scope="session")
def cluster_for(desk_counts, desk_vocab):
    """Session-cached `num_classes -> ClusterAssignment` factory."""
    cache: dict[int, ClusterAssignment] = {}

    def get(num_classes: int) -> ClusterAssignment:
        if num_classes not in cache:
            cache[num_classes] = brown_cluster(desk_counts, desk_vocab, num_classes)
        return cache[num_classes]

    return get


@pytest.fixture(scope="session")
def bias_table_for(cluster_for, desk_vocab):
    cache: dict[int, BiasTable] = {}

    def get(num_classes: int) -> BiasTable:
        if num_classes not in cache:
            cache[num_classes] = build_bias_table(cluster_for(num_classes), desk_vocab)
        return cache[num_classes]

    return get


@pytest.fixture(scope="session")
def artifacts_for(desk, desk_vocab, desk_counts, desk_model, desk_noise, bias_table_for):
    def get(num_classes: int = DESK_CLASSES) -> Artifacts:
        return Artifacts(
            vocab=desk_vocab,
            model=desk_model,
            counts=desk_counts,
            bias_table=bias_table_for(num_classes),
            test_refs=desk.test_refs,
            noise=desk_noise,
        )

    return get


# --- small hand-checkable corpus shared by bias / decoding tests ---

TOY_LINES = [
    "the world cup was great",
    "the world cup final was close",
    "world cup is not a cup",
    "this is not a cup",
    "the cup is on the table",
    "the world is big",
    "we watch the world cup",
    "a cup of coffee",
    "the final game was great",
    "this game is not close",
]


@pytest.fixture(scope="session")
def toy_sentences() -> list[list[str]]:
    return [tokenize(line) for line in TOY_LINES] * 3


@pytest.fixture(scope="session")
def toy_vocab(toy_sentences) -> Vocabulary:
    return build_vocab(toy_sentences, 100)


@pytest.fixture(scope="session")
def toy_counts(toy_sentences, toy_vocab) -> NgramCounts:
    return count_ngrams(toy_sentences, toy_vocab, 3)


@pytest.fixture(scope="session")
def toy_model(toy_counts, toy_vocab) -> NgramModel:
    return train_lm(toy_counts, toy_vocab, TrainConfig(order=3))


@pytest.fixture(scope="session")
def toy_assignment(toy_counts, toy_vocab) -> ClusterAssignment:
    return brown_cluster(toy_counts, toy_vocab, 4)


@pytest.fixture(scope="session")
def toy_table(toy_assignment, toy_vocab) -> BiasTable:
    return build_bias_table(toy_assignment, toy_vocab)
