"""Contextual biasing for language-model decoding.

Precomputes a per-word bias score from an unsupervised class-based language
model at training time and applies it additively to n-gram LM scores at
decode time, with two schemes for multi-word context phrases.
"""

from ctxbias.corpus import Vocabulary, NgramCounts, tokenize, build_vocab, count_ngrams
from ctxbias.ngram_lm import NgramModel, train_lm, write_arpa, read_arpa
from ctxbias.clustering import (
    ClusterAssignment,
    brown_cluster,
    average_mutual_information,
    class_conditional,
)
from ctxbias.bias import (
    BiasTable,
    BiasConfig,
    ContextSet,
    build_bias_table,
    compile_context,
    bias_score,
    combined_score,
)
from ctxbias.decode_sim import (
    NoiseConfig,
    ConfusionLattice,
    Hypothesis,
    make_lattice,
    inject_context_arcs,
    beam_decode,
)
from ctxbias.evaluation import WerStats, EvalReport, wer, extract_oracle_context

__version__ = "0.1.0"
