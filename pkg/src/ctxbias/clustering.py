"""Unsupervised Brown clustering and class-conditional unigrams.

Windowed greedy agglomerative clustering over adjacent-word bigram
statistics: the `num_classes` most frequent words start as singleton
clusters, every further word (in frequency rank) is activated as a
temporary extra cluster, and the pair of active clusters whose merge loses
the least average mutual information (AMI) is merged.  Ties break on the
smallest (id, id) pair, so the result is fully deterministic.

Bigram statistics cover the whole corpus from the start (every word is its
own cluster until merged), which keeps the AMI bookkeeping incremental:
a merge only touches the merged row/column, so merge losses for untouched
pairs are patched in O(window^2) instead of recomputed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from ctxbias.corpus import NgramCounts, Vocabulary, word_unigram_counts
from ctxbias.errors import ConfigError, ParseError
from ctxbias.ngram_lm import NgramModel, TrainConfig, train_lm


@dataclass(frozen=True)
class ClusterAssignment:
    """Non-overlapping, exhaustive word-id -> class-id map with MLE
    class-conditional unigram log-probabilities."""

    num_classes: int
    class_of: dict[int, int] = field(repr=False)
    class_cond_logp: dict[int, float] = field(repr=False)
    class_counts: dict[int, int] = field(repr=False)


def brown_cluster(
    counts: NgramCounts, vocab: Vocabulary, num_classes: int
) -> ClusterAssignment:
    """Cluster the vocabulary into `num_classes` classes.

    Only real vocabulary words participate; unk and sentence markers are
    excluded from both the statistics and the output.
    """
    n_words = len(vocab)
    if not 1 <= num_classes <= n_words:
        raise ConfigError(
            f"num_classes must be in 1..{n_words}, got {num_classes}"
        )
    uni = word_unigram_counts(counts, vocab)
    counted = [w for w in range(n_words) if uni.get(w, 0) > 0]
    zero_count = [w for w in range(n_words) if uni.get(w, 0) == 0]

    if num_classes >= len(counted):
        class_of = {w: i for i, w in enumerate(counted)}
    elif num_classes == 1:
        class_of = {w: 0 for w in counted}
    else:
        class_of = _greedy_merge(counts, vocab, counted, num_classes)

    return _finalize(class_of, zero_count, uni, num_classes)


def class_conditional(
    class_of: dict[int, int], uni: dict[int, int]
) -> tuple[dict[int, float], dict[int, int]]:
    """MLE within-class unigram log P(w | C(w)) and per-class token counts."""
    class_counts: dict[int, int] = {}
    for w, c in class_of.items():
        class_counts[c] = class_counts.get(c, 0) + uni.get(w, 0)
    logp = {
        w: math.log(uni[w] / class_counts[class_of[w]]) for w in class_of if w in uni and uni[w] > 0
    }
    return logp, class_counts


def _finalize(
    class_of: dict[int, int],
    zero_count: list[int],
    uni: dict[int, int],
    num_classes: int,
) -> ClusterAssignment:
    logp, class_counts = class_conditional(class_of, uni)
    if zero_count:
        # Reserved class for words the corpus never produced; floored so the
        # bias table stays finite.
        reserved = max(class_of.values(), default=-1) + 1
        class_counts[reserved] = 0
        for w in zero_count:
            class_of[w] = reserved
            logp[w] = math.log(1.0 / (class_counts[reserved] + 1))
    return ClusterAssignment(
        num_classes=num_classes,
        class_of=class_of,
        class_cond_logp=logp,
        class_counts=class_counts,
    )


def average_mutual_information(
    assignment: ClusterAssignment, counts: NgramCounts, vocab: Vocabulary
) -> float:
    """AMI of adjacent class bigrams: sum p(c1,c2) log(p(c1,c2)/(p(c1)p(c2))).

    Computed from scratch over word-word bigrams; used as the reference for
    the incremental bookkeeping inside the greedy pass.
    """
    if counts.order < 2:
        return 0.0
    n_words = len(vocab)
    joint: dict[tuple[int, int], float] = {}
    total = 0.0
    for (a, b), c in counts.grams_of_order(2):
        if a < n_words and b < n_words and a in assignment.class_of and b in assignment.class_of:
            key = (assignment.class_of[a], assignment.class_of[b])
            joint[key] = joint.get(key, 0.0) + c
            total += c
    if total == 0:
        return 0.0
    left: dict[int, float] = {}
    right: dict[int, float] = {}
    for (c1, c2), c in joint.items():
        left[c1] = left.get(c1, 0.0) + c
        right[c2] = right.get(c2, 0.0) + c
    ami = 0.0
    for (c1, c2), c in joint.items():
        p = c / total
        ami += p * math.log(c * total / (left[c1] * right[c2]))
    return ami


class _MergeState:
    """Incremental AMI merge-loss bookkeeping over dense count matrices."""

    def __init__(self, bigram: np.ndarray):
        self.N = bigram.astype(np.float64)
        self.T = float(self.N.sum())
        self.Nl = self.N.sum(axis=1)
        self.Nr = self.N.sum(axis=0)
        self.logT = math.log(self.T) if self.T > 0 else 0.0
        self.q = self._g(self.N, self.Nl[:, None], self.Nr[None, :])
        self.s = np.zeros(len(bigram))

    def _g(self, n, l, r):
        """Elementwise (n/T) log(nT/(lr)); zero wherever n is zero."""
        if self.T == 0:
            return np.zeros(np.broadcast(n, l, r).shape)
        n = np.asarray(n, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (n / self.T) * (np.log(n) + self.logT - np.log(l) - np.log(r))
        return np.where(n > 0, val, 0.0)

    def activate(self, c: int) -> None:
        self.s[c] = self.q[c, :].sum() + self.q[:, c].sum() - self.q[c, c]

    def losses(self, x: int, ys: np.ndarray) -> np.ndarray:
        """AMI loss of merging x with each y in ys (all distinct from x)."""
        N, Nl, Nr, q, s = self.N, self.Nl, self.Nr, self.q, self.s
        k = len(ys)
        rowm = N[ys] + N[x]
        colm = N[:, ys].T + N[:, x]
        lm = Nl[ys] + Nl[x]
        rm = Nr[ys] + Nr[x]
        T1 = self._g(rowm, lm[:, None], Nr[None, :])
        T2 = self._g(colm, Nl[None, :], rm[:, None])
        idx = np.arange(k)
        t1 = T1.sum(axis=1) - T1[idx, ys] - T1[:, x]
        t2 = T2.sum(axis=1) - T2[idx, ys] - T2[:, x]
        self_n = N[x, x] + N[x, ys] + N[ys, x] + N[ys, ys]
        t3 = self._g(self_n, lm, rm)
        return s[x] + s[ys] - q[x, ys] - q[ys, x] - (t1 + t2 + t3)

    def merge(self, a: int, b: int, others: np.ndarray) -> np.ndarray:
        """Merge cluster b into a; returns the loss deltas for pairs among
        `others` (as a matrix aligned with `others`)."""
        N, Nl, Nr, q = self.N, self.Nl, self.Nr, self.q
        w = others
        # Patch s and pair losses among untouched window clusters first,
        # using pre-merge statistics.
        na = N[w, a]
        nb = N[w, b]
        an = N[a, w]
        bn = N[b, w]
        ra, rb, la, lb = Nr[a], Nr[b], Nl[a], Nl[b]
        ds = (
            self._g(na + nb, Nl[w], ra + rb)
            + self._g(an + bn, la + lb, Nr[w])
            - q[w, a]
            - q[a, w]
            - q[w, b]
            - q[b, w]
        )
        lxy = Nl[w][:, None] + Nl[w][None, :]
        rxy = Nr[w][:, None] + Nr[w][None, :]
        ca = na[:, None] + na[None, :]
        cb = nb[:, None] + nb[None, :]
        rra = an[:, None] + an[None, :]
        rrb = bn[:, None] + bn[None, :]
        d_added = (
            self._g(ca + cb, lxy, ra + rb)
            - self._g(ca, lxy, ra)
            - self._g(cb, lxy, rb)
            + self._g(rra + rrb, la + lb, rxy)
            - self._g(rra, la, rxy)
            - self._g(rrb, lb, rxy)
        )
        d_loss = ds[:, None] + ds[None, :] - d_added
        self.s[w] += ds

        # Now fold b's counts into a.
        N[a, :] += N[b, :]
        N[:, a] += N[:, b]
        N[b, :] = 0.0
        N[:, b] = 0.0
        Nl[a] += lb
        Nr[a] += rb
        Nl[b] = 0.0
        Nr[b] = 0.0
        q[b, :] = 0.0
        q[:, b] = 0.0
        q[a, :] = self._g(N[a, :], Nl[a], Nr)
        q[:, a] = self._g(N[:, a], Nl, Nr[a])
        self.activate(a)
        return d_loss


def _greedy_merge(
    counts: NgramCounts, vocab: Vocabulary, counted: list[int], num_classes: int
) -> dict[int, int]:
    n_words = len(vocab)
    pos_of = {w: i for i, w in enumerate(counted)}
    m = len(counted)
    bigram = np.zeros((m, m))
    for (a, b), c in counts.grams_of_order(2):
        if a < n_words and b < n_words and a in pos_of and b in pos_of:
            bigram[pos_of[a], pos_of[b]] += c

    state = _MergeState(bigram)
    loss = np.full((m, m), np.inf)
    members: dict[int, list[int]] = {i: [i] for i in range(m)}

    window: list[int] = list(range(num_classes))
    for x in window:
        state.activate(x)
    for i, x in enumerate(window[:-1]):
        ys = np.array(window[i + 1:])
        loss[x, ys] = state.losses(x, ys)

    for c in range(num_classes, m):
        state.activate(c)
        ys = np.array(window)
        loss[ys, c] = state.losses(c, ys)
        window.append(c)

        a, b = _select(loss, window)
        others = np.array([x for x in window if x not in (a, b)])
        if len(others):
            d_loss = state.merge(a, b, others)
            loss[np.ix_(others, others)] += d_loss
            fresh = state.losses(a, others)
            lo = np.minimum(others, a)
            hi = np.maximum(others, a)
            loss[lo, hi] = fresh
        else:
            state.merge(a, b, others)
        loss[b, :] = np.inf
        loss[:, b] = np.inf
        members[a].extend(members.pop(b))
        window.remove(b)

    # Dense class ids in ascending surviving-cluster order.
    class_of: dict[int, int] = {}
    for cls, root in enumerate(sorted(members)):
        for pos in members[root]:
            class_of[counted[pos]] = cls
    return class_of


def _select(loss: np.ndarray, window: list[int]) -> tuple[int, int]:
    """Smallest-loss active pair; ties break on the smallest (a, b) ids."""
    win = np.array(window)
    sub = loss[np.ix_(win, win)]
    iu = np.triu_indices(len(win), k=1)
    vals = sub[iu]
    best = vals.min()
    flat = int(np.argmax(vals <= best))
    return int(win[iu[0][flat]]), int(win[iu[1][flat]])


def class_lm_vocabulary(num_classes: int) -> Vocabulary:
    """Pseudo-vocabulary whose word ids are class ids."""
    words = tuple(f"c{i}" for i in range(num_classes))
    return Vocabulary(
        words=words,
        counts=(0,) * num_classes,
        max_size=num_classes,
        id_of={w: i for i, w in enumerate(words)},
    )


def train_class_lm(
    counts: NgramCounts,
    vocab: Vocabulary,
    assignment: ClusterAssignment,
    config: TrainConfig = TrainConfig(),
) -> NgramModel:
    """Witten-Bell LM over class-id sequences (diagnostic use only).

    Word n-gram counts are mapped through the class assignment and summed;
    markers and unk keep their special roles.
    """
    cvocab = class_lm_vocabulary(max(assignment.class_of.values()) + 1 if assignment.class_of else 1)

    def map_id(w: int) -> int:
        if w == vocab.unk_id:
            return cvocab.unk_id
        if w == vocab.bos_id:
            return cvocab.bos_id
        if w == vocab.eos_id:
            return cvocab.eos_id
        return assignment.class_of[w]

    mapped: dict[tuple[int, ...], int] = {}
    for gram, c in counts.counts.items():
        key = tuple(map_id(w) for w in gram)
        mapped[key] = mapped.get(key, 0) + c
    ccounts = NgramCounts(order=counts.order, counts=mapped, total_tokens=counts.total_tokens)
    return train_lm(ccounts, cvocab, config)


def class_ngram_score(
    assignment: ClusterAssignment,
    class_lm: NgramModel,
    vocab: Vocabulary,
    history: Sequence[int],
    word: int,
) -> float:
    """Class-factorized score: class-sequence term + class-conditional term.

    Diagnostic only; decoding never calls this.
    """
    cvocab = class_lm.vocab

    def map_id(w: int) -> int:
        if w == vocab.unk_id:
            return cvocab.unk_id
        if w == vocab.bos_id:
            return cvocab.bos_id
        if w == vocab.eos_id:
            return cvocab.eos_id
        return assignment.class_of[w]

    chist = [map_id(w) for w in history]
    if word == vocab.unk_id or word == vocab.eos_id:
        return class_lm.score(chist, map_id(word))
    return class_lm.score(chist, map_id(word)) + assignment.class_cond_logp[word]


def write_class_map_tsv(
    assignment: ClusterAssignment, vocab: Vocabulary, sink: TextIO
) -> None:
    """TSV `word<TAB>class_id<TAB>log_class_conditional`, sorted by word id;
    header carries the vocabulary checksum."""
    sink.write(f"# vocab_sha256\t{vocab.checksum()}\n")
    for w in sorted(assignment.class_of):
        sink.write(
            f"{vocab.words[w]}\t{assignment.class_of[w]}\t{assignment.class_cond_logp[w]:.10f}\n"
        )


def read_class_map_tsv(source: TextIO, vocab: Vocabulary) -> ClusterAssignment:
    from ctxbias.errors import IntegrityError

    class_of: dict[int, int] = {}
    logp: dict[int, float] = {}
    header = source.readline().rstrip("\n")
    if not header.startswith("# vocab_sha256\t"):
        raise ParseError("missing vocabulary checksum header", 1)
    if header.split("\t", 1)[1] != vocab.checksum():
        raise IntegrityError("class map was built from a different vocabulary")
    for line_no, line in enumerate(source, 2):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(f"expected 3 fields, got {len(parts)}", line_no)
        word, cls, lp = parts
        if word not in vocab:
            raise IntegrityError(f"word {word!r} not in vocabulary")
        wid = vocab.id_of[word]
        class_of[wid] = int(cls)
        logp[wid] = float(lp)
    class_counts: dict[int, int] = {}
    uni = {w: c for w, c in zip(range(len(vocab)), vocab.counts)}
    for w, cls in class_of.items():
        class_counts[cls] = class_counts.get(cls, 0) + uni.get(w, 0)
    return ClusterAssignment(
        num_classes=max(class_of.values()) + 1 if class_of else 1,
        class_of=class_of,
        class_cond_logp=logp,
        class_counts=class_counts,
    )
