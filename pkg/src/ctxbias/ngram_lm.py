"""Back-off n-gram language model with interpolated Witten-Bell smoothing.

All scores are natural-log probabilities internally; base-10 logs appear
only inside ARPA files.  Witten-Bell is used because it is parameter-free,
deterministic, and normalizes exactly: for every history h,
sum_w P(w|h) = 1 up to float rounding, which the test suite relies on.

The model predicts over vocabulary words + unk + </s>.  <s> appears only
as history; its unigram entry carries a dummy log-probability plus a real
back-off weight, as is conventional for ARPA files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

from ctxbias.corpus import BOS, EOS, UNK, NgramCounts, Vocabulary
from ctxbias.errors import ConfigError, ParseError

LN10 = math.log(10.0)
# Conventional "effectively impossible" unigram for <s> (log10 domain).
BOS_LOG10_DUMMY = -99.0


@dataclass(frozen=True)
class TrainConfig:
    order: int = 4

    def __post_init__(self):
        if not 1 <= self.order <= 5:
            raise ConfigError(f"order must be in 1..5, got {self.order}")


@dataclass(frozen=True)
class NgramModel:
    """Immutable back-off model; score() is pure and thread-safe."""

    order: int
    vocab: Vocabulary
    logp: dict[tuple[int, ...], float] = field(repr=False)
    bow: dict[tuple[int, ...], float] = field(repr=False)

    def score(self, history: Sequence[int], word: int) -> float:
        """Natural-log P(word | history) via standard back-off recursion."""
        h = tuple(history)
        if self.order > 1:
            h = h[-(self.order - 1):]
        else:
            h = ()
        acc = 0.0
        while True:
            gram = h + (word,)
            lp = self.logp.get(gram)
            if lp is not None:
                return acc + lp
            if not h:
                raise KeyError(
                    f"no unigram entry for id {word}; map OOV words to unk first"
                )
            acc += self.bow.get(h, 0.0)
            h = h[1:]

    def score_words(self, history: Sequence[str], word: str) -> float:
        v = self.vocab
        return self.score([v.get(w) for w in history], v.get(word))

    def predicted_ids(self) -> list[int]:
        """ids the model distributes probability over (words, unk, </s>)."""
        v = self.vocab
        return list(range(len(v))) + [v.unk_id, v.eos_id]


def train_lm(
    counts: NgramCounts, vocab: Vocabulary, config: TrainConfig = TrainConfig()
) -> NgramModel:
    """Interpolated Witten-Bell model, emitted in back-off form.

    For a history h with continuation total c(h) and T(h) distinct
    continuation types:

        P(w|h)  = (c(hw) + T(h) * P(w|h')) / (c(h) + T(h))   for seen hw
        bow(h)  = T(h) / (c(h) + T(h))

    which makes every conditional distribution sum to one exactly.  The
    unigram base case interpolates with the uniform distribution so that
    zero-count entries (typically unk) still get mass.
    """
    if not counts.counts:
        raise ConfigError("cannot train on empty counts")
    if counts.order != config.order:
        raise ConfigError(
            f"counts.order={counts.order} does not match config.order={config.order}"
        )
    order = config.order
    by_order: list[dict[tuple[int, ...], int]] = [dict() for _ in range(order + 1)]
    for gram, c in counts.counts.items():
        by_order[len(gram)][gram] = c

    predict = list(range(len(vocab))) + [vocab.unk_id, vocab.eos_id]
    logp: dict[tuple[int, ...], float] = {}
    bow: dict[tuple[int, ...], float] = {}

    # Unigrams: interpolate MLE with uniform over the predict set.
    uni = by_order[1]
    n_total = sum(c for (w,), c in uni.items() if w != vocab.bos_id)
    t0 = sum(1 for (w,), c in uni.items() if w != vocab.bos_id and c > 0)
    u = 1.0 / len(predict)
    denom = n_total + t0
    for w in predict:
        c = uni.get((w,), 0)
        logp[(w,)] = math.log((c + t0 * u) / denom)
    logp[(vocab.bos_id,)] = BOS_LOG10_DUMMY * LN10

    model = NgramModel(order=order, vocab=vocab, logp=logp, bow=bow)
    for k in range(2, order + 1):
        by_hist: dict[tuple[int, ...], list[tuple[int, int]]] = {}
        for gram, c in by_order[k].items():
            by_hist.setdefault(gram[:-1], []).append((gram[-1], c))
        for h, conts in by_hist.items():
            ch = sum(c for _, c in conts)
            th = len(conts)
            d = ch + th
            for w, c in conts:
                p_lower = math.exp(model.score(h[1:], w))
                logp[h + (w,)] = math.log((c + th * p_lower) / d)
            bow[h] = math.log(th / d)
    return model


def sequence_logprob(model: NgramModel, tokens: Sequence[str]) -> float:
    """Sum of per-token scores for a sentence, including the </s> step."""
    v = model.vocab
    ids = [v.get(w) for w in tokens]
    hist = [v.bos_id]
    total = 0.0
    for wid in ids + [v.eos_id]:
        total += model.score(hist, wid)
        hist.append(wid)
    return total


def write_arpa(model: NgramModel, sink: TextIO) -> None:
    """Standard ARPA format; log10 scores at the file boundary."""
    v = model.vocab
    by_order: list[list[tuple[tuple[int, ...], float]]] = [
        [] for _ in range(model.order + 1)
    ]
    for gram, lp in model.logp.items():
        by_order[len(gram)].append((gram, lp))
    sink.write("\\data\\\n")
    for k in range(1, model.order + 1):
        sink.write(f"ngram {k}={len(by_order[k])}\n")
    for k in range(1, model.order + 1):
        sink.write(f"\n\\{k}-grams:\n")
        entries = sorted(by_order[k], key=lambda e: tuple(v.token(i) for i in e[0]))
        for gram, lp in entries:
            words = " ".join(v.token(i) for i in gram)
            line = f"{lp / LN10:.7f}\t{words}"
            bw = model.bow.get(gram)
            if bw is not None:
                line += f"\t{bw / LN10:.7f}"
            sink.write(line + "\n")
    sink.write("\n\\end\\\n")


def read_arpa(source: TextIO, vocab: Vocabulary | None = None) -> NgramModel:
    """Parse an ARPA file; raises ParseError with a line number on bad input.

    When `vocab` is omitted, a vocabulary is synthesized from the unigram
    section (word ids in file order); scores are identical either way.
    """
    lines = enumerate(source, 1)
    counts_by_order: dict[int, int] = {}
    # --- header ---
    for line_no, raw in lines:
        line = raw.strip()
        if not line:
            continue
        if line == "\\data\\":
            break
    else:
        raise ParseError("missing \\data\\ section")
    for line_no, raw in lines:
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\") and line.endswith("-grams:"):
            first_section = line
            break
        if not line.startswith("ngram "):
            raise ParseError(f"expected 'ngram N=count', got {line!r}", line_no)
        try:
            k_str, n_str = line[len("ngram "):].split("=")
            k, n = int(k_str), int(n_str)
        except ValueError:
            raise ParseError(f"malformed ngram header {line!r}", line_no) from None
        if n < 0:
            raise ParseError(f"negative n-gram count in header: {line!r}", line_no)
        counts_by_order[k] = n
    else:
        raise ParseError("no n-gram sections found")
    if not counts_by_order:
        raise ParseError("empty \\data\\ section")
    order = max(counts_by_order)

    str_logp: dict[tuple[str, ...], float] = {}
    str_bow: dict[tuple[str, ...], float] = {}
    section = first_section
    current_k = _section_order(section, 0)
    done = False
    for line_no, raw in lines:
        line = raw.rstrip("\n")
        stripped = line.strip()
        if not stripped:
            continue
        if stripped == "\\end\\":
            done = True
            break
        if stripped.startswith("\\") and stripped.endswith("-grams:"):
            current_k = _section_order(stripped, line_no)
            continue
        parts = stripped.split()
        if len(parts) not in (current_k + 1, current_k + 2):
            raise ParseError(
                f"expected {current_k}-gram entry, got {stripped!r}", line_no
            )
        try:
            lp = float(parts[0]) * LN10
        except ValueError:
            raise ParseError(f"bad log-probability {parts[0]!r}", line_no) from None
        gram = tuple(parts[1 : 1 + current_k])
        str_logp[gram] = lp
        if len(parts) == current_k + 2:
            try:
                str_bow[gram] = float(parts[-1]) * LN10
            except ValueError:
                raise ParseError(f"bad back-off weight {parts[-1]!r}", line_no) from None
    if not done:
        raise ParseError("missing \\end\\")

    if vocab is None:
        words = tuple(
            w
            for (gram, _) in sorted(str_logp.items())
            if len(gram) == 1 and (w := gram[0]) not in (BOS, EOS, UNK)
        )
        vocab = Vocabulary(
            words=words,
            counts=(0,) * len(words),
            max_size=len(words),
            id_of={w: i for i, w in enumerate(words)},
        )
    else:
        from ctxbias.errors import IntegrityError

        for gram in str_logp:
            if len(gram) == 1 and gram[0] not in (BOS, EOS, UNK) and gram[0] not in vocab:
                raise IntegrityError(
                    f"ARPA unigram {gram[0]!r} not in the supplied vocabulary"
                )
    logp = {tuple(vocab.get(w) for w in g): lp for g, lp in str_logp.items()}
    bow = {tuple(vocab.get(w) for w in g): bw for g, bw in str_bow.items()}
    return NgramModel(order=order, vocab=vocab, logp=logp, bow=bow)


def _section_order(line: str, line_no: int) -> int:
    try:
        return int(line[1:].split("-")[0])
    except ValueError:
        raise ParseError(f"malformed section header {line!r}", line_no) from None
