"""Synthetic acoustic channel and beam decoding over confusion lattices.

The acoustic model is replaced by a deterministic proxy: each reference
word becomes a lattice slot whose candidates are the reference word itself
(unless the truth-drop rule removes it) plus the K nearest vocabulary
words by character edit distance, scored -gamma * distance.  A seeded
hash drives the truth-drop decisions so a fixed (reference, vocabulary,
noise config) always produces byte-identical lattices.

Context phrases enter the lattice as spanning arcs; single OOV context
words are injected into near-matching slots.  Decoding is a left-to-right
beam search over acoustic + LM + bias score with duplicate-transcription
beams deduplicated (keep max), which realizes the exact-match semantics
of expansion-scheme phrase tokens without failure arcs.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Iterable, Sequence, TextIO

from ctxbias.bias import EXPANSION, PHRASE_JOIN, BiasConfig, BiasTable, ContextSet, bias_score
from ctxbias.corpus import UNK, Vocabulary
from ctxbias.errors import ConfigError, ParseError
from ctxbias.ngram_lm import NgramModel


@dataclass(frozen=True)
class NoiseConfig:
    """Synthetic channel parameters.

    `rare_rank`: vocabulary ids at or past this rank count as rare and are
    subject to truth-drop; OOV reference words are always eligible.  None
    means only OOV words are eligible.
    """

    confusers: int = 4
    gamma: float = 2.0
    truth_drop: float = 0.3
    d_max: int = 2
    seed: int = 0
    rare_rank: int | None = None


@dataclass(frozen=True)
class Arc:
    """Context token spanning `length` consecutive slots from `start`."""

    start: int
    length: int
    token: str
    score: float


@dataclass(frozen=True)
class ConfusionLattice:
    reference: tuple[str, ...]
    slots: tuple[tuple[tuple[str, float], ...], ...]
    noise: NoiseConfig = NoiseConfig()
    arcs: tuple[Arc, ...] = ()

    def total_paths(self) -> int:
        n = 1
        for slot in self.slots:
            n *= len(slot)
        return n


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[str, ...]
    total_score: float
    trace: tuple[tuple[str, float, float, float], ...] = ()


@lru_cache(maxsize=1 << 20)
def edit_distance(a: str, b: str) -> int:
    """Character-level Levenshtein distance."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


_NEAREST_CACHE: dict[tuple[str, str, int], tuple[tuple[int, int], ...]] = {}


def _nearest_words(vocab: Vocabulary, ref: str, k: int) -> tuple[tuple[int, int], ...]:
    """K nearest vocabulary words (id, distance) to `ref`, excluding `ref`
    itself; ties break by word id."""
    key = (vocab.checksum(), ref, k)
    hit = _NEAREST_CACHE.get(key)
    if hit is not None:
        return hit
    scored = [
        (edit_distance(w, ref), i)
        for i, w in enumerate(vocab.words)
        if w != ref
    ]
    scored.sort()
    result = tuple((i, d) for d, i in scored[:k])
    _NEAREST_CACHE[key] = result
    return result


def _drop_truth(noise: NoiseConfig, slot_index: int, word: str, vocab: Vocabulary) -> bool:
    if noise.truth_drop <= 0.0:
        return False
    if word in vocab:
        if noise.rare_rank is None or vocab.id_of[word] < noise.rare_rank:
            return False
    digest = zlib.crc32(f"{noise.seed}|{slot_index}|{word}".encode("utf-8"))
    return (digest / 2**32) < noise.truth_drop


def make_lattice(
    reference: Sequence[str], vocab: Vocabulary, noise: NoiseConfig = NoiseConfig()
) -> ConfusionLattice:
    """One slot per reference word; deterministic for fixed inputs."""
    if not reference:
        raise ConfigError("reference must be non-empty")
    slots = []
    for i, ref in enumerate(reference):
        cands: dict[str, float] = {}
        if not _drop_truth(noise, i, ref, vocab):
            cands[ref] = 0.0
        for wid, dist in _nearest_words(vocab, ref, noise.confusers):
            w = vocab.words[wid]
            score = -noise.gamma * dist
            if w not in cands or score > cands[w]:
                cands[w] = max(cands.get(w, score), score)
        ordered = sorted(cands.items(), key=lambda kv: (-kv[1], kv[0]))
        slots.append(tuple(ordered))
    return ConfusionLattice(
        reference=tuple(reference), slots=tuple(slots), noise=noise
    )


def inject_context_arcs(lattice: ConfusionLattice, context: ContextSet) -> ConfusionLattice:
    """Add spanning arcs for context phrases and per-slot candidates for
    single OOV context words, wherever they near-match the reference."""
    noise = lattice.noise
    n = len(lattice.slots)
    arcs = list(lattice.arcs)
    for entry in context.phrase_entries:
        k = len(entry.words)
        for start in range(n - k + 1):
            dists = [
                edit_distance(w, lattice.reference[start + j])
                for j, w in enumerate(entry.words)
            ]
            if all(d <= noise.d_max for d in dists):
                arcs.append(
                    Arc(
                        start=start,
                        length=k,
                        token=entry.token,
                        score=-noise.gamma * sum(dists),
                    )
                )
    new_slots = list(lattice.slots)
    for word in sorted(context.oov_word_entries):
        for i, ref in enumerate(lattice.reference):
            d = edit_distance(word, ref)
            if d <= noise.d_max:
                cands = dict(new_slots[i])
                score = -noise.gamma * d
                if word not in cands or score > cands[word]:
                    cands[word] = score
                    new_slots[i] = tuple(
                        sorted(cands.items(), key=lambda kv: (-kv[1], kv[0]))
                    )
    return replace(lattice, slots=tuple(new_slots), arcs=tuple(arcs))


@dataclass(frozen=True)
class Step:
    """Score contribution of extending a beam by one lattice token.

    `detail` itemizes one (display, lm, bias) row per LM query, so traces
    of expansion-scheme phrases show the per-word boost increments.
    """

    lm: float
    bias: float
    out_words: tuple[str, ...]
    hist_words: tuple[str, ...]
    detail: tuple[tuple[str, float, float], ...] = ()


class Scorer:
    """Combined LM + bias scorer for lattice tokens.

    Pure and safe for concurrent read-only use; decoding distinct
    utterances with one Scorer instance is embarrassingly parallel.
    """

    def __init__(
        self,
        model: NgramModel,
        table: BiasTable,
        context: ContextSet,
        config: BiasConfig,
    ):
        self.model = model
        self.table = table
        self.context = context
        self.config = config

    def step(self, history: tuple[str, ...], token: str) -> Step:
        model, v = self.model, self.model.vocab
        hist_ids = [v.get(w) for w in history]
        if PHRASE_JOIN not in token:
            wid = v.id_of.get(token)
            bias_token: int | str = wid if wid is not None else token
            sb = bias_score(self.table, self.context, self.config, bias_token)
            lm = model.score(hist_ids, wid if wid is not None else v.unk_id)
            return Step(
                lm=lm, bias=sb, out_words=(token,), hist_words=(token,),
                detail=((token, lm, sb),),
            )
        entry = self.context.phrase_index.get(token)
        words = entry.words if entry is not None else tuple(token.split(PHRASE_JOIN))
        sb = bias_score(self.table, self.context, self.config, token)
        if self.context.scheme == EXPANSION:
            lm = 0.0
            ids = list(hist_ids)
            detail = []
            for w in words:
                tid = v.get(w)
                step_lm = model.score(ids, tid)
                wid = v.id_of.get(w)
                step_sb = (
                    self.config.lam * self.table.base_bias[wid]
                    if wid is not None
                    else self.config.alpha
                )
                detail.append((w, step_lm, step_sb))
                lm += step_lm
                ids.append(tid)
            return Step(
                lm=lm, bias=sb, out_words=words, hist_words=words,
                detail=tuple(detail),
            )
        lm = model.score(hist_ids, v.unk_id)
        return Step(
            lm=lm, bias=sb, out_words=words, hist_words=(UNK,),
            detail=((UNK, lm, sb),),
        )

    def end(self, history: tuple[str, ...]) -> float:
        v = self.model.vocab
        return self.model.score([v.get(w) for w in history], v.eos_id)


class PlainScorer:
    """LM-only scorer; the bias machinery is never touched."""

    def __init__(self, model: NgramModel):
        self.model = model

    def step(self, history: tuple[str, ...], token: str) -> Step:
        v = self.model.vocab
        hist_ids = [v.get(w) for w in history]
        if PHRASE_JOIN in token:
            words = tuple(token.split(PHRASE_JOIN))
            lm = 0.0
            ids = list(hist_ids)
            detail = []
            for w in words:
                tid = v.get(w)
                step_lm = self.model.score(ids, tid)
                detail.append((w, step_lm, 0.0))
                lm += step_lm
                ids.append(tid)
            return Step(
                lm=lm, bias=0.0, out_words=words, hist_words=words,
                detail=tuple(detail),
            )
        wid = v.id_of.get(token)
        lm = self.model.score(hist_ids, wid if wid is not None else v.unk_id)
        return Step(
            lm=lm, bias=0.0, out_words=(token,), hist_words=(token,),
            detail=((token, lm, 0.0),),
        )

    def end(self, history: tuple[str, ...]) -> float:
        v = self.model.vocab
        return self.model.score([v.get(w) for w in history], v.eos_id)


@dataclass(frozen=True)
class _Beam:
    surface: tuple[str, ...]
    hist: tuple[str, ...]
    score: float
    trace: tuple[tuple[str, float, float, float], ...]


def beam_decode(
    lattice: ConfusionLattice,
    scorer,
    beam_width: int = 8,
    keep_trace: bool = False,
) -> Hypothesis:
    """Left-to-right beam search maximizing acoustic + LM + bias.

    Beams with identical surface transcriptions are merged keeping the max
    score; score ties break toward the lexicographically smaller surface.
    The start/end markers are handled internally and never emitted.
    """
    if beam_width < 1:
        raise ConfigError(f"beam_width must be >= 1, got {beam_width}")
    n = len(lattice.slots)
    arcs_at: dict[int, list[Arc]] = {}
    for arc in lattice.arcs:
        arcs_at.setdefault(arc.start, []).append(arc)

    empty_trace: tuple = ()
    beams_at: list[dict[tuple[str, ...], _Beam]] = [dict() for _ in range(n + 1)]
    start = _Beam(surface=(), hist=("<s>",), score=0.0, trace=empty_trace)
    beams_at[0][()] = start

    def extend(beam: _Beam, token: str, acoustic: float, end_pos: int) -> None:
        step = scorer.step(beam.hist, token)
        score = beam.score + acoustic + step.lm + step.bias
        surface = beam.surface + step.out_words
        trace = beam.trace
        if keep_trace:
            rows = step.detail or ((token.replace(PHRASE_JOIN, " "), step.lm, step.bias),)
            trace = trace + tuple(
                (word, acoustic if i == 0 else 0.0, lm, sb)
                for i, (word, lm, sb) in enumerate(rows)
            )
        slot = beams_at[end_pos]
        old = slot.get(surface)
        if old is None or score > old.score:
            slot[surface] = _Beam(
                surface=surface,
                hist=beam.hist + step.hist_words,
                score=score,
                trace=trace,
            )

    for pos in range(n):
        beams = sorted(
            beams_at[pos].values(), key=lambda b: (-b.score, b.surface)
        )[:beam_width]
        for beam in beams:
            for token, acoustic in lattice.slots[pos]:
                extend(beam, token, acoustic, pos + 1)
            for arc in arcs_at.get(pos, ()):
                extend(beam, arc.token, arc.score, pos + arc.length)

    finals = []
    for beam in beams_at[n].values():
        eos = scorer.end(beam.hist)
        finals.append(
            _Beam(beam.surface, beam.hist, beam.score + eos, beam.trace)
        )
    if not finals:
        return Hypothesis(tokens=(), total_score=float("-inf"))
    best = min(finals, key=lambda b: (-b.score, b.surface))
    return Hypothesis(tokens=best.surface, total_score=best.score, trace=best.trace)


def write_lattices_jsonl(lattices: Iterable[ConfusionLattice], sink: TextIO) -> None:
    """One utterance per line: {"ref": [...], "slots": [[[token, score], ...], ...]}"""
    for lat in lattices:
        obj = {
            "ref": list(lat.reference),
            "slots": [[[t, s] for t, s in slot] for slot in lat.slots],
        }
        sink.write(json.dumps(obj, sort_keys=False) + "\n")


def read_lattices_jsonl(
    source: TextIO, noise: NoiseConfig = NoiseConfig()
) -> list[ConfusionLattice]:
    lattices = []
    for line_no, line in enumerate(source, 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            ref = tuple(obj["ref"])
            slots = tuple(
                tuple((str(t), float(s)) for t, s in slot) for slot in obj["slots"]
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise ParseError(f"malformed lattice line: {e}", line_no) from None
        lattices.append(ConfusionLattice(reference=ref, slots=slots, noise=noise))
    return lattices
