"""Deterministic synthetic desk corpus with an embedded entity lexicon.

Generates a templated training text plus test utterances whose errors are
controllable: rare entities are one-character mutations of common words,
so the acoustic proxy offers a plausible common-word confusion that the
baseline LM prefers and only a context boost can overturn.  Junk
singleton words are sprinkled in so the capped vocabulary maps a healthy
amount of training mass to unk, keeping OOV decoding plausible.

Everything is seeded; identical config yields identical bytes.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

FUNCTION_WORDS = {
    "the": 30, "to": 9, "a": 7, "in": 5, "of": 4, "on": 3, "at": 3,
    "for": 3, "and": 4, "is": 3, "was": 3, "with": 2, "my": 2, "me": 2,
    "we": 3, "i": 3, "you": 2, "near": 1, "from": 2, "this": 2,
    "that": 2, "now": 1, "please": 1, "there": 1, "had": 1, "have": 2,
}

VERBS = [
    "play", "call", "find", "show", "take", "visit", "drive", "book",
    "open", "start", "stop", "send", "read", "watch", "meet", "join",
    "leave", "buy", "hear", "sing", "walk", "run", "check", "plan",
]

NOUNS = [
    "song", "game", "city", "road", "store", "house", "music", "movie",
    "team", "river", "park", "train", "hotel", "market", "garden",
    "bridge", "school", "office", "station", "castle", "harbor",
    "valley", "temple", "museum", "forest", "island", "palace", "tower",
    "village", "street", "corner", "ticket", "dinner", "coffee",
    "morning", "evening", "weekend", "meeting", "concert", "festival",
]

ADJS = [
    "new", "old", "big", "small", "red", "blue", "green", "long",
    "short", "early", "late", "quiet", "busy", "cold", "warm",
    "bright", "dark", "cheap", "grand", "local",
]

PLACE_SUFFIXES = ["hall", "inn", "bay", "fort", "court", "lodge"]

SYLLABLES = [
    "bar", "ton", "mel", "dor", "sa", "vin", "kel", "ra", "lu", "gan",
    "or", "ta", "mi", "bel", "cor", "dan", "fal", "gre", "hol", "jin",
    "nor", "pel", "qua", "ris", "sol", "tam", "ul", "ver", "wen", "zor",
]

TEMPLATES = [
    "the {noun} near the {noun} was {adj}",
    "we {verb} to the {noun} in the {noun}",
    "please {verb} the {noun} for me",
    "i {verb} a {adj} {noun} at the {noun}",
    "the {adj} {noun} of the {noun} was {adj}",
    "you have to {verb} the {adj} {noun} now",
    "we {verb} and {verb} at the {noun}",
    "there was a {adj} {noun} on the {noun}",
    "i was at the {noun} with my {noun}",
    "the {noun} is {adj} and the {noun} is {adj}",
]

ENTITY_TEMPLATES = [
    "we {verb} to {entity} in the {noun}",
    "please {verb} {entity} for me",
    "i {verb} {entity} at the {noun}",
    "{entity} is a {adj} {noun}",
    "call {entity} and {verb} the {noun}",
    "the {noun} near {entity} was {adj}",
    "we visit {entity} this {noun}",
    "play {entity} on the {noun} now",
]


@dataclass(frozen=True)
class DeskCorpusConfig:
    train_sentences: int = 50_000
    test_utterances: int = 500
    seed: int = 7
    num_common_entities: int = 40
    num_rare_entities: int = 450
    num_oov_entities: int = 40
    num_phrases: int = 30
    num_junk_words: int = 300
    rare_occurrences: int = 3
    phrase_occurrences: int = 3


@dataclass(frozen=True)
class DeskCorpus:
    train_lines: tuple[str, ...]
    test_refs: tuple[tuple[str, ...], ...]
    vocab_size: int
    common_entities: tuple[str, ...]
    rare_entities: tuple[str, ...]
    oov_entities: tuple[str, ...]
    phrases: tuple[tuple[str, ...], ...] = field(default=())


def _pseudo_word(rng: random.Random, taken: set[str]) -> str:
    while True:
        w = "".join(rng.choice(SYLLABLES) for _ in range(rng.choice((2, 2, 3))))
        if w not in taken and len(w) >= 5:
            taken.add(w)
            return w


def _mutate(base: str, rng: random.Random, taken: set[str]) -> str:
    """One-character substitution of a known word, avoiding collisions."""
    letters = "abcdefghijklmnopqrstuvwxyz"
    for _ in range(200):
        i = rng.randrange(len(base))
        c = rng.choice(letters)
        w = base[:i] + c + base[i + 1:]
        if w != base and w not in taken:
            taken.add(w)
            return w
    return _pseudo_word(rng, taken)


def _weighted(rng: random.Random, table: dict[str, int]) -> str:
    words = list(table)
    weights = list(table.values())
    return rng.choices(words, weights=weights, k=1)[0]


def _fill(template: str, rng: random.Random, entity: str | None = None) -> str:
    out = []
    for tok in template.split():
        if tok == "{noun}":
            out.append(rng.choice(NOUNS))
        elif tok == "{verb}":
            out.append(rng.choice(VERBS))
        elif tok == "{adj}":
            out.append(rng.choice(ADJS))
        elif tok == "{entity}":
            out.append(entity if entity is not None else "")
        else:
            out.append(tok)
    return " ".join(w for w in out if w)


def generate_desk_corpus(cfg: DeskCorpusConfig = DeskCorpusConfig()) -> DeskCorpus:
    rng = random.Random(cfg.seed)
    taken: set[str] = set(FUNCTION_WORDS) | set(VERBS) | set(NOUNS) | set(ADJS)
    taken |= set(PLACE_SUFFIXES)

    common_entities = tuple(
        _pseudo_word(rng, taken) for _ in range(cfg.num_common_entities)
    )
    mutation_bases = NOUNS + VERBS + list(common_entities)
    rare_entities = tuple(
        _mutate(rng.choice(mutation_bases), rng, taken)
        for _ in range(cfg.num_rare_entities)
    )
    oov_entities = tuple(
        _mutate(rng.choice(mutation_bases), rng, taken)
        for _ in range(cfg.num_oov_entities)
    )
    # Multi-word entities: leading in-vocab word, middle rare-or-OOV word,
    # optional suffix noun.  The first half are fully trainable (rare),
    # the second half carry an OOV constituent.
    phrases: list[tuple[str, ...]] = []
    for k in range(cfg.num_phrases):
        head = rng.choice(list(common_entities) + ADJS)
        if k < cfg.num_phrases // 2:
            mid = _mutate(rng.choice(mutation_bases), rng, taken)
        else:
            mid = _pseudo_word(rng, taken)  # never trained: OOV constituent
        parts = [head, mid]
        if rng.random() < 0.5:
            parts.append(rng.choice(PLACE_SUFFIXES))
        phrases.append(tuple(parts))
    junk = [_pseudo_word(rng, taken) for _ in range(cfg.num_junk_words)]

    lines: list[str] = []
    for _ in range(cfg.train_sentences):
        if rng.random() < 0.25:
            entity = rng.choice(common_entities)
            tpl = rng.choice(ENTITY_TEMPLATES)
            lines.append(_fill(tpl, rng, entity))
        else:
            lines.append(_fill(rng.choice(TEMPLATES), rng))
    # Controlled rare-entity exposure.
    for ent in rare_entities:
        for _ in range(cfg.rare_occurrences):
            lines.append(_fill(rng.choice(ENTITY_TEMPLATES), rng, ent))
    # Trainable multi-word entities appear as a unit.
    for phrase in phrases[: cfg.num_phrases // 2]:
        for _ in range(cfg.phrase_occurrences):
            lines.append(_fill(rng.choice(ENTITY_TEMPLATES), rng, " ".join(phrase)))
    # Junk singletons supply unk mass once the vocabulary is capped.
    for w in junk:
        lines.append(_fill(rng.choice(ENTITY_TEMPLATES), rng, w))
    rng.shuffle(lines)

    # Cap the vocabulary at "count >= 2": every junk word maps to unk.
    from collections import Counter

    freq = Counter(tok for line in lines for tok in line.split())
    vocab_size = sum(1 for c in freq.values() if c >= 2)

    # Test set: a controlled mix of plain, rare-entity, OOV-entity, and
    # phrase-entity utterances.
    trng = random.Random(cfg.seed + 1)
    test_refs: list[tuple[str, ...]] = []
    for _ in range(cfg.test_utterances):
        draw = trng.random()
        if draw < 0.40:
            line = _fill(trng.choice(TEMPLATES), trng)
        elif draw < 0.62:
            line = _fill(trng.choice(ENTITY_TEMPLATES), trng, trng.choice(rare_entities))
        elif draw < 0.80:
            line = _fill(trng.choice(ENTITY_TEMPLATES), trng, trng.choice(oov_entities))
        elif draw < 0.92:
            line = _fill(
                trng.choice(ENTITY_TEMPLATES), trng, " ".join(trng.choice(phrases))
            )
        else:
            line = _fill(trng.choice(ENTITY_TEMPLATES), trng, trng.choice(common_entities))
        test_refs.append(tuple(line.split()))

    return DeskCorpus(
        train_lines=tuple(lines),
        test_refs=tuple(test_refs),
        vocab_size=vocab_size,
        common_entities=common_entities,
        rare_entities=rare_entities,
        oov_entities=oov_entities,
        phrases=tuple(phrases),
    )


def rare_rank_for(counts: tuple[int, ...], max_count: int = 5) -> int | None:
    """First vocabulary id whose training count is at or below `max_count`;
    every later id counts as rare for the truth-drop rule."""
    for i, c in enumerate(counts):
        if c <= max_count:
            return i
    return None
