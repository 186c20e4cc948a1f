"""Templated instruction synthesis from relation triplets.

Instructions are rendered from a closed template table (4 sentence frames
per predicate), so the whole corpus tokenizes against a fixed whitespace
word vocabulary. Sampling keeps at most one member of each symmetric pair,
orders triplets so consecutive sentences reuse a mentioned category when
possible, and switches "the" to "another" when a second distinct instance
of an already-mentioned category is introduced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .relations import RelationPredicate, RelationTriplet, extract_triplets
from .scene import SceneLayout

MAX_RELATIONS = 4
MAX_TOKENS = 77

PREDICATE_PHRASES: dict[RelationPredicate, str] = {
    RelationPredicate.RIGHT_OF: "to the right of",
    RelationPredicate.IN_FRONT_OF: "in front of",
    RelationPredicate.LEFT_OF: "to the left of",
    RelationPredicate.BEHIND: "behind",
    RelationPredicate.CLOSELY_RIGHT_OF: "closely to the right of",
    RelationPredicate.CLOSELY_IN_FRONT_OF: "closely in front of",
    RelationPredicate.CLOSELY_LEFT_OF: "closely to the left of",
    RelationPredicate.CLOSELY_BEHIND: "closely behind",
    RelationPredicate.ABOVE: "above",
    RelationPredicate.BELOW: "below",
}

# {s}/{o} expand to an article plus the category word; {p} to the phrase above.
SENTENCE_FRAMES = (
    "place {s} {p} {o}",
    "put {s} {p} {o}",
    "{s} goes {p} {o}",
    "keep {s} {p} {o}",
)

CONNECTOR = "and"

PAD_WORD = "<pad>"


def template_table() -> dict[RelationPredicate, tuple[str, ...]]:
    """Four rendered sentence frames per predicate."""
    return {
        pred: tuple(frame.replace("{p}", phrase) for frame in SENTENCE_FRAMES)
        for pred, phrase in PREDICATE_PHRASES.items()
    }


def build_word_vocab(categories: list[str]) -> dict[str, int]:
    """Closed word-to-id table: pad, function words, categories, phrases."""
    words = {PAD_WORD}
    words.update(CONNECTOR.split())
    words.update(("the", "another"))
    for cat in categories:
        words.update(cat.split())
    for frames in template_table().values():
        for frame in frames:
            for w in frame.split():
                if w not in ("{s}", "{o}"):
                    words.add(w)
    ordered = [PAD_WORD] + sorted(w for w in words if w != PAD_WORD)
    return {w: i for i, w in enumerate(ordered)}


def tokenize_text(text: str, word_to_id: dict[str, int]) -> list[int]:
    return [word_to_id[w] for w in text.split()]


@dataclass
class Instruction:
    """Rendered instruction text plus the triplet set it encodes."""

    text: str
    tokens: list[int]
    triplets: list[RelationTriplet]
    scene_id: str = ""

    def to_json(self) -> dict:
        return {
            "text": self.text,
            "tokens": self.tokens,
            "triplets": [[t.subject, t.predicate.value, t.object, t.subject_instance, t.object_instance] for t in self.triplets],
            "scene_id": self.scene_id,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Instruction":
        triplets = [
            RelationTriplet(s, RelationPredicate(p), o, si, oi) for s, p, o, si, oi in doc["triplets"]
        ]
        return cls(text=doc["text"], tokens=list(doc["tokens"]), triplets=triplets, scene_id=doc["scene_id"])


def _dedupe_symmetric(triplets: list[RelationTriplet], rng: np.random.Generator) -> list[RelationTriplet]:
    """Keep one triplet per unordered instance pair, random orientation."""
    groups: dict[tuple[int, int], list[RelationTriplet]] = {}
    for t in triplets:
        key = (min(t.subject_instance, t.object_instance), max(t.subject_instance, t.object_instance))
        groups.setdefault(key, []).append(t)
    kept = []
    for key in sorted(groups):
        members = groups[key]
        kept.append(members[int(rng.integers(len(members)))])
    return kept


def _discourse_order(triplets: list[RelationTriplet]) -> list[RelationTriplet]:
    """Greedy reorder so each sentence reuses a mentioned category if it can."""
    remaining = list(triplets)
    ordered = [remaining.pop(0)]
    mentioned = {ordered[0].subject, ordered[0].object}
    while remaining:
        idx = next((i for i, t in enumerate(remaining) if t.subject in mentioned or t.object in mentioned), 0)
        nxt = remaining.pop(idx)
        ordered.append(nxt)
        mentioned.update((nxt.subject, nxt.object))
    return ordered


def _referring_expressions(ordered: list[RelationTriplet]) -> list[tuple[str, str]]:
    """Choose "the"/"another" per mention, tracking introduced instances."""
    introduced: dict[str, list[int]] = {}
    arts = []
    for t in ordered:
        pair = []
        for cat, inst in ((t.subject, t.subject_instance), (t.object, t.object_instance)):
            seen = introduced.setdefault(cat, [])
            if inst in seen:
                pair.append("the")
            elif not seen:
                pair.append("the")
                seen.append(inst)
            else:
                pair.append("another")
                seen.append(inst)
        arts.append(tuple(pair))
    return arts


def synthesize_instruction(
    scene: SceneLayout,
    k: int,
    rng: np.random.Generator,
    scene_id: str = "",
    triplets: list[RelationTriplet] | None = None,
    word_to_id: dict[str, int] | None = None,
) -> Instruction:
    """Sample up to k relations from the scene and render them as text.

    Fewer than k usable (symmetric-deduped) triplets yields all of them;
    the returned instruction records the actual count via its triplet list.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if triplets is None:
        triplets = extract_triplets(scene)
    if not triplets:
        raise ValueError("scene has no relation triplets to describe")
    usable = _dedupe_symmetric(triplets, rng)
    count = min(k, len(usable))
    chosen_idx = rng.choice(len(usable), size=count, replace=False)
    chosen = _discourse_order([usable[int(i)] for i in sorted(chosen_idx)])
    articles = _referring_expressions(chosen)
    frames = template_table()
    sentences = []
    for t, (art_s, art_o) in zip(chosen, articles):
        frame = frames[t.predicate][int(rng.integers(len(SENTENCE_FRAMES)))]
        sentences.append(frame.replace("{s}", f"{art_s} {t.subject}").replace("{o}", f"{art_o} {t.object}"))
    text = f" {CONNECTOR} ".join(sentences)
    tokens = tokenize_text(text, word_to_id) if word_to_id is not None else []
    if len(tokens) > MAX_TOKENS:
        raise ValueError(f"instruction tokenizes to {len(tokens)} > {MAX_TOKENS} words")
    return Instruction(text=text, tokens=tokens, triplets=chosen, scene_id=scene_id)
