"""
Context-aware persona retrieval.

A coarse visual context is matched against the scenario-object bank by
embedding similarity; the majority scenario among the top-k entries selects
the persona group handed to the reasoner.
"""
import logging
import random
from collections import Counter, defaultdict
from math import sqrt
from pathlib import Path
from typing import Dict, Hashable, Iterable, List, Mapping, Optional, Protocol, Sequence, Tuple

from .schemas import DEFAULT_SCENARIOS, BankEntry, CoarseVisualContext, Persona

logger = logging.getLogger(__name__)

# Sparse vector; dense backends use integer keys.
Embedding = Mapping[Hashable, float]


class RetrievalError(ValueError):
    """Raised for invalid banks, persona files or retrieval inputs."""


class Embedder(Protocol):
    """Text to unit-norm vector. Empty text embeds to the zero vector."""

    def embed(self, text: str) -> Embedding:
        ...


class BagOfWordsEmbedder:
    """Deterministic test embedder: L2-normalized counts of lowercased whitespace tokens."""

    def embed(self, text: str) -> Embedding:
        counts = Counter(text.lower().split())
        norm = sqrt(sum(c * c for c in counts.values()))
        if norm == 0:
            return {}
        return {token: count / norm for token, count in counts.items()}


def cosine_similarity(a: Embedding, b: Embedding) -> float:
    """Cosine of two sparse vectors; 0.0 when either is the zero vector."""
    if not a or not b:
        return 0.0
    if len(a) > len(b):
        a, b = b, a
    dot = sum(value * b.get(key, 0.0) for key, value in a.items())
    norm_a = sqrt(sum(v * v for v in a.values()))
    norm_b = sqrt(sum(v * v for v in b.values()))
    if norm_a == 0 or norm_b == 0:
        return 0.0
    return max(-1.0, min(1.0, dot / (norm_a * norm_b)))


def object_set_to_text(objects: Iterable[str]) -> str:
    """Canonical embedder input for an object set: sorted labels, single spaces."""
    return " ".join(sorted(set(objects)))


def _vote(ranked: Sequence[Tuple[int, float, str]]) -> str:
    """Most frequent scenario; ties by higher mean similarity, then scenario name."""
    counts: Counter = Counter()
    sims: Dict[str, float] = defaultdict(float)
    for _, sim, scenario in ranked:
        counts[scenario] += 1
        sims[scenario] += sim
    return min(counts, key=lambda s: (-counts[s], -(sims[s] / counts[s]), s))


def predict_scenario(
    c: CoarseVisualContext,
    bank: Sequence[BankEntry],
    k: int,
    embedder: Embedder,
    fallback: str = "others",
    bank_embeddings: Optional[Sequence[Embedding]] = None,
) -> str:
    """
    Predict the scenario of a coarse visual context.

    Args:
        c: Coarse visual context
        bank: Scenario-object bank entries
        k: Number of most similar entries taking part in the vote
        embedder: Embedding backend
        fallback: Scenario returned for an empty object set
        bank_embeddings: Precomputed embeddings of the bank entries, in order

    Returns:
        Majority scenario among the min(k, |bank|) most similar entries
    """
    if not bank:
        raise RetrievalError("empty bank")
    if k <= 0:
        raise RetrievalError("k must be positive")
    if not c.objects:
        return fallback

    query = embedder.embed(object_set_to_text(c.objects))
    if bank_embeddings is None:
        bank_embeddings = [embedder.embed(object_set_to_text(entry.objects)) for entry in bank]

    scored = [
        (index, cosine_similarity(query, emb), entry.scenario)
        for index, (entry, emb) in enumerate(zip(bank, bank_embeddings))
    ]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return _vote(scored[: min(k, len(bank))])


class ScenarioObjectBank:
    """Bank entries with their embeddings computed once at load."""

    def __init__(self, entries: Sequence[BankEntry], embedder: Embedder):
        if not entries:
            raise RetrievalError("empty bank")
        self.entries = list(entries)
        self.embedder = embedder
        self.embeddings = [embedder.embed(object_set_to_text(e.objects)) for e in self.entries]

    def predict(self, c: CoarseVisualContext, k: int, fallback: str = "others") -> str:
        return predict_scenario(c, self.entries, k, self.embedder, fallback, self.embeddings)


def _read_jsonl(path: Path) -> List[str]:
    with open(path, "r", encoding="utf-8") as f:
        return [line for line in f if line.strip()]


def load_bank(path: Path, scenarios: Sequence[str] = DEFAULT_SCENARIOS) -> List[BankEntry]:
    """Load bank entries, rejecting unknown scenarios and empty object sets."""
    entries = []
    for line_no, line in enumerate(_read_jsonl(path), start=1):
        entry = BankEntry.model_validate_json(line)
        if entry.scenario not in scenarios:
            raise RetrievalError(f"{path}:{line_no}: unknown scenario '{entry.scenario}'")
        entries.append(entry)
    logger.debug("Loaded %d bank entries from %s", len(entries), path)
    return entries


class PersonaStore:
    """Personas grouped by scenario (the scenario-indexed persona database)."""

    def __init__(self, personas: Iterable[Persona] = ()):
        self.by_scenario: Dict[str, List[Persona]] = {}
        self._ids = set()
        for persona in personas:
            self.add(persona)

    def add(self, persona: Persona) -> None:
        if persona.id in self._ids:
            raise RetrievalError(f"duplicate persona id '{persona.id}'")
        self._ids.add(persona.id)
        self.by_scenario.setdefault(persona.scenario, []).append(persona)

    def all_personas(self) -> List[Persona]:
        return [p for group in self.by_scenario.values() for p in group]

    def __len__(self) -> int:
        return len(self._ids)


def load_persona_store(path: Path, scenarios: Sequence[str] = DEFAULT_SCENARIOS) -> PersonaStore:
    """Load a persona file whose records carry their scenario label."""
    store = PersonaStore()
    for line_no, line in enumerate(_read_jsonl(path), start=1):
        persona = Persona.model_validate_json(line)
        if persona.scenario not in scenarios:
            raise RetrievalError(f"{path}:{line_no}: unknown scenario '{persona.scenario}'")
        store.add(persona)
    logger.debug("Loaded %d personas from %s", len(store), path)
    return store


def retrieve_personas(scenario: str, store: PersonaStore) -> List[Persona]:
    """The scenario's persona group in stored order; empty for unknown groups."""
    return list(store.by_scenario.get(scenario, []))


def personas_text_length(personas: Sequence[Persona]) -> int:
    """Total persona text length, the reasoner input the retrieval saves."""
    return sum(len(p.text) for p in personas)


def select_personas(
    mode: str,
    scenario: str,
    store: PersonaStore,
    rng: Optional[random.Random] = None,
) -> List[Persona]:
    """
    Personas for one invocation under a retrieval mode.

    adaptive: the predicted scenario's group; all: every persona;
    random: a random subset the size of the adaptive group; none: nothing.
    """
    if mode == "adaptive":
        return retrieve_personas(scenario, store)
    if mode == "all":
        return store.all_personas()
    if mode == "none":
        return []
    if mode == "random":
        size = len(retrieve_personas(scenario, store))
        pool = store.all_personas()
        return (rng or random.Random(0)).sample(pool, min(size, len(pool)))
    raise RetrievalError(f"unknown persona mode '{mode}'")
