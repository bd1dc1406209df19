"""
Temporal constraint on delivery: proactive outputs that are semantically close
to recently delivered assistance are suppressed.
"""
import logging
from typing import List, Sequence

from .personas import Embedder, cosine_similarity
from .schemas import DeliveryRecord

logger = logging.getLogger(__name__)


def gate(
    candidate: str,
    history: Sequence[DeliveryRecord],
    now: float,
    sim_threshold: float,
    window_s: float,
    embedder: Embedder,
    mode: str = "window",
) -> DeliveryRecord:
    """
    Decide whether a candidate assistance reaches the user.

    Args:
        candidate: Assistance text
        history: Earlier delivery records, oldest first
        now: Current trace time
        sim_threshold: Deliver only while the similarity stays below this value
        window_s: How far back delivered records are compared
        embedder: Text embedder
        mode: "window" compares with every delivery in the window,
            "consecutive" only with the latest delivery

    Returns:
        DeliveryRecord for the candidate
    """
    if not candidate.strip():
        return DeliveryRecord(t=now, assistance=candidate, delivered=False, suppressed_reason="empty assistance")

    recent = [r for r in history if r.delivered and now - r.t <= window_s]
    if mode == "consecutive":
        recent = recent[-1:]
    elif mode != "window":
        raise ValueError(f"unknown delivery mode '{mode}'")
    if not recent:
        return DeliveryRecord(t=now, assistance=candidate, delivered=True)

    query = embedder.embed(candidate)
    similarity = max(cosine_similarity(query, embedder.embed(r.assistance)) for r in recent)
    similarity = min(1.0, max(0.0, similarity))
    if similarity < sim_threshold:
        return DeliveryRecord(t=now, assistance=candidate, delivered=True, similarity_to_prev=similarity)

    logger.info("Suppressed assistance at t=%g (similarity %.2f)", now, similarity)
    return DeliveryRecord(
        t=now,
        assistance=candidate,
        delivered=False,
        similarity_to_prev=similarity,
        suppressed_reason=f"similar to recent delivery ({similarity:.2f} >= {sim_threshold:g})",
    )


class DeliveryGate:
    """Owns the delivery history of one replay."""

    def __init__(self, embedder: Embedder, sim_threshold: float = 0.5, window_s: float = 300.0,
                 mode: str = "window"):
        self.embedder = embedder
        self.sim_threshold = sim_threshold
        self.window_s = window_s
        self.mode = mode
        self.history: List[DeliveryRecord] = []

    @classmethod
    def from_config(cls, delivery, embedder: Embedder) -> "DeliveryGate":
        return cls(embedder, delivery.sim_threshold, delivery.window_s, delivery.mode)

    def check(self, candidate: str, now: float) -> DeliveryRecord:
        """Gate a candidate without recording it."""
        return gate(candidate, self.history, now, self.sim_threshold, self.window_s, self.embedder, self.mode)

    def commit(self, record: DeliveryRecord) -> None:
        self.history.append(record)

