import random
from unittest.mock import Mock

import pytest

import sys
import os
sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from src.delivery import DeliveryGate, gate
from src.personas import BagOfWordsEmbedder
from src.schemas import DeliveryRecord

WORDS = ["rain", "train", "coffee", "meeting", "recipe", "price", "music", "weather", "bus", "egg"]


def _delivered(t, text):
    return DeliveryRecord(t=t, assistance=text, delivered=True)


class TestGate:
    """Test cases for the similarity gate."""

    def test_first_candidate_delivered(self):
        """With no history the candidate reaches the user."""
        record = gate("Rain at 3 pm.", [], 0.0, 0.5, 300, BagOfWordsEmbedder())

        assert record.delivered
        assert record.similarity_to_prev is None

    def test_identical_recent_candidate_suppressed(self):
        """Repeating a delivery from 10 s ago is suppressed with similarity 1."""
        record = gate("rain at 3 pm", [_delivered(0.0, "rain at 3 pm")], 10.0, 0.5, 300, BagOfWordsEmbedder())

        assert not record.delivered
        assert record.similarity_to_prev == pytest.approx(1.0)
        assert record.suppressed_reason.startswith("similar to recent delivery")

    def test_disjoint_candidate_delivered(self):
        """Zero token overlap gives similarity 0 and delivery."""
        record = gate("train delayed", [_delivered(0.0, "rain at noon")], 10.0, 0.5, 300, BagOfWordsEmbedder())

        assert record.delivered
        assert record.similarity_to_prev == 0.0

    def test_window_expiry(self):
        """Identical text older than the window is delivered again."""
        record = gate("rain at 3 pm", [_delivered(0.0, "rain at 3 pm")], 301.0, 0.5, 300, BagOfWordsEmbedder())

        assert record.delivered

    def test_suppressed_history_ignored(self):
        """Only delivered records count as recent deliveries."""
        suppressed = DeliveryRecord(t=0.0, assistance="rain", delivered=False, suppressed_reason="x")

        assert gate("rain", [suppressed], 1.0, 0.5, 300, BagOfWordsEmbedder()).delivered

    def test_empty_candidate_suppressed(self):
        """Empty assistance is never shown."""
        record = gate("   ", [], 0.0, 0.5, 300, BagOfWordsEmbedder())

        assert not record.delivered
        assert record.suppressed_reason == "empty assistance"

    def test_window_mode_catches_a_b_a(self):
        """Window mode suppresses A after A,B; consecutive mode lets it through."""
        history = [_delivered(0.0, "rain later today"), _delivered(10.0, "train in four minutes")]
        embedder = BagOfWordsEmbedder()

        assert not gate("rain later today", history, 20.0, 0.5, 300, embedder).delivered
        assert gate("rain later today", history, 20.0, 0.5, 300, embedder, mode="consecutive").delivered

    def test_unknown_mode(self):
        """Unknown comparison modes are rejected."""
        with pytest.raises(ValueError):
            gate("x", [_delivered(0.0, "y")], 1.0, 0.5, 300, BagOfWordsEmbedder(), mode="pairwise")

    def test_threshold_monotonic(self):
        """Raising the threshold never turns a delivery into a suppression."""
        rng = random.Random(3)
        embedder = BagOfWordsEmbedder()
        for _ in range(300):
            history = [_delivered(float(i), " ".join(rng.sample(WORDS, 3))) for i in range(rng.randint(0, 4))]
            candidate = " ".join(rng.sample(WORDS, 3))
            low, high = sorted([rng.random(), rng.random()])
            if gate(candidate, history, 5.0, low, 300, embedder).delivered:
                assert gate(candidate, history, 5.0, high, 300, embedder).delivered

    def test_similarity_clamped(self):
        """Embedders with slight overshoot still report similarity within [0, 1]."""
        embedder = Mock()
        embedder.embed.return_value = {"a": 1.0000001}
        record = gate("a", [_delivered(0.0, "a")], 1.0, 0.5, 300, embedder)

        assert 0.0 <= record.similarity_to_prev <= 1.0
        assert not record.delivered


class TestDeliveryGate:
    """Test cases for the history-owning gate."""

    def test_commit_then_repeat_is_suppressed(self):
        """Delivering x then gating x again always suppresses."""
        delivery = DeliveryGate(BagOfWordsEmbedder())
        first = delivery.check("Take an umbrella.", 0.0)
        delivery.commit(first)
        second = delivery.check("Take an umbrella.", 1.0)
        delivery.commit(second)

        assert first.delivered
        assert not second.delivered
        assert delivery.history == [first, second]

    def test_check_does_not_record(self):
        """check is side-effect free."""
        delivery = DeliveryGate(BagOfWordsEmbedder())
        delivery.check("hello", 0.0)

        assert delivery.history == []
        assert delivery.check("hello", 1.0).delivered

    def test_suppressed_record_needs_reason(self):
        """Suppressed records always carry a reason."""
        with pytest.raises(ValueError):
            DeliveryRecord(t=0.0, assistance="x", delivered=False)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
