import itertools
import math
import random

import pytest

import sys
import os
sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from src.perception import (
    PerceptionScheduler, Reflection, SchedulerError, SchedulerState, apply_reflection,
    combine_modes, cue_mode, tick, tick_times,
)
from src.schemas import AudioContext, LocationContext, MotionContext

INTERVALS = {"high": 5.0, "low": 60.0}


def _run(scheduler, cues, reflections=None):
    """Drive a scheduler over 1 s ticks; reflections maps tick -> proactive flag."""
    samples = []
    for now, cue in enumerate(cues):
        if reflections and now in reflections:
            scheduler.enqueue_reflection(reflections[now])
        if scheduler.tick(float(now), cue).sample:
            samples.append(float(now))
    return samples


class TestCueMode:
    """Test cases for low-cost cue triggers."""

    @pytest.mark.parametrize("motion,near,talking,expected", [
        ("static", False, False, "low"),
        ("moving", False, False, "high"),
        ("static", True, False, "high"),
        ("static", False, True, "high"),
    ])
    def test_triggers(self, motion, near, talking, expected):
        """Any single trigger raises the mode."""
        mode = cue_mode(
            LocationContext(near_poi=near), MotionContext(state=motion), AudioContext(conversation_active=talking)
        )
        assert mode == expected

    def test_disabled_cues_are_ignored(self):
        """Ablated modalities no longer trigger high mode."""
        mode = cue_mode(
            LocationContext(near_poi=True), MotionContext(state="moving"), AudioContext(conversation_active=True),
            use_location=False, use_motion=False, use_audio=False,
        )
        assert mode == "low"


class TestCombineModes:
    """Test cases for cue/reflection combination."""

    def test_or_policy_exhaustive(self):
        """High iff the cue is high or a valid reflection is proactive."""
        for cue, proactive, age in itertools.product(("low", "high"), (None, True, False), (0.0, 60.0, 61.0)):
            reflection = None if proactive is None else Reflection(proactive=proactive, set_at=0.0, ttl_s=60.0)
            valid_proactive = proactive is True and age <= 60.0
            expected = "high" if cue == "high" or valid_proactive else "low"

            assert combine_modes(cue, reflection, age) == expected

    def test_reflection_priority_overrides_cue(self):
        """A valid non-proactive reflection keeps the mode low despite a high cue."""
        reflection = Reflection(proactive=False, set_at=0.0, ttl_s=60.0)

        assert combine_modes("high", reflection, 10.0, "reflection_priority") == "low"
        assert combine_modes("high", reflection, 70.0, "reflection_priority") == "high"

    def test_unknown_policy(self):
        """Unknown policies are rejected."""
        with pytest.raises(SchedulerError):
            combine_modes("low", None, 0.0, "and")

    def test_reflection_valid_through_ttl(self):
        """A reflection expires after exactly ttl seconds."""
        reflection = Reflection(proactive=True, set_at=10.0, ttl_s=60.0)

        assert reflection.valid_at(70.0)
        assert not reflection.valid_at(70.5)


class TestTick:
    """Test cases for the pure tick function."""

    def test_first_tick_samples(self):
        """The very first tick always captures a frame."""
        _, decision = tick(SchedulerState(), 0.0, "low", INTERVALS)

        assert decision.sample
        assert decision.mode == "low"

    def test_interval_respected(self):
        """In high mode the next sample comes one interval later."""
        state, _ = tick(SchedulerState(), 0.0, "high", INTERVALS)
        state, decision = tick(state, 4.0, "high", INTERVALS)
        assert not decision.sample

        state, decision = tick(state, 5.0, "high", INTERVALS)
        assert decision.sample
        assert state.last_sample_t == 5.0

    def test_time_going_backwards(self):
        """Ticks must be monotonic."""
        state, _ = tick(SchedulerState(), 5.0, "low", INTERVALS)
        with pytest.raises(SchedulerError):
            tick(state, 4.0, "low", INTERVALS)

    def test_apply_reflection(self):
        """Each applied reflection replaces the previous one."""
        state, _ = tick(SchedulerState(), 0.0, "low", INTERVALS)
        state = apply_reflection(state, True, 1.0)
        state, decision = tick(state, 5.0, "low", INTERVALS)

        assert decision.mode == "high" and decision.sample
        assert state.reflection.set_at == 1.0

        state = apply_reflection(state, False, 6.0)
        _, decision = tick(state, 10.0, "low", INTERVALS)
        assert decision.mode == "low"
        assert not decision.sample

    def test_tick_times(self):
        """Ticks cover [0, duration) and always include 0."""
        assert list(tick_times(3.0)) == [0.0, 1.0, 2.0]
        assert list(tick_times(1.0, 0.5)) == [0.0, 0.5]
        assert list(tick_times(0.0)) == [0.0]
        with pytest.raises(SchedulerError):
            list(tick_times(3.0, 0.0))
        with pytest.raises(SchedulerError):
            list(tick_times(float("inf")))
        with pytest.raises(SchedulerError):
            list(tick_times(3.0, float("nan")))


class TestPerceptionScheduler:
    """Test cases for the stateful scheduler."""

    def test_all_low_samples_every_minute(self):
        """A quiet 600 s trace samples once per low interval."""
        samples = _run(PerceptionScheduler(), ["low"] * 600)

        assert samples == [float(t) for t in range(0, 600, 60)]

    def test_all_high_samples_every_five_seconds(self):
        """A busy 600 s trace samples once per high interval."""
        samples = _run(PerceptionScheduler(), ["high"] * 600)

        assert len(samples) == 120

    def test_proactive_reflection_raises_mode(self):
        """A proactive reflection switches to high mode at the next tick."""
        scheduler = PerceptionScheduler()
        samples = _run(scheduler, ["low"] * 30, reflections={1: True})

        assert samples == [0.0, 5.0, 10.0, 15.0, 20.0, 25.0]
        assert scheduler.mode_switches == 1

    def test_reflection_disabled(self):
        """With reflection off the queued results are ignored."""
        scheduler = PerceptionScheduler(use_reflection=False)
        samples = _run(scheduler, ["low"] * 30, reflections={1: True})

        assert samples == [0.0]

    def test_samples_never_closer_than_high_interval(self):
        """Random cue streams never sample faster than the high interval."""
        rng = random.Random(7)
        for _ in range(50):
            cues = [rng.choice(["low", "high"]) for _ in range(300)]
            reflections = {t: rng.random() < 0.5 for t in range(300) if rng.random() < 0.05}
            samples = _run(PerceptionScheduler(), cues, reflections)

            gaps = [b - a for a, b in zip(samples, samples[1:])]
            assert all(gap >= 5.0 for gap in gaps)
            assert all(gap <= 60.0 for gap in gaps)

    def test_sample_count_bounds(self):
        """Over T seconds the count stays between floor(T/low) and ceil(T/high) + 1."""
        rng = random.Random(21)
        for _ in range(100):
            high = rng.randint(1, 20)
            low = rng.randint(high, 90)
            duration = rng.randint(1, 600)
            cues = [rng.choice(["low", "high"]) for _ in range(duration)]
            reflections = {t: rng.random() < 0.5 for t in range(duration) if rng.random() < 0.05}
            n = len(_run(PerceptionScheduler(high, low), cues, reflections))

            assert duration // low <= n <= math.ceil(duration / high) + 1

    def test_more_high_cues_never_sample_less(self):
        """Raising any cue from low to high never lowers the sample count."""
        rng = random.Random(22)
        for _ in range(100):
            cues = [rng.choice(["low", "high"]) for _ in range(300)]
            raised = [c if c == "high" or rng.random() < 0.7 else "high" for c in cues]
            base = _run(PerceptionScheduler(use_reflection=False), cues)
            more = _run(PerceptionScheduler(use_reflection=False), raised)

            assert len(more) >= len(base)
            for horizon in (60, 150, 300):
                assert sum(t < horizon for t in more) >= sum(t < horizon for t in base)

    def test_always_proactive_reflection_equals_high_pinned(self):
        """A reflection that is always proactive samples like a scheduler pinned high."""
        rng = random.Random(11)
        cues = [rng.choice(["low", "high"]) for _ in range(300)]
        reflected = _run(PerceptionScheduler(), cues, reflections={t: True for t in range(300)})
        pinned = _run(PerceptionScheduler(use_reflection=False), ["high"] * 300)

        assert reflected == pinned

    def test_equal_intervals_reduce_to_periodic(self):
        """Equal intervals without reflection sample strictly periodically."""
        rng = random.Random(12)
        cues = [rng.choice(["low", "high"]) for _ in range(100)]
        samples = _run(PerceptionScheduler(10, 10, use_reflection=False), cues)

        assert samples == [float(t) for t in range(0, 100, 10)]

    def test_invalid_intervals(self):
        """High must not exceed low."""
        with pytest.raises(SchedulerError):
            PerceptionScheduler(high_interval_s=60, low_interval_s=5)

    def test_unknown_combine_policy(self):
        """Unknown combination policies fail at construction."""
        with pytest.raises(SchedulerError):
            PerceptionScheduler(combine="and")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
