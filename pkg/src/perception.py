"""
On-demand tiered perception: dual-mode visual sampling driven by low-cost
cues and agent reflection.
"""
import logging
import math
from collections import deque
from typing import Deque, Dict, Iterator, Optional, Tuple

from pydantic import BaseModel, Field

from .schemas import AudioContext, LocationContext, MotionContext, SamplingModeName

logger = logging.getLogger(__name__)

_EPS = 1e-9


class SchedulerError(ValueError):
    """Raised on invalid scheduler input."""


class Reflection(BaseModel):
    """Last reasoner decision fed back into the sampler."""
    proactive: bool = Field(description="Score reached the proactive threshold")
    set_at: float = Field(description="Trace time the reflection was applied")
    ttl_s: float = Field(default=60.0, gt=0, description="Validity period")

    def valid_at(self, now: float) -> bool:
        return now - self.set_at <= self.ttl_s + _EPS


class SchedulerState(BaseModel):
    last_sample_t: Optional[float] = None
    last_tick_t: Optional[float] = None
    reflection: Optional[Reflection] = None
    current_mode: SamplingModeName = "low"


class TickDecision(BaseModel):
    sample: bool
    mode: SamplingModeName


def cue_mode(
    location: LocationContext,
    motion: MotionContext,
    audio: AudioContext,
    use_location: bool = True,
    use_motion: bool = True,
    use_audio: bool = True,
) -> SamplingModeName:
    """High when the user is moving, near a POI or in a conversation."""
    triggers = (
        (use_motion and motion.state == "moving")
        or (use_location and location.near_poi)
        or (use_audio and audio.conversation_active)
    )
    return "high" if triggers else "low"


def combine_modes(
    cue: SamplingModeName,
    reflection: Optional[Reflection],
    now: float,
    policy: str = "or",
) -> SamplingModeName:
    """
    Merge the cue mode with the agent reflection.

    "or": high wins from either the cues or a valid proactive reflection.
    "reflection_priority": a valid reflection decides the mode in both
    directions; the cue applies only when no reflection is valid.
    """
    valid = reflection is not None and reflection.valid_at(now)
    if policy == "reflection_priority":
        if valid:
            return "high" if reflection.proactive else "low"
        return cue
    if policy != "or":
        raise SchedulerError(f"unknown combine policy '{policy}'")
    if cue == "high":
        return "high"
    if valid and reflection.proactive:
        return "high"
    return "low"


def apply_reflection(state: SchedulerState, proactive: bool, now: float, ttl_s: float = 60.0) -> SchedulerState:
    """New state whose reflection replaces any previous one."""
    return state.model_copy(update={"reflection": Reflection(proactive=proactive, set_at=now, ttl_s=ttl_s)})


def tick(
    state: SchedulerState,
    now: float,
    cue: SamplingModeName,
    intervals: Dict[str, float],
    policy: str = "or",
) -> Tuple[SchedulerState, TickDecision]:
    """
    Advance the scheduler by one tick.

    Args:
        state: Current scheduler state
        now: Tick time, monotonically non-decreasing
        cue: Mode suggested by the low-cost cues
        intervals: Sampling interval per mode
        policy: Cue/reflection combination policy

    Returns:
        Updated state and the sampling decision
    """
    if state.last_tick_t is not None and now < state.last_tick_t:
        raise SchedulerError("time went backwards")
    mode = combine_modes(cue, state.reflection, now, policy)
    sample = state.last_sample_t is None or now - state.last_sample_t >= intervals[mode] - _EPS
    updates = {"last_tick_t": now, "current_mode": mode}
    if sample:
        updates["last_sample_t"] = now
    return state.model_copy(update=updates), TickDecision(sample=sample, mode=mode)


def tick_times(duration_s: float, tick_s: float = 1.0) -> Iterator[float]:
    """Tick instants i * tick_s over [0, duration_s)."""
    if not math.isfinite(tick_s) or tick_s <= 0:
        raise SchedulerError("tick_s must be a finite number > 0")
    if not math.isfinite(duration_s):
        raise SchedulerError("duration_s must be finite")
    i = 0
    while i * tick_s < duration_s - _EPS or i == 0:
        yield round(i * tick_s, 9)
        i += 1


class PerceptionScheduler:
    """
    Single-owner scheduler for the tick loop.

    Reflections from completed reasoner invocations are queued and applied at
    the start of the next tick.
    """

    def __init__(
        self,
        high_interval_s: float = 5.0,
        low_interval_s: float = 60.0,
        reflection_ttl_s: float = 60.0,
        use_reflection: bool = True,
        combine: str = "or",
    ):
        if not (0 < high_interval_s <= low_interval_s):
            raise SchedulerError("intervals must satisfy 0 < high <= low")
        if combine not in ("or", "reflection_priority"):
            raise SchedulerError(f"unknown combine policy '{combine}'")
        self.combine = combine
        self.intervals = {"high": high_interval_s, "low": low_interval_s}
        self.reflection_ttl_s = reflection_ttl_s
        self.use_reflection = use_reflection
        self.state = SchedulerState()
        self._pending: Deque[bool] = deque()
        self.mode_switches = 0

    @classmethod
    def from_config(cls, sampling) -> "PerceptionScheduler":
        return cls(
            high_interval_s=sampling.high_interval_s,
            low_interval_s=sampling.low_interval_s,
            reflection_ttl_s=sampling.reflection_ttl_s,
            use_reflection=sampling.use_reflection,
            combine=sampling.combine,
        )

    def enqueue_reflection(self, proactive: bool) -> None:
        if self.use_reflection:
            self._pending.append(proactive)

    def tick(self, now: float, cue: SamplingModeName) -> TickDecision:
        while self._pending:
            self.state = apply_reflection(self.state, self._pending.popleft(), now, self.reflection_ttl_s)
        previous_mode = self.state.current_mode if self.state.last_tick_t is not None else None
        self.state, decision = tick(self.state, now, cue, self.intervals, self.combine)
        if previous_mode is not None and decision.mode != previous_mode:
            self.mode_switches += 1
            logger.debug("t=%.1f sampling mode %s -> %s", now, previous_mode, decision.mode)
        return decision
