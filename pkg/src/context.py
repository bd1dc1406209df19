"""
Hierarchical sensory context extraction.

Low-cost modalities (GPS, IMU, audio) become text-ready location, motion and
audio contexts; frames become a coarse visual context (a normalized object
label set).
"""
import json
import logging
from collections import deque
from math import asin, cos, radians, sin, sqrt
from pathlib import Path
from typing import Deque, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from .schemas import (
    AudioContext, AudioPayload, CoarseVisualContext, ContextBundle, FramePayload,
    GpsPayload, ImuPayload, LocationContext, MotionContext, NearbyPoi, Poi, TraceEvent,
)

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6371008.8  # mean radius


class ContextError(ValueError):
    """Raised when a context cannot be derived from its inputs."""


class ObjectDetector(Protocol):
    """Pluggable detector turning an image reference into object labels."""

    def detect(self, image_ref: str) -> List[str]:
        ...


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters."""
    phi1, phi2 = radians(lat1), radians(lat2)
    d_phi = radians(lat2 - lat1)
    d_lambda = radians(lon2 - lon1)
    a = sin(d_phi / 2) ** 2 + cos(phi1) * cos(phi2) * sin(d_lambda / 2) ** 2
    return 2 * EARTH_RADIUS_M * asin(min(1.0, sqrt(a)))


def load_pois(path: Path) -> List[Poi]:
    """Load the offline POI table (one JSON object per line)."""
    pois = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                pois.append(Poi.model_validate_json(line))
    logger.debug("Loaded %d POIs from %s", len(pois), path)
    return pois


def derive_motion_context(
    accel_window: Sequence[Sequence[float]],
    threshold: float,
    motion_state: Optional[str] = None,
) -> MotionContext:
    """
    Classify the user as static or moving.

    Args:
        accel_window: Acceleration 3-vectors (m/s^2) inside the sliding window
        threshold: Stddev of the acceleration magnitude above which the user is moving
        motion_state: Precomputed state, passed through unchanged when given

    Returns:
        MotionContext with the window stddev (absent for precomputed states)
    """
    if motion_state is not None:
        return MotionContext(state=motion_state)
    if len(accel_window) == 0:
        raise ContextError("no motion samples")
    magnitudes = np.linalg.norm(np.asarray(accel_window, dtype=float), axis=1)
    stddev = float(np.std(magnitudes))
    return MotionContext(state="moving" if stddev > threshold else "static", window_stddev=stddev)


def derive_location_context(
    fix: GpsPayload,
    pois: Sequence[Poi],
    radius_m: float,
    listing_factor: float = 5.0,
) -> LocationContext:
    """List POIs within ``listing_factor * radius_m`` and flag proximity within ``radius_m``."""
    if radius_m <= 0:
        raise ContextError("radius_m must be > 0")
    nearby = []
    for index, poi in enumerate(pois):
        distance = haversine_m(fix.lat, fix.lon, poi.lat, poi.lon)
        if distance <= radius_m * listing_factor:
            nearby.append((distance, index, poi))
    nearby.sort(key=lambda item: (item[0], item[1]))
    return LocationContext(
        nearby=[NearbyPoi(poi=poi, distance_m=distance) for distance, _, poi in nearby],
        near_poi=any(distance <= radius_m for distance, _, _ in nearby),
    )


def derive_audio_context(audio_events: Sequence[AudioPayload], window_s: float) -> AudioContext:
    """Conversation flag and transcripts of the audio events inside the window (time order)."""
    if window_s <= 0:
        raise ContextError("window_s must be > 0")
    return AudioContext(
        conversation_active=any(event.vad for event in audio_events),
        transcript_window=[event.transcript for event in audio_events if event.transcript],
    )


def extract_coarse_visual_context(
    frame: FramePayload, detector: Optional[ObjectDetector] = None
) -> CoarseVisualContext:
    """
    Coarse visual context of a frame.

    Trace-provided labels are the default detector; an image-only frame needs
    a configured detector backend.
    """
    if frame.objects is not None:
        labels = frame.objects
    elif frame.image_ref is not None:
        if detector is None:
            raise ContextError("no detector backend")
        labels = detector.detect(frame.image_ref)
    else:
        raise ContextError(f"frame {frame.frame_id} has neither objects nor image_ref")
    return CoarseVisualContext(objects=labels, frame_id=frame.frame_id)


def render_sensory_text(bundle: ContextBundle, max_pois: int = 5) -> str:
    """Deterministic text form of the motion, location and audio contexts."""
    motion = f"Motion: {bundle.motion.state}."

    listed = bundle.location.nearby[:max_pois]
    if listed:
        pois = ", ".join(
            f"{item.poi.name} ({item.poi.category}, {round(item.distance_m)} m)" for item in listed
        )
        location = f"Location: near {pois}."
    else:
        location = "Location: no nearby POIs."

    audio_ctx = bundle.audio
    if audio_ctx.transcript_window:
        quoted = " | ".join(json.dumps(text, ensure_ascii=False) for text in audio_ctx.transcript_window)
        audio = f"Audio: conversation detected; transcripts: {quoted}."
    elif audio_ctx.conversation_active:
        audio = "Audio: conversation detected."
    else:
        audio = "Audio: no conversation."

    return " ".join([motion, location, audio])


class SensoryContextTracker:
    """
    Consumes replayed events and derives the low-cost contexts at a tick.

    Holds the latest GPS fix, sliding IMU and audio windows and the latest frame.
    """

    def __init__(
        self,
        pois: Sequence[Poi],
        radius_m: float = 100.0,
        listing_factor: float = 5.0,
        motion_window_s: float = 2.0,
        motion_threshold: float = 0.5,
        audio_window_s: float = 30.0,
    ):
        self.pois = list(pois)
        self.radius_m = radius_m
        self.listing_factor = listing_factor
        self.motion_window_s = motion_window_s
        self.motion_threshold = motion_threshold
        self.audio_window_s = audio_window_s

        self._fix: Optional[GpsPayload] = None
        self._accel: Deque[Tuple[float, Tuple[float, float, float]]] = deque()
        self._motion_state: Optional[Tuple[float, str]] = None
        self._audio: Deque[Tuple[float, AudioPayload]] = deque()
        self.latest_frame: Optional[Tuple[float, FramePayload]] = None

    def observe(self, event: TraceEvent) -> None:
        payload = event.payload
        if isinstance(payload, GpsPayload):
            self._fix = payload
        elif isinstance(payload, ImuPayload):
            if payload.accel is not None:
                self._accel.append((event.t, payload.accel))
            else:
                self._motion_state = (event.t, payload.motion_state)
        elif isinstance(payload, AudioPayload):
            self._audio.append((event.t, payload))
        elif isinstance(payload, FramePayload):
            self.latest_frame = (event.t, payload)

    def _prune(self, now: float) -> None:
        while self._accel and self._accel[0][0] < now - self.motion_window_s:
            self._accel.popleft()
        while self._audio and self._audio[0][0] <= now - self.audio_window_s:
            self._audio.popleft()

    def location(self) -> LocationContext:
        if self._fix is None:
            return LocationContext()
        return derive_location_context(self._fix, self.pois, self.radius_m, self.listing_factor)

    def motion(self, now: float) -> MotionContext:
        self._prune(now)
        latest_accel_t = self._accel[-1][0] if self._accel else None
        if self._motion_state is not None and (
            latest_accel_t is None or self._motion_state[0] >= latest_accel_t
        ):
            return derive_motion_context([], self.motion_threshold, motion_state=self._motion_state[1])
        if not self._accel:
            return MotionContext()
        return derive_motion_context([a for _, a in self._accel], self.motion_threshold)

    def audio(self, now: float) -> AudioContext:
        self._prune(now)
        return derive_audio_context([p for _, p in self._audio], self.audio_window_s)

    def snapshot(self, now: float) -> Tuple[LocationContext, MotionContext, AudioContext]:
        """Location, motion and audio contexts at ``now``."""
        return self.location(), self.motion(now), self.audio(now)
