"""
Sensor-trace model: parsing, serialization, validation and replay.

Trace files are UTF-8, one JSON object per line, with required keys "t" and
"kind" and the kind-specific payload keys flattened next to them.
"""
import json
import math
import logging
from collections import Counter
from pathlib import Path
from typing import IO, Dict, Iterable, Iterator, List, Optional, Union

from pydantic import ValidationError

from .schemas import (
    PAYLOAD_MODELS, AnnotationPayload, AudioPayload, FramePayload, Gap,
    Trace, TraceEvent, ValidationReport,
)

logger = logging.getLogger(__name__)


class TraceFormatError(ValueError):
    """Raised when a trace file cannot be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message)
        self.line = line


def parse_event(record: Dict, default_window_s: float = 5.0) -> TraceEvent:
    """Build a TraceEvent from one flat line record."""
    if not isinstance(record, dict):
        raise ValueError("record is not a JSON object")
    if "t" not in record or "kind" not in record:
        raise ValueError("missing required key 't' or 'kind'")
    fields = dict(record)
    t = fields.pop("t")
    kind = fields.pop("kind")
    if kind not in PAYLOAD_MODELS:
        raise ValueError(f"unknown kind '{kind}'")
    if isinstance(t, bool) or not isinstance(t, (int, float)):
        raise ValueError("'t' must be a number")
    if not math.isfinite(t):
        raise ValueError("out-of-range field 't': must be finite")
    if kind == "annotation":
        fields.setdefault("window_s", default_window_s)
    payload = PAYLOAD_MODELS[kind].model_validate(fields)
    return TraceEvent(t=float(t), kind=kind, payload=payload)


def parse_trace(source: Union[IO[bytes], IO[str], Iterable], default_window_s: float = 5.0) -> Trace:
    """
    Parse a line-delimited trace.

    Args:
        source: Byte or text stream (or any iterable of lines)
        default_window_s: Annotation window used when a record omits window_s

    Returns:
        Trace with events in file order, which must already be sorted by t
    """
    events: List[TraceEvent] = []
    last_t = None
    for line_no, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                raise TraceFormatError(f"malformed line {line_no}: not UTF-8", line_no) from e
        line = raw.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise TraceFormatError(f"malformed line {line_no}: {e.msg}", line_no) from e
        try:
            event = parse_event(record, default_window_s)
        except (ValidationError, ValueError) as e:
            raise TraceFormatError(f"invalid event at line {line_no}: {e}", line_no) from e
        if last_t is not None and event.t < last_t:
            raise TraceFormatError(f"unsorted at line {line_no}", line_no)
        last_t = event.t
        events.append(event)

    if not events:
        raise TraceFormatError("empty trace")
    return Trace(events=tuple(events), duration_s=events[-1].t)


def load_trace(path: Path, default_window_s: float = 5.0) -> Trace:
    """Parse a trace file from disk."""
    with open(path, "rb") as f:
        return parse_trace(f, default_window_s)


def serialize_trace(trace: Trace) -> str:
    """Line-format text of a trace; parses back to an equal Trace."""
    return "".join(
        json.dumps(event.to_record(), sort_keys=True, ensure_ascii=False) + "\n"
        for event in trace.events
    )


def replay_iter(trace: Trace) -> Iterator[TraceEvent]:
    """Yield every event once, in timestamp order (file order among ties)."""
    yield from trace.events


def validate_trace(trace: Trace, gap_threshold_s: float = 5.0) -> ValidationReport:
    """
    Check trace invariants and summarize its content.

    Violations are report content, never exceptions.
    """
    counts = Counter({kind: 0 for kind in PAYLOAD_MODELS})
    violations: List[str] = []
    gaps: List[Gap] = []
    last_seen: Dict[str, float] = {}
    frame_ids = set()
    previous_t = None

    for index, event in enumerate(trace.events):
        counts[event.kind] += 1
        where = f"event {index} (t={event.t:g})"

        if previous_t is not None and event.t < previous_t:
            violations.append(f"{where}: timestamps not sorted")
        previous_t = event.t
        if event.t > trace.duration_s:
            violations.append(f"{where}: beyond trace duration")

        if event.kind != "annotation":
            if event.kind in last_seen and event.t - last_seen[event.kind] > gap_threshold_s:
                gaps.append(Gap(kind=event.kind, start_t=last_seen[event.kind], end_t=event.t))
            last_seen[event.kind] = event.t

        payload = event.payload
        if isinstance(payload, FramePayload):
            if payload.frame_id in frame_ids:
                violations.append(f"{where}: duplicate frame_id '{payload.frame_id}'")
            frame_ids.add(payload.frame_id)
            if payload.image_ref is None and payload.objects is None:
                violations.append(f"{where}: frame without image_ref or objects")
            if payload.objects and any(not label.strip() for label in payload.objects):
                violations.append(f"{where}: empty object label")
        elif isinstance(payload, AudioPayload):
            if payload.transcript is not None and not payload.vad:
                violations.append(f"{where}: transcript without voice activity")
        elif isinstance(payload, AnnotationPayload):
            if not payload.need:
                violations.append(f"{where}: annotation with need=false")
            if payload.window_s <= 0:
                violations.append(f"{where}: annotation window_s must be > 0")

    report = ValidationReport(
        ok=not violations,
        counts=dict(counts),
        annotation_count=counts["annotation"],
        gaps=gaps,
        violations=violations,
    )
    if violations:
        logger.warning("Trace validation found %d violation(s)", len(violations))
    return report
