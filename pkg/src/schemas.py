from typing import Any, Dict, Iterable, List, Literal, Optional, Tuple, Union
import json

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

DEFAULT_SCENARIOS: Tuple[str, ...] = (
    "shopping", "travel", "chitchat", "work", "health",
    "outdoors", "cooking", "leisure", "others",
)

EventKind = Literal["frame", "imu", "gps", "audio", "annotation"]
MotionState = Literal["static", "moving"]
SamplingModeName = Literal["low", "high"]
ToolKind = Literal["retrieval", "execution"]
ToolStatus = Literal["ok", "pending_confirmation", "error"]


def normalize_labels(labels: Iterable[str]) -> Tuple[str, ...]:
    """Lowercase, strip, deduplicate and sort object labels."""
    return tuple(sorted({label.strip().lower() for label in labels if label and label.strip()}))


# ---------------------------------------------------------------------------
# Trace model
# ---------------------------------------------------------------------------

class FramePayload(BaseModel):
    """Schema for a camera frame record."""
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)
    frame_id: str = Field(description="Frame identifier, unique within a trace")
    image_ref: Optional[str] = Field(default=None, description="Path or URI of the image")
    objects: Optional[List[str]] = Field(default=None, description="Precomputed detector labels")


class ImuPayload(BaseModel):
    """Schema for an IMU record: raw acceleration or a precomputed motion state."""
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)
    accel: Optional[Tuple[float, float, float]] = Field(default=None, description="Acceleration in m/s^2")
    motion_state: Optional[MotionState] = Field(default=None, description="Precomputed motion state")

    @model_validator(mode="after")
    def _exactly_one_form(self) -> "ImuPayload":
        if (self.accel is None) == (self.motion_state is None):
            raise ValueError("imu needs exactly one of accel or motion_state")
        return self


class GpsPayload(BaseModel):
    """Schema for a GPS fix."""
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)
    lat: float = Field(ge=-90.0, le=90.0, description="Latitude in degrees")
    lon: float = Field(ge=-180.0, le=180.0, description="Longitude in degrees")


class AudioPayload(BaseModel):
    """Schema for a voice-activity record."""
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)
    vad: bool = Field(description="Voice activity detected")
    transcript: Optional[str] = Field(default=None, description="Transcribed speech")


class ToolCall(BaseModel):
    """Schema for a tool call (predicted or ground truth)."""
    model_config = ConfigDict(frozen=True)
    name: str = Field(min_length=1, description="Tool name")
    args: Dict[str, str] = Field(default_factory=dict, description="Argument map")

    @field_validator("args", mode="before")
    @classmethod
    def _stringify_args(cls, value: Any) -> Any:
        if isinstance(value, dict):
            return {
                str(k): (v if isinstance(v, str) else json.dumps(v, sort_keys=True))
                for k, v in value.items()
            }
        return value

    def canonical_key(self) -> str:
        """Tool name plus key-sorted arguments."""
        return json.dumps([self.name, sorted(self.args.items())], ensure_ascii=False)


class AnnotationPayload(BaseModel):
    """Schema for a ground-truth proactive moment."""
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)
    need: bool = Field(default=True, description="Ground-truth proactive need")
    tools: List[ToolCall] = Field(default_factory=list, description="Intended tool calls")
    window_s: float = Field(default=5.0, description="Labelling window in seconds")


Payload = Union[FramePayload, ImuPayload, GpsPayload, AudioPayload, AnnotationPayload]

PAYLOAD_MODELS: Dict[str, type] = {
    "frame": FramePayload,
    "imu": ImuPayload,
    "gps": GpsPayload,
    "audio": AudioPayload,
    "annotation": AnnotationPayload,
}


class TraceEvent(BaseModel):
    """One timestamped sensor or annotation record."""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)
    t: float = Field(ge=0.0, description="Trace-relative time in seconds")
    kind: EventKind = Field(description="Event modality")
    payload: Payload = Field(description="Kind-specific record")

    @model_validator(mode="after")
    def _payload_matches_kind(self) -> "TraceEvent":
        if not isinstance(self.payload, PAYLOAD_MODELS[self.kind]):
            raise ValueError(f"payload does not match kind '{self.kind}'")
        return self

    def to_record(self) -> Dict[str, Any]:
        """Flat line-format record."""
        record: Dict[str, Any] = {"t": self.t, "kind": self.kind}
        record.update(self.payload.model_dump(mode="json", exclude_none=True))
        return record


class Trace(BaseModel):
    """An immutable, time-ordered sensor trace."""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)
    events: Tuple[TraceEvent, ...] = Field(description="Events sorted by t")
    duration_s: float = Field(ge=0.0, description="Trace duration in seconds")

    def annotations(self) -> List[TraceEvent]:
        return [e for e in self.events if e.kind == "annotation"]

    def frames(self) -> List[TraceEvent]:
        return [e for e in self.events if e.kind == "frame"]


class Gap(BaseModel):
    kind: EventKind
    start_t: float
    end_t: float


class ValidationReport(BaseModel):
    """Schema for trace validation results."""
    ok: bool = Field(description="True iff there are no violations")
    counts: Dict[str, int] = Field(description="Event count per modality")
    annotation_count: int = Field(description="Number of annotation events")
    gaps: List[Gap] = Field(default_factory=list, description="Gaps above the configured threshold")
    violations: List[str] = Field(default_factory=list, description="Invariant violations")


# ---------------------------------------------------------------------------
# Contexts
# ---------------------------------------------------------------------------

class Poi(BaseModel):
    model_config = ConfigDict(frozen=True)
    name: str = Field(min_length=1)
    category: str
    lat: float = Field(ge=-90.0, le=90.0)
    lon: float = Field(ge=-180.0, le=180.0)


class NearbyPoi(BaseModel):
    model_config = ConfigDict(frozen=True)
    poi: Poi
    distance_m: float = Field(ge=0.0)


class LocationContext(BaseModel):
    """Nearby POIs sorted by distance."""
    model_config = ConfigDict(frozen=True)
    nearby: List[NearbyPoi] = Field(default_factory=list)
    near_poi: bool = False


class MotionContext(BaseModel):
    model_config = ConfigDict(frozen=True)
    state: MotionState = "static"
    window_stddev: Optional[float] = Field(default=None, description="Absent when the state was precomputed")


class AudioContext(BaseModel):
    model_config = ConfigDict(frozen=True)
    conversation_active: bool = False
    transcript_window: List[str] = Field(default_factory=list, description="Transcripts in time order")


class CoarseVisualContext(BaseModel):
    """Detected object labels of one frame."""
    model_config = ConfigDict(frozen=True)
    objects: Tuple[str, ...] = Field(default=(), description="Lowercased, deduplicated, sorted labels")
    frame_id: str

    @field_validator("objects", mode="before")
    @classmethod
    def _normalize(cls, value: Any) -> Any:
        return normalize_labels(value or ())


class Persona(BaseModel):
    """Natural-language description of a user preference or trait."""
    model_config = ConfigDict(frozen=True)
    id: str
    scenario: str
    text: str = Field(min_length=1)


class BankEntry(BaseModel):
    """Scenario-object bank entry (object set, scenario)."""
    model_config = ConfigDict(frozen=True)
    objects: Tuple[str, ...] = Field(min_length=1)
    scenario: str

    @field_validator("objects", mode="before")
    @classmethod
    def _normalize(cls, value: Any) -> Any:
        return normalize_labels(value or ())


class ContextBundle(BaseModel):
    """Hierarchical contexts at one instant."""
    at_t: float = Field(ge=0.0)
    location: LocationContext = Field(default_factory=LocationContext)
    motion: MotionContext = Field(default_factory=MotionContext)
    audio: AudioContext = Field(default_factory=AudioContext)
    visual: Optional[CoarseVisualContext] = None
    personas: List[Persona] = Field(default_factory=list)


class SampleCapture(BaseModel):
    """What the scheduler captured at a sampling tick."""
    model_config = ConfigDict(frozen=True)
    t: float
    frame: Optional[FramePayload] = None
    location: LocationContext = Field(default_factory=LocationContext)
    motion: MotionContext = Field(default_factory=MotionContext)
    audio: AudioContext = Field(default_factory=AudioContext)


# ---------------------------------------------------------------------------
# Tools
# ---------------------------------------------------------------------------

class ToolArg(BaseModel):
    model_config = ConfigDict(frozen=True)
    key: str = Field(min_length=1)
    required: bool = False
    description: str = ""


class ToolSpec(BaseModel):
    """Schema for one tool of the manifest."""
    model_config = ConfigDict(frozen=True)
    name: str = Field(min_length=1)
    kind: ToolKind
    description: str = ""
    args: List[ToolArg] = Field(default_factory=list)
    comments: Optional[str] = None


class CallValidation(BaseModel):
    ok: bool
    errors: List[str] = Field(default_factory=list)


class ToolResult(BaseModel):
    name: str
    status: ToolStatus
    payload: str = Field(default="", description="Provider content or error text")


# ---------------------------------------------------------------------------
# Reasoner
# ---------------------------------------------------------------------------

class PromptBundle(BaseModel):
    """Prompt sections in their fixed order."""
    model_config = ConfigDict(frozen=True)
    task_instructions: str
    tool_manifest_text: str
    personas_text: str
    sensory_text: str
    image_ref: Optional[str] = None
    frame_id: Optional[str] = Field(default=None, description="Match key for scripted backends")
    at_t: float = Field(default=0.0, description="Sample time, match key for scripted backends")

    def render(self) -> str:
        """Full prompt text: Task Instructions, Tool Set, Personas, Sensory Contexts."""
        if self.personas_text == "(none)":
            personas = "Personas: (none)"
        else:
            personas = "Personas:\n" + self.personas_text
        return "\n\n".join([
            "Task Instructions:\n" + self.task_instructions,
            "Tool Set:\n" + self.tool_manifest_text,
            personas,
            "Sensory Contexts: " + self.sensory_text,
        ])


class ReasonerOutput(BaseModel):
    """Structured reasoner result."""
    thoughts: str = ""
    proactive_score: int = Field(ge=1, le=5)
    tool_calls: List[ToolCall] = Field(default_factory=list)
    assistance: str = ""
    raw: str = ""

    def canonical(self) -> Dict[str, Any]:
        """Canonical single-object output form."""
        return {
            "thoughts": self.thoughts,
            "proactive_score": self.proactive_score,
            "tool_calls": [c.model_dump() for c in self.tool_calls],
            "assistance": self.assistance,
        }


class DistillationRecord(BaseModel):
    """Paired fine-tuning sample <img, sen, personas, thoughts, score, tools>."""
    image_ref: str
    sensory_text: str
    personas_text: str
    thoughts: str
    proactive_score: int = Field(ge=1, le=5)
    tool_calls: List[ToolCall] = Field(default_factory=list)
    t: float = Field(ge=0.0, description="Frame time the record was built at")


# ---------------------------------------------------------------------------
# Delivery and run log
# ---------------------------------------------------------------------------

class DeliveryRecord(BaseModel):
    t: float
    assistance: str
    delivered: bool
    similarity_to_prev: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    suppressed_reason: Optional[str] = None

    @model_validator(mode="after")
    def _reason_when_suppressed(self) -> "DeliveryRecord":
        if not self.delivered and not self.suppressed_reason:
            raise ValueError("suppressed delivery records need a suppressed_reason")
        return self


class InvocationRecord(BaseModel):
    """One reasoner invocation as written to the run log."""
    t: float = Field(description="Sample time of the frame reasoned over")
    completed_at: float = Field(description="Trace time the result became available")
    frame_id: Optional[str] = None
    scenario: Optional[str] = None
    persona_count: int = 0
    persona_chars: int = 0
    proactive_score: int = Field(ge=1, le=5)
    decided_proactive: bool
    tool_calls: List[ToolCall] = Field(default_factory=list)
    tool_results: List[ToolResult] = Field(default_factory=list)
    assistance: str = ""
    delivered: bool = False
    similarity_to_prev: Optional[float] = None
    suppressed_reason: Optional[str] = None
    error: Optional[str] = None


class RunLog(BaseModel):
    """Per-invocation decisions and sampling events of one replay."""
    config: Dict[str, Any] = Field(default_factory=dict)
    duration_s: float = 0.0
    all_personas_chars: int = 0
    samples: List[float] = Field(default_factory=list)
    invocations: List[InvocationRecord] = Field(default_factory=list)
    dropped_frames: int = 0
    frameless_samples: int = 0
    mode_switches: int = 0

    def delivered_assistance(self) -> List[str]:
        """User-facing assistance stream."""
        return [inv.assistance for inv in self.invocations if inv.delivered]

    def to_lines(self) -> List[str]:
        """Line-delimited JSON: header, samples, invocations, summary."""
        dump = lambda obj: json.dumps(obj, sort_keys=True, ensure_ascii=False)
        lines = [dump({
            "type": "header",
            "config": self.config,
            "duration_s": self.duration_s,
            "all_personas_chars": self.all_personas_chars,
        })]
        lines.extend(dump({"type": "sample", "t": t}) for t in self.samples)
        lines.extend(
            dump({"type": "invocation", **inv.model_dump(mode="json")}) for inv in self.invocations
        )
        lines.append(dump({
            "type": "summary",
            "dropped_frames": self.dropped_frames,
            "frameless_samples": self.frameless_samples,
            "mode_switches": self.mode_switches,
        }))
        return lines

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "RunLog":
        data: Dict[str, Any] = {"samples": [], "invocations": []}
        for line in lines:
            if not line.strip():
                continue
            record = json.loads(line)
            kind = record.pop("type", None)
            if kind == "header":
                data.update(record)
            elif kind == "sample":
                data["samples"].append(record["t"])
            elif kind == "invocation":
                data["invocations"].append(record)
            elif kind == "summary":
                data.update(record)
            else:
                raise ValueError(f"Unknown run log record type: {kind}")
        return cls.model_validate(data)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

class MatchedPair(BaseModel):
    annotation_t: float
    invocation_t: float
    predicted: List[ToolCall] = Field(default_factory=list)
    truth: List[ToolCall] = Field(default_factory=list)


class MatchSet(BaseModel):
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    pairs: List[MatchedPair] = Field(default_factory=list)


class MatchCounts(BaseModel):
    tp: int
    fp: int
    tn: int
    fn: int
    matched_pairs: int


class BaselineResult(BaseModel):
    name: str
    samples: int
    recall: float = Field(ge=0.0, le=1.0)
    sampling_ratio: float = Field(ge=0.0)


class EvalReport(BaseModel):
    """Aggregated metric values of one run."""
    acc_p: float = Field(ge=0.0, le=1.0, description="Proactive accuracy")
    md: float = Field(ge=0.0, le=1.0, description="Missed detection rate")
    f1: float = Field(ge=0.0, le=1.0, description="Macro tool-name F1 over matched pairs")
    acc_args: float = Field(ge=0.0, le=1.0, description="Argument accuracy over matched pairs")
    recall: float = Field(ge=0.0, le=1.0, description="Sampling recall")
    sampling_ratio: float = Field(ge=0.0, description="Samples relative to 1 s periodic sampling")
    counts: MatchCounts
    tolerance_s: float
    invocations: int = 0
    delivered: int = 0
    suppressed: int = 0
    dropped_frames: int = 0
    persona_length_reduction: Optional[float] = Field(
        default=None, description="All-personas length over mean retrieved length"
    )
    baselines: List[BaselineResult] = Field(default_factory=list)
