"""
Proactive reasoning: prompt assembly, structured-output parsing, the
proactive-score threshold and chain-of-thought distillation export.
"""
import json
import logging
import random
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Union

from pydantic import ValidationError

from .backends import BackendUnavailable, ReasonerBackend
from .context import ObjectDetector, SensoryContextTracker, extract_coarse_visual_context, render_sensory_text
from .personas import PersonaStore, ScenarioObjectBank, select_personas
from .schemas import (
    ContextBundle, DistillationRecord, Persona, Poi, PromptBundle,
    ReasonerOutput, ToolCall, Trace, TraceEvent,
)
from .tools import ToolRegistry

logger = logging.getLogger(__name__)

IMAGE_TOKEN = "<IMAGE>"

# Default task instructions. Replace them with reasoner.instructions_path.
DEFAULT_INSTRUCTIONS = """You are a proactive assistant running on the user's wearable device. \
You see what the user sees (the image) together with text descriptions of their \
surroundings (sensory contexts) and of their preferences (personas).

1. Think step by step about what the user is doing and whether they would \
benefit from help right now (thoughts).
2. Rate how much the user needs proactive assistance with an integer \
proactive_score from 1 (no need) to 5 (clear need).
3. If help is needed, call the tools from the tool set that gather the \
information you need (tool_calls). Tools marked [execution] will only run \
after the user confirms.
4. Write the short message you would show the user (assistance).

Answer with exactly one JSON object:
{"thoughts": "...", "proactive_score": 1, "tool_calls": [{"name": "...", "args": {"key": "value"}}], "assistance": "..."}"""

FORMAT_REMINDER = (
    "Your previous answer could not be parsed. Reply with one JSON object with the keys "
    '"thoughts", "proactive_score" (integer 1-5), "tool_calls" and "assistance", and nothing else.'
)

THOUGHT_INSTRUCTIONS = (
    "Describe the image and the user's situation in a few sentences, taking the sensory "
    "contexts and personas into account. Explain whether the user needs assistance."
)


class ParseFailure(ValueError):
    """Raised when backend text holds no usable structured output."""

    def __init__(self, message: str, raw: Any = ""):
        super().__init__(message)
        self.raw = raw


def load_instructions(path: Optional[str]) -> str:
    """Task instructions from a file, or the shipped default."""
    if not path:
        return DEFAULT_INSTRUCTIONS
    return Path(path).read_text(encoding="utf-8").strip()


def render_personas_text(personas: Sequence[Persona]) -> str:
    if not personas:
        return "(none)"
    return "\n".join(f"- {p.text}" for p in personas)


def render_prompt_sensory(bundle: ContextBundle, max_pois: int = 5) -> str:
    """Sensory section text; carries the image token once when a frame is attached."""
    text = render_sensory_text(bundle, max_pois).replace(IMAGE_TOKEN, "<image>")
    if bundle.visual is not None:
        text = f"{text} Image: {IMAGE_TOKEN}"
    return text


def assemble_prompt(
    bundle: ContextBundle,
    personas: Sequence[Persona],
    tools: ToolRegistry,
    instructions: str = DEFAULT_INSTRUCTIONS,
    max_pois: int = 5,
    image_ref: Optional[str] = None,
) -> PromptBundle:
    """
    Build the reasoner prompt from hierarchical contexts.

    Args:
        bundle: Contexts at the sample time
        personas: Retrieved personas, listed one per line
        tools: Tool registry rendered into the Tool Set section
        instructions: Task instruction text
        max_pois: Most POIs listed in the location context
        image_ref: Image attached to the prompt, if any

    Returns:
        PromptBundle with sections in fixed order
    """
    return PromptBundle(
        task_instructions=instructions,
        tool_manifest_text=tools.describe(),
        personas_text=render_personas_text(personas),
        sensory_text=render_prompt_sensory(bundle, max_pois),
        image_ref=image_ref,
        frame_id=bundle.visual.frame_id if bundle.visual is not None else None,
        at_t=bundle.at_t,
    )


def _iter_json_objects(text: str) -> Iterator[Dict[str, Any]]:
    """Top-level JSON objects embedded in ``text``; objects nested in a decoded one are skipped."""
    decoder = json.JSONDecoder()
    index = text.find("{")
    while index != -1:
        try:
            value, end = decoder.raw_decode(text, index)
        except (ValueError, RecursionError):
            value, end = None, index + 1
        if isinstance(value, dict):
            yield value
        index = text.find("{", end)


def _parse_tool_calls(value: Any, raw: Any) -> List[ToolCall]:
    if value is None:
        return []
    if not isinstance(value, list):
        raise ParseFailure("tool_calls is not a list", raw)
    calls = []
    for item in value:
        if not isinstance(item, dict):
            raise ParseFailure("tool call is not an object", raw)
        try:
            calls.append(ToolCall(name=item.get("name"), args=item.get("args") or {}))
        except ValidationError as e:
            raise ParseFailure(f"invalid tool call: {e.errors()[0]['msg']}", raw) from e
    return calls


def _text_field(value: Any) -> str:
    if value is None:
        return ""
    return value if isinstance(value, str) else json.dumps(value, sort_keys=True)


def parse_output(raw: Union[str, bytes]) -> ReasonerOutput:
    """
    Parse backend text into a ReasonerOutput.

    The first top-level JSON object carrying a proactive_score is used; surrounding
    prose and code fences are ignored. A score inside a nested object does not
    count, except when the enclosing object fails to decode. Out-of-range
    integer scores are clamped.

    Raises:
        ParseFailure: no parseable object, or a non-integer score
    """
    text = raw.decode("utf-8", errors="replace") if isinstance(raw, bytes) else str(raw)
    try:
        obj = next((o for o in _iter_json_objects(text) if "proactive_score" in o), None)
    except RecursionError:
        obj = None
    if obj is None:
        raise ParseFailure("no parseable output object", raw)

    score = obj["proactive_score"]
    if isinstance(score, bool) or not isinstance(score, int):
        raise ParseFailure(f"non-integer proactive_score: {score!r}", raw)
    clamped = min(5, max(1, score))
    if clamped != score:
        logger.warning("proactive_score %d out of range, clamped to %d", score, clamped)

    return ReasonerOutput(
        thoughts=_text_field(obj.get("thoughts")),
        proactive_score=clamped,
        tool_calls=_parse_tool_calls(obj.get("tool_calls"), raw),
        assistance=_text_field(obj.get("assistance")),
        raw=text,
    )


def decide_proactive(output: ReasonerOutput, threshold: int, strict: bool = False) -> bool:
    """Score meets the threshold (strictly exceeds it in strict mode)."""
    if strict:
        return output.proactive_score > threshold
    return output.proactive_score >= threshold


def sentinel_output(raw: str = "") -> ReasonerOutput:
    """Silent non-proactive output used when reasoning fails."""
    return ReasonerOutput(thoughts="", proactive_score=1, tool_calls=[], assistance="", raw=raw)


def invoke_and_reason(backend: ReasonerBackend, prompt: PromptBundle, retry: int = 1) -> ReasonerOutput:
    """
    Call the backend and parse its answer.

    Parse failures are retried up to ``retry`` times with a format reminder
    appended to the instructions; the sentinel output is returned after the
    last failure. Transport errors are retried the same number of times.

    Raises:
        BackendUnavailable: the backend failed on every attempt
    """
    attempt_prompt = prompt
    last_raw = ""
    transport_error: Optional[BackendUnavailable] = None
    for attempt in range(retry + 1):
        try:
            last_raw = backend.generate(attempt_prompt)
        except BackendUnavailable as e:
            transport_error = e
            logger.warning("Reasoner backend error (attempt %d/%d): %s", attempt + 1, retry + 1, e)
            continue
        transport_error = None
        try:
            return parse_output(last_raw)
        except ParseFailure as e:
            logger.warning("Unparseable reasoner output at t=%g (attempt %d/%d): %s",
                           prompt.at_t, attempt + 1, retry + 1, e)
            attempt_prompt = prompt.model_copy(
                update={"task_instructions": prompt.task_instructions + "\n\n" + FORMAT_REMINDER}
            )

    if transport_error is not None:
        raise transport_error
    logger.warning("Reasoner output unusable at t=%g, falling back to a non-proactive answer", prompt.at_t)
    return sentinel_output(last_raw)


def _nearest_frame(frames: Sequence[TraceEvent], t: float, window_s: float) -> Optional[TraceEvent]:
    candidates = [f for f in frames if abs(f.t - t) <= window_s]
    if not candidates:
        return None
    return min(candidates, key=lambda f: (abs(f.t - t), f.t))


def export_distillation(
    trace: Trace,
    thought_backend: ReasonerBackend,
    persona_store: PersonaStore,
    bank: ScenarioObjectBank,
    pois: Sequence[Poi],
    cfg,
    detector: Optional[ObjectDetector] = None,
) -> Iterator[DistillationRecord]:
    """
    Build chain-of-thought fine-tuning records from an annotated trace.

    Annotated moments become score-5 records with the annotation's tools;
    ``cfg.distill.negative_ratio`` negatives per positive are drawn from frames
    outside every annotation window and get score 1 with no tools. Records are
    yielded in time order.
    """
    frames = trace.frames()
    annotations = trace.annotations()

    targets = []
    for annotation in annotations:
        frame = _nearest_frame(frames, annotation.t, annotation.payload.window_s)
        if frame is None:
            logger.warning("No frame within %gs of annotation at t=%g, record skipped",
                           annotation.payload.window_s, annotation.t)
            continue
        targets.append((frame, 5, list(annotation.payload.tools)))

    rng = random.Random(cfg.seed)
    if cfg.distill.negative_ratio > 0 and targets:
        outside = [
            f for f in frames
            if all(abs(f.t - a.t) > a.payload.window_s for a in annotations)
        ]
        count = min(len(outside), round(cfg.distill.negative_ratio * len(targets)))
        for frame in rng.sample(outside, count):
            targets.append((frame, 1, []))
    targets.sort(key=lambda item: (item[0].t, -item[1]))

    tracker = SensoryContextTracker(
        pois,
        radius_m=cfg.location.radius_m,
        listing_factor=cfg.location.listing_factor,
        motion_window_s=cfg.motion.window_s,
        motion_threshold=cfg.motion.threshold,
        audio_window_s=cfg.audio.window_s,
    )
    events = iter(trace.events)
    pending: Optional[TraceEvent] = None
    for frame, score, tools in targets:
        if pending is not None and pending.t <= frame.t:
            tracker.observe(pending)
            pending = None
        if pending is None:
            for event in events:
                if event.t > frame.t:
                    pending = event
                    break
                tracker.observe(event)

        location, motion, audio = tracker.snapshot(frame.t)
        visual = extract_coarse_visual_context(frame.payload, detector)
        scenario = bank.predict(visual, cfg.persona.k, cfg.persona.fallback)
        personas = select_personas(cfg.persona.mode, scenario, persona_store, rng)
        bundle = ContextBundle(at_t=frame.t, location=location, motion=motion, audio=audio,
                               visual=visual, personas=personas)
        sensory_text = render_prompt_sensory(bundle, cfg.location.max_pois)
        personas_text = render_personas_text(personas)
        image_ref = frame.payload.image_ref or frame.payload.frame_id

        raw = thought_backend.generate(PromptBundle(
            task_instructions=THOUGHT_INSTRUCTIONS,
            tool_manifest_text="(not used)",
            personas_text=personas_text,
            sensory_text=sensory_text,
            image_ref=frame.payload.image_ref,
            frame_id=frame.payload.frame_id,
            at_t=frame.t,
        ))
        try:
            thoughts = parse_output(raw).thoughts or raw.strip()
        except ParseFailure:
            thoughts = raw.strip()

        yield DistillationRecord(
            image_ref=image_ref,
            sensory_text=sensory_text,
            personas_text=personas_text,
            thoughts=thoughts,
            proactive_score=score,
            tool_calls=tools,
            t=frame.t,
        )
