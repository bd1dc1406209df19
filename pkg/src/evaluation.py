"""
Evaluation harness: proactive accuracy, missed detection, tool F1, argument
accuracy, sampling recall and ratio, plus the baseline samplers the
scheduler is compared against.
"""
import logging
from collections import Counter
from math import ceil, isfinite
from typing import Callable, Iterable, List, Optional, Sequence, Set, Tuple

from .config import PipelineConfig
from .context import SensoryContextTracker
from .perception import PerceptionScheduler, tick_times
from .schemas import (
    BaselineResult, EvalReport, MatchCounts, MatchedPair, MatchSet, Poi,
    RunLog, SamplingModeName, ToolCall, Trace,
)
from .tools import ToolRegistry, validate_call

logger = logging.getLogger(__name__)

DEFAULT_BASELINES: Tuple[str, ...] = (
    "periodic-5", "periodic-10", "periodic-20", "periodic-60",
    "motion-trigger", "conversation-trigger", "diff-filter",
)


class EvaluationError(ValueError):
    """Raised when a metric is undefined for its input."""


def match_invocations(run: RunLog, truth: Trace, tolerance_s: float) -> MatchSet:
    """
    Align invocations with annotated moments.

    An annotation is a true positive when a proactive invocation lies within
    +/- tolerance_s; the nearest one (earlier on ties) becomes its pair.
    Invocations inside some annotation window are never counted as FP or TN.
    """
    if tolerance_s <= 0:
        raise EvaluationError("tolerance_s must be > 0")
    annotations = truth.annotations()
    invocations = run.invocations
    if not invocations and not annotations:
        raise EvaluationError("nothing to evaluate")

    match = MatchSet()
    paired = set()
    for annotation in annotations:
        candidates = [
            (abs(inv.t - annotation.t), inv.t, index)
            for index, inv in enumerate(invocations)
            if inv.decided_proactive and abs(inv.t - annotation.t) <= tolerance_s
        ]
        if not candidates:
            match.fn += 1
            continue
        _, _, index = min(candidates)
        paired.add(index)
        match.tp += 1
        match.pairs.append(MatchedPair(
            annotation_t=annotation.t,
            invocation_t=invocations[index].t,
            predicted=invocations[index].tool_calls,
            truth=annotation.payload.tools,
        ))

    for index, inv in enumerate(invocations):
        in_window = any(abs(inv.t - a.t) <= tolerance_s for a in annotations)
        if in_window:
            continue
        if inv.decided_proactive and index not in paired:
            match.fp += 1
        elif not inv.decided_proactive:
            match.tn += 1
    return match


def acc_p(match: MatchSet) -> float:
    total = match.tp + match.tn + match.fp + match.fn
    if total == 0:
        raise EvaluationError("acc_p undefined: no decisions")
    return (match.tp + match.tn) / total


def missed_detection(match: MatchSet) -> float:
    if match.tp + match.fn == 0:
        raise EvaluationError("missed detection undefined: no annotations")
    return match.fn / (match.tp + match.fn)


def _pair_f1(predicted: Set[str], truth: Set[str]) -> float:
    if not predicted and not truth:
        return 1.0
    hits = len(predicted & truth)
    if hits == 0:
        return 0.0
    precision = hits / len(predicted)
    recall = hits / len(truth)
    return 2 * precision * recall / (precision + recall)


def tool_f1(pairs: Sequence[Tuple[Iterable[str], Iterable[str]]]) -> float:
    """Macro F1 of predicted vs. ground-truth tool-name sets over matched pairs."""
    if not pairs:
        raise EvaluationError("tool_f1 undefined: no matched pairs")
    return sum(_pair_f1(set(p), set(t)) for p, t in pairs) / len(pairs)


def acc_args(
    pairs: Sequence[Tuple[Sequence[ToolCall], Sequence[ToolCall]]],
    registry: ToolRegistry,
    strict: bool = True,
) -> float:
    """Fraction of pairs whose calls match exactly and all validate."""
    if not pairs:
        raise EvaluationError("acc_args undefined: no matched pairs")
    correct = 0
    for predicted, truth in pairs:
        same = Counter(c.canonical_key() for c in predicted) == Counter(c.canonical_key() for c in truth)
        if same and all(validate_call(c, registry, strict).ok for c in predicted):
            correct += 1
    return correct / len(pairs)


def recall_sampling(samples: Sequence[float], truth: Trace, tolerance_s: float) -> float:
    """Fraction of annotations with a visual sample within +/- tolerance_s."""
    if tolerance_s <= 0:
        raise EvaluationError("tolerance_s must be > 0")
    annotations = truth.annotations()
    if not annotations:
        raise EvaluationError("recall undefined: no annotations")
    hit = sum(1 for a in annotations if any(abs(s - a.t) <= tolerance_s for s in samples))
    return hit / len(annotations)


def sampling_ratio(samples: Sequence[float], duration_s: float) -> float:
    """Sample count relative to 1 s periodic sampling over [0, duration)."""
    if not isfinite(duration_s) or duration_s <= 0:
        raise EvaluationError("duration_s must be a finite number > 0")
    return len(samples) / ceil(duration_s)


def jaccard_distance(a: Set[str], b: Set[str]) -> float:
    union = a | b
    if not union:
        return 0.0
    return 1.0 - len(a & b) / len(union)


def _replay_cues(
    trace: Trace,
    tick_s: float,
    tracker: SensoryContextTracker,
    step: Callable[[float, SensoryContextTracker], None],
) -> None:
    events = trace.events
    cursor = 0
    for now in tick_times(trace.duration_s, tick_s):
        while cursor < len(events) and events[cursor].t <= now:
            tracker.observe(events[cursor])
            cursor += 1
        step(now, tracker)


def run_baseline(name: str, trace: Trace, cfg=None, pois: Sequence[Poi] = ()) -> List[float]:
    """
    Sample times of a baseline sampler over a trace.

    periodic-<x>: every x seconds. motion-trigger / conversation-trigger: the
    dual-rate scheduler driven by a single cue. diff-filter: 1 s candidates
    kept when the object set changed by more than the Jaccard threshold.
    """
    cfg = cfg or PipelineConfig()
    tick_s = cfg.sampling.tick_s
    tracker = SensoryContextTracker(
        pois,
        radius_m=cfg.location.radius_m,
        listing_factor=cfg.location.listing_factor,
        motion_window_s=cfg.motion.window_s,
        motion_threshold=cfg.motion.threshold,
        audio_window_s=cfg.audio.window_s,
    )
    samples: List[float] = []

    if name.startswith("periodic-"):
        try:
            interval = float(name.split("-", 1)[1])
        except ValueError as e:
            raise EvaluationError(f"unknown baseline '{name}'") from e
        scheduler = PerceptionScheduler(interval, interval, use_reflection=False)
        for now in tick_times(trace.duration_s, tick_s):
            if scheduler.tick(now, "low").sample:
                samples.append(now)
        return samples

    if name in ("motion-trigger", "conversation-trigger"):
        scheduler = PerceptionScheduler(
            cfg.sampling.high_interval_s, cfg.sampling.low_interval_s, use_reflection=False
        )

        def cue(now: float, tr: SensoryContextTracker) -> SamplingModeName:
            if name == "motion-trigger":
                return "high" if tr.motion(now).state == "moving" else "low"
            return "high" if tr.audio(now).conversation_active else "low"

        def step(now: float, tr: SensoryContextTracker) -> None:
            if scheduler.tick(now, cue(now, tr)).sample:
                samples.append(now)

        _replay_cues(trace, tick_s, tracker, step)
        return samples

    if name == "diff-filter":
        threshold = cfg.evaluation.diff_threshold
        previous: List[Optional[Set[str]]] = [None]

        def step(now: float, tr: SensoryContextTracker) -> None:
            frame = tr.latest_frame[1] if tr.latest_frame else None
            current = set(frame.objects or ()) if frame else set()
            if previous[0] is None or jaccard_distance(previous[0], current) > threshold:
                samples.append(now)
            previous[0] = current

        _replay_cues(trace, 1.0, tracker, step)
        return samples

    raise EvaluationError(f"unknown baseline '{name}'")


def _or_zero(fn: Callable[[], float], label: str) -> float:
    try:
        return fn()
    except EvaluationError as e:
        logger.info("%s reported as 0.0: %s", label, e)
        return 0.0


def evaluate_run(
    run: RunLog,
    truth: Trace,
    registry: ToolRegistry,
    tolerance_s: float = 5.0,
    cfg=None,
    pois: Sequence[Poi] = (),
    baselines: Sequence[str] = DEFAULT_BASELINES,
) -> EvalReport:
    """
    Full metric report of one run, with baseline samplers on the same trace.

    Raises:
        EvaluationError: run and trace durations differ, or nothing to evaluate
    """
    if abs(run.duration_s - truth.duration_s) > 1e-6:
        raise EvaluationError(
            f"duration mismatch: run {run.duration_s:g}s vs trace {truth.duration_s:g}s"
        )
    strict = cfg.tools.strict_args if cfg is not None else True
    match = match_invocations(run, truth, tolerance_s)
    name_pairs = [([c.name for c in p.predicted], [c.name for c in p.truth]) for p in match.pairs]
    call_pairs = [(p.predicted, p.truth) for p in match.pairs]

    retrieved = [inv.persona_chars for inv in run.invocations if inv.persona_chars > 0]
    reduction = None
    if retrieved and run.all_personas_chars > 0:
        reduction = run.all_personas_chars / (sum(retrieved) / len(retrieved))

    baseline_results = []
    has_annotations = bool(truth.annotations())
    for name in baselines:
        samples = run_baseline(name, truth, cfg, pois)
        baseline_results.append(BaselineResult(
            name=name,
            samples=len(samples),
            recall=recall_sampling(samples, truth, tolerance_s) if has_annotations else 0.0,
            sampling_ratio=sampling_ratio(samples, truth.duration_s) if truth.duration_s > 0 else 0.0,
        ))

    delivered = sum(1 for inv in run.invocations if inv.delivered)
    suppressed = sum(1 for inv in run.invocations if inv.suppressed_reason and not inv.delivered)
    return EvalReport(
        acc_p=_or_zero(lambda: acc_p(match), "acc_p"),
        md=_or_zero(lambda: missed_detection(match), "md"),
        f1=_or_zero(lambda: tool_f1(name_pairs), "f1"),
        acc_args=_or_zero(lambda: acc_args(call_pairs, registry, strict), "acc_args"),
        recall=_or_zero(lambda: recall_sampling(run.samples, truth, tolerance_s), "recall"),
        sampling_ratio=_or_zero(lambda: sampling_ratio(run.samples, truth.duration_s), "sampling_ratio"),
        counts=MatchCounts(tp=match.tp, fp=match.fp, tn=match.tn, fn=match.fn, matched_pairs=len(match.pairs)),
        tolerance_s=tolerance_s,
        invocations=len(run.invocations),
        delivered=delivered,
        suppressed=suppressed,
        dropped_frames=run.dropped_frames,
        persona_length_reduction=reduction,
        baselines=baseline_results,
    )
