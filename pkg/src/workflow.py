import json
import logging
import random
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Sequence, Tuple

from langgraph.graph import StateGraph, END

from .backends import ReasonerBackend, make_embedder, make_reasoner_backend
from .config import PipelineConfig
from .context import ObjectDetector, SensoryContextTracker, load_pois
from .delivery import DeliveryGate
from .nodes import ProactiveNodes
from .perception import PerceptionScheduler, cue_mode, tick_times
from .personas import (
    Embedder, PersonaStore, ScenarioObjectBank, load_bank, load_persona_store, personas_text_length,
)
from .reasoner import load_instructions
from .schemas import InvocationRecord, Poi, RunLog, SampleCapture, Trace
from .state import ProactiveState, create_initial_state, get_state_summary
from .tools import FixtureProvider, ProviderSet, ToolRegistry, load_registry
from .trace import load_trace

logger = logging.getLogger(__name__)


class PipelineResources:
    """Everything a replay needs, loaded once at startup."""

    def __init__(
        self,
        trace: Trace,
        registry: ToolRegistry,
        providers: ProviderSet,
        bank: ScenarioObjectBank,
        persona_store: PersonaStore,
        pois: Sequence[Poi],
        backend: ReasonerBackend,
        embedder: Embedder,
        instructions: str,
        detector: Optional[ObjectDetector] = None,
    ):
        self.trace = trace
        self.registry = registry
        self.providers = providers
        self.bank = bank
        self.persona_store = persona_store
        self.pois = list(pois)
        self.backend = backend
        self.embedder = embedder
        self.instructions = instructions
        self.detector = detector

    @classmethod
    def from_config(cls, cfg: PipelineConfig, trace: Optional[Trace] = None) -> "PipelineResources":
        """
        Load trace, manifest, fixtures, bank, personas, POIs and backends.

        Raises whatever the individual loaders raise; callers map those to
        validation or runtime failures.
        """
        paths = cfg.paths
        if trace is None:
            if not paths.trace:
                raise ValueError("paths.trace is not set")
            trace = load_trace(Path(paths.trace), cfg.evaluation.annotation_window_s)
        embedder = make_embedder(cfg.persona.embedder)
        providers = ProviderSet(FixtureProvider.from_file(Path(paths.fixtures)) if paths.fixtures else None)
        return cls(
            trace=trace,
            registry=load_registry(Path(paths.tools)),
            providers=providers,
            bank=ScenarioObjectBank(load_bank(Path(paths.bank), cfg.persona.scenarios), embedder),
            persona_store=load_persona_store(Path(paths.personas), cfg.persona.scenarios),
            pois=load_pois(Path(paths.pois)),
            backend=make_reasoner_backend(cfg.reasoner.backend, cfg.reasoner.model, cfg.reasoner.timeout_s),
            embedder=embedder,
            instructions=load_instructions(cfg.reasoner.instructions_path),
        )


class ProactiveWorkflow:
    """Per-sample pipeline graph: perception, persona retrieval, reasoning, action, delivery."""

    def __init__(self, nodes: ProactiveNodes):
        self.nodes = nodes
        self.graph = self._build_graph()

    def _build_graph(self):
        """Build the LangGraph workflow."""
        graph_builder = StateGraph(ProactiveState)

        graph_builder.add_node("perception", self.nodes.perception_node)
        graph_builder.add_node("persona_retrieval", self.nodes.persona_retrieval_node)
        graph_builder.add_node("reasoning", self.nodes.reasoning_node)
        graph_builder.add_node("action", self.nodes.action_node)
        graph_builder.add_node("delivery", self.nodes.delivery_node)

        graph_builder.set_entry_point("perception")
        graph_builder.add_edge("perception", "persona_retrieval")
        graph_builder.add_edge("persona_retrieval", "reasoning")
        graph_builder.add_conditional_edges(
            "reasoning",
            self._route_from_reasoning,
            {
                "action": "action",
                "end": END,
            },
        )
        graph_builder.add_edge("action", "delivery")
        graph_builder.add_edge("delivery", END)

        return graph_builder.compile()

    def _route_from_reasoning(self, state: ProactiveState) -> Literal["action", "end"]:
        """Only proactive decisions act and reach the user."""
        return "action" if state.get("decided_proactive", False) else "end"

    def run_sample(self, capture: SampleCapture, now: Optional[float] = None,
                   delivery_history=None) -> Dict[str, Any]:
        """
        Run the pipeline for one captured sample.

        Args:
            capture: Frame and contexts captured at the sampling tick
            now: Trace time the result is delivered at
            delivery_history: Earlier delivery records

        Returns:
            Final workflow state
        """
        initial_state = create_initial_state(capture, now, delivery_history)
        result = self.graph.invoke(initial_state)
        logger.debug("Sample state: %s", get_state_summary(result))
        return result


def invocation_record(state: Dict[str, Any], completed_at: float) -> InvocationRecord:
    """Run-log record of one finished pipeline pass."""
    capture: SampleCapture = state["capture"]
    output = state["output"]
    delivery = state.get("delivery")
    personas = state.get("personas", [])
    return InvocationRecord(
        t=capture.t,
        completed_at=completed_at,
        frame_id=capture.frame.frame_id if capture.frame is not None else None,
        scenario=state.get("scenario"),
        persona_count=len(personas),
        persona_chars=personas_text_length(personas),
        proactive_score=output.proactive_score,
        decided_proactive=state.get("decided_proactive", False),
        tool_calls=output.tool_calls,
        tool_results=state.get("tool_results", []),
        assistance=state.get("assistance") or output.assistance,
        delivered=delivery.delivered if delivery else False,
        similarity_to_prev=delivery.similarity_to_prev if delivery else None,
        suppressed_reason=delivery.suppressed_reason if delivery else None,
        error="; ".join(state.get("error_messages", [])) or None,
    )


class TraceReplayer:
    """
    Tick loop over a trace.

    Drives the perception scheduler from the low-cost contexts, hands sampled
    frames to the pipeline graph (one invocation in flight, a latest-wins
    pending slot of depth one) and feeds each result back as a reflection.
    """

    def __init__(self, cfg: PipelineConfig, resources: PipelineResources):
        self.cfg = cfg
        self.resources = resources
        self.nodes = ProactiveNodes(
            cfg,
            resources.registry,
            resources.providers,
            resources.bank,
            resources.persona_store,
            resources.backend,
            resources.embedder,
            instructions=resources.instructions,
            detector=resources.detector,
            rng=random.Random(cfg.seed),
        )
        self.workflow = ProactiveWorkflow(self.nodes)

    def _finish(
        self,
        capture: SampleCapture,
        completed_at: float,
        gate: DeliveryGate,
        scheduler: PerceptionScheduler,
        run: RunLog,
    ) -> None:
        state = self.workflow.run_sample(capture, completed_at, gate.history)
        record = invocation_record(state, completed_at)
        run.invocations.append(record)
        if state.get("delivery") is not None:
            gate.commit(state["delivery"])
            if state["delivery"].delivered:
                logger.info("t=%g delivered: %s", completed_at, state["delivery"].assistance)
        scheduler.enqueue_reflection(record.decided_proactive)

    def run(self) -> RunLog:
        """Replay the whole trace and return the run log."""
        cfg = self.cfg
        trace = self.resources.trace
        sampling = cfg.sampling
        latency = cfg.reasoner.latency_s

        scheduler = PerceptionScheduler.from_config(sampling)
        tracker = SensoryContextTracker(
            self.resources.pois,
            radius_m=cfg.location.radius_m,
            listing_factor=cfg.location.listing_factor,
            motion_window_s=cfg.motion.window_s,
            motion_threshold=cfg.motion.threshold,
            audio_window_s=cfg.audio.window_s,
        )
        gate = DeliveryGate.from_config(cfg.delivery, self.resources.embedder)
        run = RunLog(
            config=cfg.snapshot(),
            duration_s=trace.duration_s,
            all_personas_chars=personas_text_length(self.resources.persona_store.all_personas()),
        )

        in_flight: Optional[Tuple[SampleCapture, float]] = None
        pending: Optional[SampleCapture] = None
        events = trace.events
        cursor = 0

        for now in tick_times(trace.duration_s, sampling.tick_s):
            while cursor < len(events) and events[cursor].t <= now:
                tracker.observe(events[cursor])
                cursor += 1
            location, motion, audio = tracker.snapshot(now)
            cue = cue_mode(location, motion, audio,
                           sampling.use_location, sampling.use_motion, sampling.use_audio)
            decision = scheduler.tick(now, cue)

            if decision.sample:
                run.samples.append(now)
                frame = tracker.latest_frame[1] if tracker.latest_frame is not None else None
                if frame is None:
                    logger.warning("t=%g: sampled with no frame available", now)
                    run.frameless_samples += 1
                capture = SampleCapture(t=now, frame=frame, location=location, motion=motion, audio=audio)
                if in_flight is None:
                    in_flight = (capture, now + latency)
                else:
                    if pending is not None:
                        logger.warning("t=%g: reasoner busy, dropping pending sample from t=%g", now, pending.t)
                        run.dropped_frames += 1
                    pending = capture

            while in_flight is not None and in_flight[1] <= now:
                self._finish(in_flight[0], in_flight[1], gate, scheduler, run)
                in_flight = None
                if pending is not None:
                    in_flight = (pending, now + latency)
                    pending = None

        # Results still in flight at the end of the trace are logged, not fed back.
        while in_flight is not None:
            capture, completed_at = in_flight
            self._finish(capture, completed_at, gate, scheduler, run)
            in_flight = None
            if pending is not None:
                in_flight = (pending, completed_at + latency)
                pending = None

        run.mode_switches = scheduler.mode_switches
        logger.info(
            "Replay done: %d samples, %d invocations, %d delivered, %d dropped",
            len(run.samples), len(run.invocations), len(run.delivered_assistance()), run.dropped_frames,
        )
        return run


def replay(cfg: PipelineConfig, resources: Optional[PipelineResources] = None) -> RunLog:
    """Load resources for ``cfg`` (unless given) and replay its trace."""
    resources = resources or PipelineResources.from_config(cfg)
    return TraceReplayer(cfg, resources).run()


def write_run_log(run: RunLog, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(line + "\n" for line in run.to_lines()), encoding="utf-8")


def read_run_log(path: Path) -> RunLog:
    with open(path, "r", encoding="utf-8") as f:
        return RunLog.from_lines(f)


def write_json(data: Dict[str, Any], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")
