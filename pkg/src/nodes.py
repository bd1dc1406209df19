import logging
import random
import time
from typing import Dict, Any, Optional

from .backends import BackendUnavailable, ReasonerBackend
from .config import PipelineConfig
from .context import ContextError, ObjectDetector, extract_coarse_visual_context
from .delivery import gate
from .personas import Embedder, PersonaStore, RetrievalError, ScenarioObjectBank, select_personas
from .reasoner import DEFAULT_INSTRUCTIONS, assemble_prompt, decide_proactive, invoke_and_reason, sentinel_output
from .schemas import ContextBundle, DeliveryRecord
from .state import ProactiveState, update_node_status
from .tools import ProviderSet, ToolRegistry, compose_assistance, execute

logger = logging.getLogger(__name__)


class ProactiveNodes:
    """Collection of nodes for the per-sample proactive pipeline."""

    def __init__(
        self,
        cfg: PipelineConfig,
        registry: ToolRegistry,
        providers: ProviderSet,
        bank: ScenarioObjectBank,
        persona_store: PersonaStore,
        backend: ReasonerBackend,
        embedder: Embedder,
        instructions: str = DEFAULT_INSTRUCTIONS,
        detector: Optional[ObjectDetector] = None,
        rng: Optional[random.Random] = None,
    ):
        self.cfg = cfg
        self.registry = registry
        self.providers = providers
        self.bank = bank
        self.persona_store = persona_store
        self.backend = backend
        self.embedder = embedder
        self.instructions = instructions
        self.detector = detector
        self.rng = rng or random.Random(cfg.seed)

    def perception_node(self, state: ProactiveState) -> Dict[str, Any]:
        """
        Node turning the captured frame into a coarse visual context and
        bundling it with the low-cost contexts.
        """
        start_time = time.time()
        node_name = "perception"
        capture = state["capture"]
        errors = []

        visual = None
        if capture.frame is not None:
            try:
                visual = extract_coarse_visual_context(capture.frame, self.detector)
            except (ContextError, BackendUnavailable) as e:
                logger.warning("t=%g: no visual context: %s", capture.t, e)
                errors.append(f"Perception error: {e}")

        bundle = ContextBundle(
            at_t=capture.t,
            location=capture.location,
            motion=capture.motion,
            audio=capture.audio,
            visual=visual,
        )
        return {
            "visual": visual,
            "bundle": bundle,
            "error_messages": errors,
            **update_node_status(state, node_name, time.time() - start_time),
        }

    def persona_retrieval_node(self, state: ProactiveState) -> Dict[str, Any]:
        """Node predicting the scenario and retrieving its persona group."""
        start_time = time.time()
        node_name = "persona_retrieval"
        persona_cfg = self.cfg.persona
        visual = state.get("visual")

        try:
            if visual is not None:
                scenario = self.bank.predict(visual, persona_cfg.k, persona_cfg.fallback)
            else:
                scenario = persona_cfg.fallback
            personas = select_personas(persona_cfg.mode, scenario, self.persona_store, self.rng)
            error_messages = []
        except (RetrievalError, BackendUnavailable) as e:
            logger.warning("t=%g: persona retrieval failed: %s", state["capture"].t, e)
            scenario, personas = persona_cfg.fallback, []
            error_messages = [f"Persona retrieval error: {e}"]

        bundle = state["bundle"].model_copy(update={"personas": personas})
        return {
            "scenario": scenario,
            "personas": personas,
            "bundle": bundle,
            "error_messages": error_messages,
            **update_node_status(state, node_name, time.time() - start_time),
        }

    def reasoning_node(self, state: ProactiveState) -> Dict[str, Any]:
        """Node assembling the prompt, calling the reasoner and applying the threshold."""
        start_time = time.time()
        node_name = "reasoning"
        reasoner_cfg = self.cfg.reasoner
        capture = state["capture"]

        prompt = assemble_prompt(
            state["bundle"],
            state.get("personas", []),
            self.registry,
            instructions=self.instructions,
            max_pois=self.cfg.location.max_pois,
            image_ref=capture.frame.image_ref if capture.frame is not None else None,
        )
        backend_error = None
        try:
            output = invoke_and_reason(self.backend, prompt, reasoner_cfg.retry)
        except BackendUnavailable as e:
            logger.error("t=%g: reasoner unavailable, using a non-proactive answer: %s", capture.t, e)
            backend_error = str(e)
            output = sentinel_output()

        decided = decide_proactive(output, reasoner_cfg.threshold, reasoner_cfg.strict_threshold)
        return {
            "prompt": prompt,
            "output": output,
            "decided_proactive": decided,
            "backend_error": backend_error,
            "error_messages": [f"Reasoner error: {backend_error}"] if backend_error else [],
            **update_node_status(state, node_name, time.time() - start_time),
        }

    def action_node(self, state: ProactiveState) -> Dict[str, Any]:
        """Node running retrieval tools and gating execution tools behind confirmation."""
        start_time = time.time()
        node_name = "action"
        output = state["output"]

        results = [
            execute(call, self.registry, self.providers, self.cfg.tools.strict_args)
            for call in output.tool_calls
        ]
        return {
            "tool_results": results,
            "assistance": compose_assistance(output.assistance, results),
            **update_node_status(state, node_name, time.time() - start_time),
        }

    def delivery_node(self, state: ProactiveState) -> Dict[str, Any]:
        """Node applying the temporal constraint to the composed assistance."""
        start_time = time.time()
        node_name = "delivery"
        delivery_cfg = self.cfg.delivery

        try:
            record = gate(
                state.get("assistance", ""),
                state["delivery_history"],
                state["now"],
                delivery_cfg.sim_threshold,
                delivery_cfg.window_s,
                self.embedder,
                delivery_cfg.mode,
            )
            error_messages = []
        except BackendUnavailable as e:
            logger.warning("t=%g: similarity check failed, assistance withheld: %s", state["now"], e)
            record = DeliveryRecord(
                t=state["now"],
                assistance=state.get("assistance", ""),
                delivered=False,
                suppressed_reason=f"similarity check failed: {e}",
            )
            error_messages = [f"Delivery error: {e}"]

        return {
            "delivery": record,
            "error_messages": error_messages,
            **update_node_status(state, node_name, time.time() - start_time),
        }
