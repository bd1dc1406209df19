"""
State management for the per-sample proactive pipeline using LangGraph.
"""
from typing import TypedDict, Annotated, List, Optional, Dict, Any
from typing_extensions import NotRequired
import operator

from .schemas import (
    CoarseVisualContext, ContextBundle, DeliveryRecord, Persona,
    PromptBundle, ReasonerOutput, SampleCapture, ToolResult,
)


class ProactiveState(TypedDict):
    """
    State schema for one pass of the proactive pipeline.
    This defines the structure of data that flows through the LangGraph nodes.
    """

    # Input: what the scheduler captured, and when the result is delivered
    capture: SampleCapture
    now: float
    delivery_history: List[DeliveryRecord]

    # Perception
    visual: NotRequired[Optional[CoarseVisualContext]]
    bundle: NotRequired[Optional[ContextBundle]]

    # Persona retrieval
    scenario: NotRequired[Optional[str]]
    personas: NotRequired[List[Persona]]

    # Reasoning
    prompt: NotRequired[Optional[PromptBundle]]
    output: NotRequired[Optional[ReasonerOutput]]
    decided_proactive: NotRequired[bool]
    backend_error: NotRequired[Optional[str]]

    # Tool action
    tool_results: Annotated[List[ToolResult], operator.add]
    assistance: NotRequired[str]

    # Delivery
    delivery: NotRequired[Optional[DeliveryRecord]]

    # Workflow control
    current_node: NotRequired[str]
    completed_nodes: Annotated[List[str], operator.add]
    error_messages: Annotated[List[str], operator.add]

    # Tracing
    node_execution_times: NotRequired[Dict[str, float]]
    total_processing_time: NotRequired[float]


def create_initial_state(
    capture: SampleCapture,
    now: Optional[float] = None,
    delivery_history: Optional[List[DeliveryRecord]] = None,
) -> ProactiveState:
    """
    Create initial state for one sample.

    Args:
        capture: Frame and low-cost contexts captured at the sampling tick
        now: Trace time the result is delivered at (defaults to the sample time)
        delivery_history: Earlier delivery records, read-only for the graph

    Returns:
        Initial state dictionary
    """
    return ProactiveState(
        capture=capture,
        now=capture.t if now is None else now,
        delivery_history=list(delivery_history or []),
        visual=None,
        bundle=None,
        scenario=None,
        personas=[],
        prompt=None,
        output=None,
        decided_proactive=False,
        backend_error=None,
        tool_results=[],
        assistance="",
        delivery=None,
        current_node="start",
        completed_nodes=[],
        error_messages=[],
        node_execution_times={},
        total_processing_time=0.0,
    )


def update_node_status(state: ProactiveState, node_name: str, execution_time: float = 0.0) -> Dict[str, Any]:
    """
    Update state with node completion status.

    Args:
        state: Current workflow state
        node_name: Name of the completed node
        execution_time: Time taken to execute the node

    Returns:
        State updates to apply
    """
    updates: Dict[str, Any] = {
        "current_node": node_name,
        "completed_nodes": [node_name],
    }
    if execution_time > 0:
        times = dict(state.get("node_execution_times", {}))
        times[node_name] = execution_time
        updates["node_execution_times"] = times
        updates["total_processing_time"] = state.get("total_processing_time", 0.0) + execution_time
    return updates


def get_state_summary(state: ProactiveState) -> Dict[str, Any]:
    """Summary of a pipeline state for debug logging."""
    output = state.get("output")
    delivery = state.get("delivery")
    return {
        "t": state["capture"].t,
        "current_node": state.get("current_node"),
        "completed_nodes": list(state.get("completed_nodes", [])),
        "scenario": state.get("scenario"),
        "persona_count": len(state.get("personas", [])),
        "proactive_score": output.proactive_score if output else None,
        "decided_proactive": state.get("decided_proactive", False),
        "tool_results": len(state.get("tool_results", [])),
        "delivered": delivery.delivered if delivery else False,
        "error_count": len(state.get("error_messages", [])),
        "total_processing_time": state.get("total_processing_time", 0.0),
    }
