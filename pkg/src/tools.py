"""
Tool registry, call validation and execution for the proactive agent.

Retrieval tools run against pluggable providers (fixture-backed by default);
execution tools are never run automatically and always come back pending the
user's confirmation.
"""
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Protocol

from pydantic import ValidationError

from .schemas import CallValidation, ToolCall, ToolResult, ToolSpec

logger = logging.getLogger(__name__)


class RegistryError(ValueError):
    """Raised for malformed tool manifests or fixture files."""


class ToolRegistry:
    """Registry of tools available to the agent."""

    def __init__(self, specs: Iterable[ToolSpec] = ()):
        self._specs: Dict[str, ToolSpec] = {}
        for spec in specs:
            self.register(spec)

    def register(self, spec: ToolSpec) -> None:
        if spec.name in self._specs:
            raise RegistryError(f"duplicate tool name '{spec.name}'")
        self._specs[spec.name] = spec

    def get(self, name: str) -> Optional[ToolSpec]:
        return self._specs.get(name)

    @property
    def specs(self) -> List[ToolSpec]:
        return list(self._specs.values())

    def names(self) -> List[str]:
        return list(self._specs)

    def __len__(self) -> int:
        return len(self._specs)

    def describe(self) -> str:
        """Tool Set section text: one name/description/arguments block per tool."""
        blocks = []
        for spec in self._specs.values():
            lines = [f"- {spec.name} [{spec.kind}]: {spec.description}"]
            if spec.args:
                for arg in spec.args:
                    flag = "required" if arg.required else "optional"
                    lines.append(f"    * {arg.key} ({flag}): {arg.description}")
            else:
                lines.append("    * (no arguments)")
            blocks.append("\n".join(lines))
        return "\n".join(blocks)


def load_registry(manifest: Path) -> ToolRegistry:
    """
    Load a tool manifest (one JSON object per line).

    Raises:
        RegistryError: duplicate name, missing kind or unknown kind
    """
    registry = ToolRegistry()
    with open(manifest, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise RegistryError(f"{manifest}:{line_no}: malformed line: {e.msg}") from e
            if "kind" not in record:
                raise RegistryError(f"{manifest}:{line_no}: missing kind")
            if record["kind"] not in ("retrieval", "execution"):
                raise RegistryError(f"{manifest}:{line_no}: unknown kind '{record['kind']}'")
            try:
                spec = ToolSpec.model_validate(record)
            except ValidationError as e:
                raise RegistryError(f"{manifest}:{line_no}: invalid tool spec: {e}") from e
            registry.register(spec)
    logger.debug("Loaded %d tools from %s", len(registry), manifest)
    return registry


def validate_call(call: ToolCall, registry: ToolRegistry, strict: bool = True) -> CallValidation:
    """Check tool name, required arguments and (in strict mode) unknown arguments."""
    spec = registry.get(call.name)
    if spec is None:
        return CallValidation(ok=False, errors=[f"unknown tool: {call.name}"])

    errors = []
    known = {arg.key for arg in spec.args}
    for arg in spec.args:
        if arg.required and arg.key not in call.args:
            errors.append(f"missing required arg: {arg.key}")
    if strict:
        for key in sorted(set(call.args) - known):
            errors.append(f"unknown arg: {key}")
    return CallValidation(ok=not errors, errors=errors)


class ToolProvider(Protocol):
    """Answers retrieval tool calls; raises LookupError when it has no answer."""

    def fetch(self, call: ToolCall) -> str:
        ...


class FixtureProvider:
    """Offline provider keyed by tool name plus key-sorted arguments."""

    def __init__(self, exact: Optional[Dict[str, str]] = None, defaults: Optional[Dict[str, str]] = None):
        self.exact = exact or {}
        self.defaults = defaults or {}

    @classmethod
    def from_file(cls, path: Path) -> "FixtureProvider":
        provider = cls()
        with open(path, "r", encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                record = json.loads(line)
                if "tool" not in record:
                    raise RegistryError(f"{path}:{line_no}: fixture without tool")
                if "default" in record:
                    provider.defaults[record["tool"]] = str(record["default"])
                else:
                    call = ToolCall(name=record["tool"], args=record.get("args", {}))
                    provider.exact[call.canonical_key()] = str(record["payload"])
        return provider

    def fetch(self, call: ToolCall) -> str:
        key = call.canonical_key()
        if key in self.exact:
            return self.exact[key]
        if call.name in self.defaults:
            return self.defaults[call.name]
        raise LookupError(f"no fixture for {call.name} {json.dumps(call.args, sort_keys=True)}")


class ProviderSet:
    """Per-tool providers with a fallback for every other tool."""

    def __init__(self, default: Optional[ToolProvider] = None, overrides: Optional[Dict[str, ToolProvider]] = None):
        self.default = default or FixtureProvider()
        self.overrides = dict(overrides or {})

    def for_tool(self, name: str) -> ToolProvider:
        return self.overrides.get(name, self.default)


def execute(
    call: ToolCall,
    registry: ToolRegistry,
    providers: ProviderSet,
    strict: bool = True,
) -> ToolResult:
    """
    Run one tool call.

    Retrieval tools are looked up through their provider; execution tools
    only ever return pending_confirmation.
    """
    validation = validate_call(call, registry, strict)
    if not validation.ok:
        return ToolResult(name=call.name, status="error", payload="; ".join(validation.errors))

    spec = registry.get(call.name)
    if spec.kind == "execution":
        return ToolResult(
            name=call.name,
            status="pending_confirmation",
            payload=f"{call.name} requires user confirmation",
        )

    try:
        payload = providers.for_tool(call.name).fetch(call)
    except LookupError as e:
        logger.warning("Tool %s: %s", call.name, e)
        return ToolResult(name=call.name, status="error", payload=str(e))
    return ToolResult(name=call.name, status="ok", payload=payload)


def compose_assistance(text: str, results: Iterable[ToolResult]) -> str:
    """Reasoner assistance followed by the tool outcomes the user should see."""
    parts = [text.strip()] if text.strip() else []
    for result in results:
        if result.status == "ok":
            parts.append(f"[{result.name}: {result.payload}]")
        elif result.status == "pending_confirmation":
            parts.append(f"[{result.name} awaiting confirmation]")
        else:
            logger.info("Tool %s left out of the assistance: %s", result.name, result.payload)
    return " ".join(parts)
