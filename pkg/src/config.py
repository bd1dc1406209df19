"""
Configuration settings for the proactive trace-replay pipeline.
"""
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import colorlog
from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, Field, ValidationError, model_validator

from .schemas import DEFAULT_SCENARIOS

# Load environment variables
load_dotenv()


class ConfigError(ValueError):
    """Raised when a pipeline config file is malformed or references missing files."""


class Config:
    """Process-level configuration read from the environment."""

    # API Keys
    GEMINI_API_KEY: Optional[str] = os.getenv("GEMINI_API_KEY")
    GOOGLE_API_KEY: Optional[str] = os.getenv("GOOGLE_API_KEY")  # Alternative name
    REMOTE_API_KEY: Optional[str] = os.getenv("PROACTIVE_REMOTE_API_KEY")

    # Logging
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

    # Data
    DATA_DIR: Path = Path(os.getenv("PROACTIVE_DATA_DIR", Path(__file__).resolve().parent.parent / "data"))

    # Remote backends
    REMOTE_MODEL: str = os.getenv("PROACTIVE_REMOTE_MODEL", "qwen2.5-vl-3b-instruct")
    EMBEDDING_MODEL: str = os.getenv("PROACTIVE_EMBEDDING_MODEL", "all-MiniLM-L6-v2")

    @classmethod
    def get_gemini_api_key(cls) -> str:
        """Get the Gemini API key, trying both environment variable names."""
        api_key = cls.GEMINI_API_KEY or cls.GOOGLE_API_KEY
        if not api_key:
            raise ValueError(
                "No Gemini API key found. Please set GEMINI_API_KEY or GOOGLE_API_KEY environment variable."
            )
        return api_key

    @classmethod
    def default_path(cls, name: str) -> Path:
        """Path of a file shipped in the data directory."""
        return cls.DATA_DIR / name


# Global config instance
config = Config()

_LOG_FORMAT = "%(log_color)s%(asctime)s %(levelname)-8s%(reset)s %(name)s: %(message)s"


def setup_logging(level: Optional[str] = None) -> None:
    """Install a single colored stream handler on the root logger."""
    root = logging.getLogger()
    root.setLevel((level or config.LOG_LEVEL).upper())
    if any(getattr(h, "_proactive_replay", False) for h in root.handlers):
        return
    handler = colorlog.StreamHandler()
    handler.setFormatter(
        colorlog.ColoredFormatter(
            _LOG_FORMAT,
            datefmt="%H:%M:%S",
            log_colors={
                "DEBUG": "cyan",
                "INFO": "green",
                "WARNING": "yellow",
                "ERROR": "red",
                "CRITICAL": "bold_red",
            },
        )
    )
    handler._proactive_replay = True
    root.addHandler(handler)


class SamplingConfig(BaseModel):
    """Dual-mode visual sampling and agent reflection."""
    high_interval_s: float = Field(default=5.0, gt=0, description="Sampling interval in high mode")
    low_interval_s: float = Field(default=60.0, gt=0, description="Sampling interval in low mode")
    tick_s: float = Field(default=1.0, gt=0, description="Scheduler evaluation cadence")
    reflection_ttl_s: float = Field(default=60.0, gt=0, description="Validity period of an agent reflection")
    combine: Literal["or", "reflection_priority"] = Field(
        default="or", description="How low-cost cues and reflection are combined"
    )
    use_location: bool = Field(default=True, description="POI proximity triggers high mode")
    use_motion: bool = Field(default=True, description="Moving triggers high mode")
    use_audio: bool = Field(default=True, description="Conversation triggers high mode")
    use_reflection: bool = Field(default=True, description="Reasoner output feeds back into the mode")

    @model_validator(mode="after")
    def _intervals_ordered(self) -> "SamplingConfig":
        if self.high_interval_s > self.low_interval_s:
            raise ValueError("sampling.high_interval_s must not exceed sampling.low_interval_s")
        return self


class LocationConfig(BaseModel):
    radius_m: float = Field(default=100.0, gt=0, description="POI proximity radius")
    listing_factor: float = Field(default=5.0, gt=0, description="POIs within radius_m * factor are listed")
    max_pois: int = Field(default=5, ge=0, description="Most POIs rendered into the location context")


class MotionConfig(BaseModel):
    window_s: float = Field(default=2.0, gt=0, description="Sliding accelerometer window")
    threshold: float = Field(default=0.5, ge=0, description="Stddev of |accel| above which the user is moving")


class AudioConfig(BaseModel):
    window_s: float = Field(default=30.0, gt=0, description="Transcript retention window")


class PersonaConfig(BaseModel):
    k: int = Field(default=30, gt=0, description="Top-k bank entries used for the scenario vote")
    fallback: str = Field(default="others", description="Scenario used when no objects are detected")
    mode: Literal["adaptive", "all", "random", "none"] = Field(default="adaptive")
    embedder: str = Field(default="bow", description="bow | remote:<url> | gemini:<model>")
    scenarios: List[str] = Field(default_factory=lambda: list(DEFAULT_SCENARIOS))

    @model_validator(mode="after")
    def _fallback_known(self) -> "PersonaConfig":
        if self.fallback not in self.scenarios:
            raise ValueError(f"persona.fallback '{self.fallback}' is not a configured scenario")
        return self


class ReasonerConfig(BaseModel):
    backend: str = Field(default="scripted:scripted.jsonl", description="scripted:<path> | remote:<url> | gemini:<model>")
    threshold: int = Field(default=3, ge=1, le=5, description="Proactive score threshold")
    strict_threshold: bool = Field(default=False, description="Treat 'exceeds' as > instead of >=")
    retry: int = Field(default=1, ge=0, description="Retries after a parse failure")
    timeout_s: float = Field(default=30.0, gt=0)
    model: Optional[str] = Field(default=None, description="Model name sent to remote backends")
    latency_s: float = Field(default=0.0, ge=0, description="Simulated reasoning latency in trace time")
    instructions_path: Optional[str] = Field(default=None, description="Replacement task-instruction text")


class DeliveryConfig(BaseModel):
    sim_threshold: float = Field(default=0.5, ge=0, le=1)
    window_s: float = Field(default=300.0, gt=0)
    mode: Literal["window", "consecutive"] = Field(default="window")


class ToolsConfig(BaseModel):
    strict_args: bool = Field(default=True, description="Unknown arguments are validation errors")


class EvaluationConfig(BaseModel):
    tolerance_s: float = Field(default=5.0, gt=0)
    annotation_window_s: float = Field(default=5.0, gt=0, description="Default annotation window")
    gap_threshold_s: float = Field(default=5.0, gt=0, description="validate_trace gap reporting threshold")
    diff_threshold: float = Field(default=0.5, ge=0, le=1, description="Jaccard distance for the diff-filter baseline")


class DistillConfig(BaseModel):
    negative_ratio: float = Field(default=0.0, ge=0, description="Negative records per positive record")
    thought_backend: Optional[str] = Field(default=None, description="Backend describing frames; defaults to reasoner.backend")


class PathsConfig(BaseModel):
    trace: Optional[str] = None
    personas: str = "personas.jsonl"
    bank: str = "bank.jsonl"
    pois: str = "pois.jsonl"
    tools: str = "tools.jsonl"
    fixtures: Optional[str] = "fixtures.jsonl"


class PipelineConfig(BaseModel):
    """All run-level settings."""
    seed: int = 42
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)
    location: LocationConfig = Field(default_factory=LocationConfig)
    motion: MotionConfig = Field(default_factory=MotionConfig)
    audio: AudioConfig = Field(default_factory=AudioConfig)
    persona: PersonaConfig = Field(default_factory=PersonaConfig)
    reasoner: ReasonerConfig = Field(default_factory=ReasonerConfig)
    delivery: DeliveryConfig = Field(default_factory=DeliveryConfig)
    tools: ToolsConfig = Field(default_factory=ToolsConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    distill: DistillConfig = Field(default_factory=DistillConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)

    def snapshot(self) -> Dict[str, Any]:
        """Deterministic, machine-independent view written into run logs."""
        data = self.model_dump(mode="json", exclude={"paths"})
        data["paths"] = {
            key: (Path(value).name if value else None)
            for key, value in self.paths.model_dump().items()
        }
        backend = data["reasoner"]["backend"]
        if backend.startswith("scripted:"):
            data["reasoner"]["backend"] = "scripted:" + Path(backend.split(":", 1)[1]).name
        return data


def _nest(flat: Dict[str, Optional[str]]) -> Dict[str, Any]:
    """Turn dotted keys into nested sections."""
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        if value is None:
            continue
        parts = key.split(".")
        node = nested
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        leaf = parts[-1]
        if leaf == "scenarios":
            node[leaf] = [s.strip() for s in value.split(",") if s.strip()]
        else:
            node[leaf] = value
    return nested


def _resolve(base: Path, value: Optional[str]) -> Optional[str]:
    if value is None:
        return None
    path = Path(value)
    return str(path if path.is_absolute() else (base / path))


def resolve_paths(cfg: PipelineConfig, base: Path, check: bool = True) -> PipelineConfig:
    """Resolve relative data paths against ``base`` and check they exist."""
    paths = cfg.paths.model_copy(
        update={key: _resolve(base, value) for key, value in cfg.paths.model_dump().items()}
    )
    reasoner = cfg.reasoner
    updates: Dict[str, Any] = {}
    if reasoner.backend.startswith("scripted:"):
        updates["backend"] = "scripted:" + _resolve(base, reasoner.backend.split(":", 1)[1])
    if reasoner.instructions_path:
        updates["instructions_path"] = _resolve(base, reasoner.instructions_path)
    if updates:
        reasoner = reasoner.model_copy(update=updates)
    distill = cfg.distill
    if distill.thought_backend and distill.thought_backend.startswith("scripted:"):
        distill = distill.model_copy(
            update={"thought_backend": "scripted:" + _resolve(base, distill.thought_backend.split(":", 1)[1])}
        )
    resolved = cfg.model_copy(update={"paths": paths, "reasoner": reasoner, "distill": distill})

    if check:
        referenced = [v for v in paths.model_dump().values() if v]
        if resolved.reasoner.backend.startswith("scripted:"):
            referenced.append(resolved.reasoner.backend.split(":", 1)[1])
        if resolved.reasoner.instructions_path:
            referenced.append(resolved.reasoner.instructions_path)
        thought_backend = resolved.distill.thought_backend
        if thought_backend and thought_backend.startswith("scripted:"):
            referenced.append(thought_backend.split(":", 1)[1])
        missing = [p for p in referenced if not Path(p).exists()]
        if missing:
            raise ConfigError(f"Referenced files do not exist: {', '.join(missing)}")
    return resolved


def load_pipeline_config(path: Path, check: bool = True) -> PipelineConfig:
    """
    Load a pipeline config from a flat key=value file or a JSON document.

    Args:
        path: Config file path
        check: Whether to require every referenced file to exist

    Returns:
        Validated PipelineConfig with resolved paths
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")

    try:
        if path.suffix == ".json":
            raw = json.loads(path.read_text(encoding="utf-8"))
        else:
            raw = _nest(dotenv_values(path))
        cfg = PipelineConfig.model_validate(raw)
    except (ValidationError, json.JSONDecodeError) as e:
        raise ConfigError(f"Invalid config {path}: {e}") from e

    return resolve_paths(cfg, path.resolve().parent, check=check)
