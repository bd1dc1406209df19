"""
Seeded synthetic trace generator.

Produces 1 Hz IMU/GPS/audio/frame events for a scenario mix, places
annotations inside active segments, and writes a ground-truth sidecar plus an
oracle script for the scripted reasoner backend.
"""
import json
import logging
import random
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field

from .schemas import BankEntry, Poi, ToolCall, Trace
from .tools import ToolRegistry
from .trace import parse_trace, serialize_trace

logger = logging.getLogger(__name__)

GRAVITY = 9.81

# Far from every shipped POI.
HOME_FIX = (22.3000, 114.1700)


class Segment(BaseModel):
    """One entry of a scenario mix."""
    scenario: str
    duration_s: float = Field(gt=0)
    active: bool = False


class ScenarioProfile(BaseModel):
    poi: Optional[str] = Field(default=None, description="POI the user is at while active")
    moving: bool = False
    speech: bool = False
    tools: List[str] = Field(default_factory=list, description="Tools an annotation may need")


SCENARIO_PROFILES: Dict[str, ScenarioProfile] = {
    "shopping": ScenarioProfile(poi="Harbour Mall", tools=["ProductSearch", "PriceCompare", "GetExchangeRate"]),
    "travel": ScenarioProfile(poi="University Station", moving=True,
                              tools=["GetTransitSchedule", "CityWeather", "GetTrafficInfo"]),
    "chitchat": ScenarioProfile(poi="Campus Cafe", speech=True, tools=["GetNews", "GetCalendarEvents", "GetDateTime"]),
    "work": ScenarioProfile(poi="Science Park Office", tools=["GetCalendarEvents", "GetDateTime", "SetReminder"]),
    "health": ScenarioProfile(poi="Riverside Clinic", tools=["GetHealthData", "SearchNearbyPlaces"]),
    "outdoors": ScenarioProfile(poi="Tolo Harbour Trail", moving=True,
                                tools=["CityWeather", "GetHealthData", "GetLocation"]),
    "cooking": ScenarioProfile(poi="Home Kitchen", tools=["SearchRecipe", "GetNutritionInfo", "SetReminder"]),
    "leisure": ScenarioProfile(poi="Harbour Cinema", tools=["PlayMusic", "GetNews", "SearchNearbyPlaces"]),
    "others": ScenarioProfile(moving=True, tools=["GetDateTime", "CityWeather"]),
}

ARG_VALUES: Dict[str, str] = {
    "city": "Hong Kong",
    "metric": "heart_rate",
    "query": "nearby",
    "station": "University",
    "route": "Tolo Highway",
    "dish": "tomato egg stir-fry",
    "food": "tomato",
    "product": "running shoes",
    "from_currency": "USD",
    "to_currency": "HKD",
    "time": "18:00",
    "note": "check the oven",
    "text": "where is the exit",
    "target_language": "en",
    "contact": "Alex",
    "to": "alex@example.com",
    "subject": "Running late",
    "body": "I will be there in ten minutes.",
}

SMALL_TALK = (
    "did you see the match last night",
    "what are you doing this weekend",
    "I heard it might rain later",
    "we should grab lunch sometime",
    "how was the trip",
)


def load_mix(path: Path) -> List[Segment]:
    with open(path, "r", encoding="utf-8") as f:
        return [Segment.model_validate(item) for item in json.load(f)]


def _tool_call(name: str, registry: ToolRegistry) -> ToolCall:
    spec = registry.get(name)
    if spec is None:
        raise ValueError(f"tool '{name}' is not in the manifest")
    args = {arg.key: ARG_VALUES.get(arg.key, arg.key) for arg in spec.args if arg.required}
    return ToolCall(name=name, args=args)


def _annotation_times(rng: random.Random, start: float, end: float) -> List[float]:
    times = []
    t = start + 10 + rng.uniform(0, 5)
    while t <= end - 10:
        times.append(round(t, 1))
        t += rng.uniform(15, 25)
    return times


def gen_trace(
    mix: Sequence[Segment],
    seed: int,
    out: Path,
    bank: Sequence[BankEntry],
    registry: ToolRegistry,
    pois: Sequence[Poi],
    tolerance_s: float = 5.0,
) -> Trace:
    """
    Generate a trace for a scenario mix and write it with its sidecar files.

    Args:
        mix: Ordered scenario segments
        seed: Generator seed; identical seeds give byte-identical files
        out: Trace output path; ``<stem>.truth.json`` and ``<stem>.script.jsonl``
            are written next to it
        bank: Scenario-object bank the frame labels are drawn from
        registry: Tool manifest the annotation tools are drawn from
        pois: POI table the active GPS fixes are placed at
        tolerance_s: Half-width of the oracle script match windows

    Returns:
        The generated Trace
    """
    if not mix:
        raise ValueError("empty mix")
    poi_by_name = {p.name: p for p in pois}
    rng = random.Random(seed)

    segments = []
    start = 0.0
    for segment in mix:
        if segment.scenario not in SCENARIO_PROFILES:
            raise ValueError(f"unknown scenario '{segment.scenario}'")
        segments.append((segment, start, start + segment.duration_s))
        start += segment.duration_s
    total = int(round(start))

    records: List[Tuple[float, int, Dict[str, Any]]] = []
    truth_annotations = []
    for segment, seg_start, seg_end in segments:
        if not segment.active:
            continue
        profile = SCENARIO_PROFILES[segment.scenario]
        for t in _annotation_times(rng, seg_start, seg_end):
            names = rng.sample(profile.tools, rng.randint(1, min(2, len(profile.tools))))
            tools = [_tool_call(name, registry) for name in sorted(names)]
            record = {"t": t, "kind": "annotation", "need": True,
                      "tools": [c.model_dump() for c in tools], "window_s": 5.0}
            records.append((t, 4, record))
            truth_annotations.append({"t": t, "scenario": segment.scenario, "window_s": 5.0,
                                      "tools": [c.model_dump() for c in tools]})

    seg_index = 0
    for t in range(total + 1):
        while seg_index < len(segments) - 1 and t >= segments[seg_index][2]:
            seg_index += 1
        segment, _, _ = segments[seg_index]
        profile = SCENARIO_PROFILES[segment.scenario]
        active = segment.active

        if active and profile.moving:
            magnitude = GRAVITY + (2.0 if t % 2 == 0 else -2.0)
        else:
            magnitude = GRAVITY + rng.gauss(0, 0.02)
        accel = [round(rng.gauss(0, 0.01), 4), round(rng.gauss(0, 0.01), 4), round(magnitude, 4)]
        records.append((float(t), 0, {"t": float(t), "kind": "imu", "accel": accel}))

        if active and profile.poi is not None:
            if profile.poi not in poi_by_name:
                raise ValueError(f"POI '{profile.poi}' is not in the POI table")
            poi = poi_by_name[profile.poi]
            lat, lon = poi.lat, poi.lon
        else:
            lat, lon = HOME_FIX
        records.append((float(t), 1, {"t": float(t), "kind": "gps",
                                      "lat": round(lat + rng.gauss(0, 0.00001), 6),
                                      "lon": round(lon + rng.gauss(0, 0.00001), 6)}))

        audio: Dict[str, Any] = {"t": float(t), "kind": "audio", "vad": bool(active and profile.speech)}
        if audio["vad"] and t % 5 == 0:
            audio["transcript"] = rng.choice(SMALL_TALK)
        records.append((float(t), 2, audio))

        choices = [e.objects for e in bank if e.scenario == segment.scenario]
        if not choices:
            raise ValueError(f"no bank entries for scenario '{segment.scenario}'")
        objects = list(rng.choice(choices))
        records.append((float(t), 3, {"t": float(t), "kind": "frame", "frame_id": f"f{t:05d}", "objects": objects}))

    records.sort(key=lambda item: (item[0], item[1]))
    lines = [json.dumps(record, sort_keys=True) for _, _, record in records]
    trace = parse_trace(lines)

    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(serialize_trace(trace), encoding="utf-8")

    sidecar = {
        "seed": seed,
        "duration_s": trace.duration_s,
        "segments": [
            {"scenario": s.scenario, "start": a, "end": b, "active": s.active} for s, a, b in segments
        ],
        "annotations": truth_annotations,
        "annotation_count": len(truth_annotations),
    }
    sidecar_path = out.with_suffix(".truth.json")
    sidecar_path.write_text(json.dumps(sidecar, sort_keys=True, indent=2), encoding="utf-8")
    build_oracle_script(sidecar, out.with_suffix(".script.jsonl"), tolerance_s)

    logger.info("Generated %d events (%d annotations) over %gs into %s",
                len(trace.events), len(truth_annotations), trace.duration_s, out)
    return trace


def build_oracle_script(sidecar: Dict[str, Any], out: Path, tolerance_s: float = 5.0) -> Path:
    """
    Scripted-backend file answering proactively inside every annotation window.

    Each annotation gets a score-5 output with its ground-truth tools for
    sample times within +/- tolerance_s; every other sample scores 1.
    """
    lines = []
    for annotation in sidecar["annotations"]:
        names = ", ".join(tool["name"] for tool in annotation["tools"])
        raw = {
            "thoughts": f"The user is busy with {annotation['scenario']} and could use {names}.",
            "proactive_score": 5,
            "tool_calls": annotation["tools"],
            "assistance": f"For your {annotation['scenario']} at {annotation['t']:g}s I checked {names}.",
        }
        lines.append({
            "match": {"t_min": annotation["t"] - tolerance_s, "t_max": annotation["t"] + tolerance_s},
            "raw": json.dumps(raw, sort_keys=True),
        })
    default = {"thoughts": "Nothing needs attention.", "proactive_score": 1, "tool_calls": [], "assistance": ""}
    lines.append({"default": json.dumps(default, sort_keys=True)})

    out = Path(out)
    out.write_text("".join(json.dumps(line, sort_keys=True) + "\n" for line in lines), encoding="utf-8")
    return out
