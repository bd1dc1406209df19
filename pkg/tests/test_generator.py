import json
from pathlib import Path

import pytest

import sys
import os
sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from src.context import load_pois
from src.generator import Segment, build_oracle_script, gen_trace, load_mix
from src.personas import load_bank
from src.tools import load_registry, validate_call
from src.trace import load_trace, validate_trace

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture(scope="module")
def resources():
    return (
        load_bank(DATA_DIR / "bank.jsonl"),
        load_registry(DATA_DIR / "tools.jsonl"),
        load_pois(DATA_DIR / "pois.jsonl"),
    )


def _generate(resources, out, seed=42, mix=None):
    bank, registry, pois = resources
    return gen_trace(mix or load_mix(DATA_DIR / "mix_default.json"), seed, out, bank, registry, pois)


class TestGenTrace:
    """Test cases for the synthetic trace generator."""

    def test_same_seed_byte_identical(self, resources, tmp_path):
        """Identical seeds write identical trace, truth and script files."""
        _generate(resources, tmp_path / "a" / "trace.jsonl")
        _generate(resources, tmp_path / "b" / "trace.jsonl")

        for name in ("trace.jsonl", "trace.truth.json", "trace.script.jsonl"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_different_seed_differs(self, resources, tmp_path):
        """Another seed gives another trace."""
        _generate(resources, tmp_path / "a.jsonl", seed=1)
        _generate(resources, tmp_path / "b.jsonl", seed=2)

        assert (tmp_path / "a.jsonl").read_bytes() != (tmp_path / "b.jsonl").read_bytes()

    def test_default_mix_shape(self, resources, tmp_path):
        """The default mix is 600 s with every modality at 1 Hz."""
        trace = _generate(resources, tmp_path / "trace.jsonl")
        report = validate_trace(trace)

        assert trace.duration_s == 600.0
        assert report.ok
        assert report.counts["frame"] == 601
        assert report.gaps == []
        assert load_trace(tmp_path / "trace.jsonl") == trace

    def test_annotations_inside_active_segments(self, resources, tmp_path):
        """Annotations fall in active segments, at least 15 s apart."""
        trace = _generate(resources, tmp_path / "trace.jsonl")
        sidecar = json.loads((tmp_path / "trace.truth.json").read_text(encoding="utf-8"))
        active = [(s["start"], s["end"]) for s in sidecar["segments"] if s["active"]]
        times = [a.t for a in trace.annotations()]

        assert sidecar["annotation_count"] == len(times) > 0
        assert [a["t"] for a in sidecar["annotations"]] == times
        for t in times:
            assert any(start + 10 <= t <= end - 10 for start, end in active)
        assert all(b - a >= 14.9 for a, b in zip(times, times[1:]))

    def test_annotation_tools_validate(self, resources, tmp_path):
        """Every ground-truth call is valid against the manifest."""
        _, registry, _ = resources
        trace = _generate(resources, tmp_path / "trace.jsonl")

        for annotation in trace.annotations():
            assert annotation.payload.tools
            assert all(validate_call(call, registry).ok for call in annotation.payload.tools)

    def test_oracle_script(self, resources, tmp_path):
        """The script has one window per annotation and a closing default."""
        trace = _generate(resources, tmp_path / "trace.jsonl")
        lines = [json.loads(line) for line in (tmp_path / "trace.script.jsonl").read_text(encoding="utf-8").splitlines()]

        assert len(lines) == len(trace.annotations()) + 1
        assert json.loads(lines[-1]["default"])["proactive_score"] == 1
        first = lines[0]
        assert first["match"]["t_max"] - first["match"]["t_min"] == pytest.approx(10.0)
        assert json.loads(first["raw"])["proactive_score"] == 5

    def test_unknown_scenario(self, resources, tmp_path):
        """Mixes may only name known scenarios."""
        with pytest.raises(ValueError, match="unknown scenario"):
            _generate(resources, tmp_path / "trace.jsonl", mix=[Segment(scenario="space", duration_s=10)])

    def test_empty_mix(self, resources, tmp_path):
        """An empty mix is rejected."""
        bank, registry, pois = resources
        with pytest.raises(ValueError, match="empty mix"):
            gen_trace([], 42, tmp_path / "trace.jsonl", bank, registry, pois)


class TestOracleScript:
    """Test cases for scripted answers built from a sidecar."""

    def test_custom_tolerance(self, tmp_path):
        """Match windows use the given tolerance."""
        sidecar = {"annotations": [
            {"t": 20.0, "scenario": "work", "tools": [{"name": "GetDateTime", "args": {}}]},
        ]}
        path = build_oracle_script(sidecar, tmp_path / "s.jsonl", tolerance_s=2.0)
        rule = json.loads(path.read_text(encoding="utf-8").splitlines()[0])

        assert rule["match"] == {"t_min": 18.0, "t_max": 22.0}
        assert json.loads(rule["raw"])["tool_calls"] == [{"name": "GetDateTime", "args": {}}]


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
