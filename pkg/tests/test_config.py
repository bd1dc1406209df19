import json
from pathlib import Path

import pytest

import sys
import os
sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from src.config import ConfigError, PipelineConfig, config, load_pipeline_config, resolve_paths

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def _touch_data(directory: Path) -> None:
    for name in ("personas.jsonl", "bank.jsonl", "pois.jsonl", "tools.jsonl", "fixtures.jsonl", "scripted.jsonl"):
        (directory / name).write_text("", encoding="utf-8")


class TestDefaults:
    """Test cases for the default operating point."""

    def test_operating_point(self):
        """Defaults match the documented operating point."""
        cfg = PipelineConfig()

        assert cfg.reasoner.threshold == 3
        assert cfg.delivery.sim_threshold == 0.5
        assert cfg.delivery.window_s == 300.0
        assert cfg.persona.k == 30
        assert (cfg.sampling.high_interval_s, cfg.sampling.low_interval_s) == (5.0, 60.0)
        assert cfg.evaluation.annotation_window_s == 5.0
        assert cfg.sampling.combine == "or"
        assert cfg.seed == 42

    def test_high_interval_above_low_rejected(self):
        """The high-mode interval must not exceed the low-mode one."""
        with pytest.raises(ValueError):
            PipelineConfig.model_validate({"sampling": {"high_interval_s": 90}})

    def test_unknown_fallback_rejected(self):
        """The fallback scenario must be configured."""
        with pytest.raises(ValueError):
            PipelineConfig.model_validate({"persona": {"fallback": "space"}})

    def test_snapshot_uses_basenames(self):
        """Snapshots do not leak machine-specific directories."""
        cfg = resolve_paths(PipelineConfig(), Path("/some/where"), check=False)
        snapshot = cfg.snapshot()

        assert snapshot["paths"]["bank"] == "bank.jsonl"
        assert snapshot["reasoner"]["backend"] == "scripted:scripted.jsonl"
        assert snapshot["paths"]["trace"] is None
        json.dumps(snapshot)

    def test_data_dir(self):
        """Shipped files live in the data directory."""
        assert config.default_path("tools.jsonl") == config.DATA_DIR / "tools.jsonl"


class TestLoadPipelineConfig:
    """Test cases for config files."""

    def test_shipped_config(self):
        """The shipped flat file loads and resolves against its directory."""
        cfg = load_pipeline_config(DATA_DIR / "pipeline.env")

        assert cfg.persona.k == 30
        assert cfg.tools.strict_args is True
        assert Path(cfg.paths.bank) == DATA_DIR / "bank.jsonl"
        assert cfg.reasoner.backend == "scripted:" + str(DATA_DIR / "scripted.jsonl")

    def test_flat_dotted_keys(self, tmp_path):
        """Dotted keys become nested sections; scenarios split on commas."""
        _touch_data(tmp_path)
        path = tmp_path / "run.env"
        path.write_text(
            "# comment\nsampling.high_interval_s=10\npersona.scenarios=others, work\n"
            "delivery.mode=consecutive\n",
            encoding="utf-8",
        )
        cfg = load_pipeline_config(path)

        assert cfg.sampling.high_interval_s == 10.0
        assert cfg.persona.scenarios == ["others", "work"]
        assert cfg.delivery.mode == "consecutive"

    def test_json_config(self, tmp_path):
        """JSON documents load the same sections."""
        _touch_data(tmp_path)
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"reasoner": {"threshold": 4, "strict_threshold": True}}), encoding="utf-8")
        cfg = load_pipeline_config(path)

        assert cfg.reasoner.threshold == 4
        assert cfg.reasoner.strict_threshold

    def test_missing_config_file(self, tmp_path):
        """Missing config files are config errors."""
        with pytest.raises(ConfigError, match="not found"):
            load_pipeline_config(tmp_path / "nope.env")

    def test_invalid_value(self, tmp_path):
        """Out-of-range values are config errors."""
        _touch_data(tmp_path)
        path = tmp_path / "run.env"
        path.write_text("reasoner.threshold=9\n", encoding="utf-8")

        with pytest.raises(ConfigError, match="Invalid config"):
            load_pipeline_config(path)

    def test_malformed_json(self, tmp_path):
        """Broken JSON is a config error."""
        path = tmp_path / "run.json"
        path.write_text("{", encoding="utf-8")

        with pytest.raises(ConfigError):
            load_pipeline_config(path)

    def test_missing_referenced_file(self, tmp_path):
        """Every referenced file must exist when checking."""
        _touch_data(tmp_path)
        (tmp_path / "bank.jsonl").unlink()
        path = tmp_path / "run.env"
        path.write_text("seed=1\n", encoding="utf-8")

        with pytest.raises(ConfigError, match="bank.jsonl"):
            load_pipeline_config(path)
        assert load_pipeline_config(path, check=False).seed == 1

    def test_missing_scripted_backend_file(self, tmp_path):
        """The scripted backend file is a referenced file too."""
        _touch_data(tmp_path)
        path = tmp_path / "run.env"
        path.write_text("reasoner.backend=scripted:other.jsonl\n", encoding="utf-8")

        with pytest.raises(ConfigError, match="other.jsonl"):
            load_pipeline_config(path)

    def test_missing_scripted_thought_backend_file(self, tmp_path):
        """A scripted distillation backend must exist as well."""
        _touch_data(tmp_path)
        path = tmp_path / "run.env"
        path.write_text("distill.thought_backend=scripted:thoughts.jsonl\n", encoding="utf-8")

        with pytest.raises(ConfigError, match="thoughts.jsonl"):
            load_pipeline_config(path)

        (tmp_path / "thoughts.jsonl").write_text("", encoding="utf-8")
        cfg = load_pipeline_config(path)
        assert Path(cfg.distill.thought_backend.split(":", 1)[1]) == (tmp_path / "thoughts.jsonl").resolve()

    def test_absolute_paths_kept(self, tmp_path):
        """Absolute paths are not re-rooted."""
        _touch_data(tmp_path)
        bank = tmp_path / "elsewhere.jsonl"
        bank.write_text("", encoding="utf-8")
        sub = tmp_path / "sub"
        sub.mkdir()
        _touch_data(sub)
        path = sub / "run.env"
        path.write_text(f"paths.bank={bank}\n", encoding="utf-8")

        assert Path(load_pipeline_config(path).paths.bank) == bank


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
