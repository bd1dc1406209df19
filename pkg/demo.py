#!/usr/bin/env python3
"""
Offline demo: generate a trace from the default mix, replay it with the
oracle script as the reasoner, and evaluate the run.
Needs no network access or API key.
"""
import os
import sys
import tempfile
import time
from pathlib import Path

# Add the current directory to the path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))


def run_demo(workdir: Path) -> bool:
    """Run the generate, replay and evaluate steps in ``workdir``."""
    from rich.console import Console

    console = Console()
    console.rule("Proactive trace replay demo")

    try:
        from src.config import config, load_pipeline_config, resolve_paths, setup_logging
        from src.context import load_pois
        from src.evaluation import evaluate_run
        from src.generator import gen_trace, load_mix
        from src.personas import load_bank
        from src.tools import load_registry
        from src.workflow import replay, write_run_log

        setup_logging("WARNING")
        cfg = load_pipeline_config(config.default_path("pipeline.env"), check=False)
        registry = load_registry(Path(cfg.paths.tools))
        pois = load_pois(Path(cfg.paths.pois))

        console.print("Generating trace from the default mix...")
        trace_path = workdir / "trace.jsonl"
        trace = gen_trace(
            load_mix(config.default_path("mix_default.json")),
            cfg.seed,
            trace_path,
            load_bank(Path(cfg.paths.bank), cfg.persona.scenarios),
            registry,
            pois,
        )
        console.print(f"  {len(trace.events)} events, {len(trace.annotations())} annotations")

        console.print("Replaying with the oracle script...")
        start_time = time.time()
        cfg = cfg.model_copy(update={
            "paths": cfg.paths.model_copy(update={"trace": str(trace_path)}),
            "reasoner": cfg.reasoner.model_copy(
                update={"backend": f"scripted:{trace_path.with_suffix('.script.jsonl')}"}
            ),
        })
        cfg = resolve_paths(cfg, workdir)
        run = replay(cfg)
        write_run_log(run, workdir / "run.jsonl")
        console.print(f"  {len(run.samples)} samples, {len(run.delivered_assistance())} delivered "
                      f"({time.time() - start_time:.1f}s)")

        report = evaluate_run(run, trace, registry, cfg.evaluation.tolerance_s, cfg=cfg, pois=pois)
        periodic = next(b for b in report.baselines if b.name == "periodic-5")
        console.print(f"  Acc-P {report.acc_p:.2f}  MD {report.md:.2f}  F1 {report.f1:.2f}  "
                      f"Acc-Args {report.acc_args:.2f}")
        console.print(f"  sampling ratio {report.sampling_ratio:.3f} vs periodic-5 {periodic.sampling_ratio:.3f}")
        for text in run.delivered_assistance()[:3]:
            console.print(f"  > {text}")

        console.rule("Demo completed")
        console.print("Next steps:")
        console.print("  1. python main.py gen-trace --mix data/mix_default.json --out runs/trace.jsonl")
        console.print("  2. python main.py replay --config data/pipeline.env --trace runs/trace.jsonl "
                      "--backend scripted:runs/trace.script.jsonl --out runs/run.jsonl")
        console.print("  3. Run tests: python -m pytest tests/ -v")
        return True

    except ImportError as e:
        console.print(f"[red]Import error:[/red] {e}")
        console.print("   Make sure you've installed dependencies: pip install -r requirements.txt")
        return False
    except Exception as e:
        console.print(f"[red]Unexpected error:[/red] {e}")
        return False


if __name__ == "__main__":
    with tempfile.TemporaryDirectory() as tmp:
        success = run_demo(Path(tmp))
    sys.exit(0 if success else 1)
