#!/usr/bin/env python3
"""
Proactive trace replay - Main CLI Entry Point

Command-line interface for generating synthetic sensor traces, replaying them
through the proactive agent pipeline, evaluating run logs, exporting
distillation records and validating traces.

Exit codes: 0 ok, 1 usage error, 2 validation failure, 3 runtime error.
"""
import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Optional

from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

# Add the current directory to the path so we can import our modules
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.backends import make_embedder, make_reasoner_backend
from src.config import ConfigError, PipelineConfig, config, load_pipeline_config, resolve_paths, setup_logging
from src.context import load_pois
from src.evaluation import EvaluationError, evaluate_run
from src.generator import gen_trace, load_mix
from src.personas import RetrievalError, ScenarioObjectBank, load_bank, load_persona_store
from src.reasoner import export_distillation
from src.tools import RegistryError, load_registry
from src.trace import TraceFormatError, load_trace, validate_trace
from src.workflow import PipelineResources, TraceReplayer, read_run_log, write_json, write_run_log

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

VALIDATION_ERRORS = (ConfigError, TraceFormatError, RegistryError, RetrievalError, ValidationError, EvaluationError)

console = Console()
logger = logging.getLogger("proactive-replay")


class CliParser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with exit code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def create_parser() -> argparse.ArgumentParser:
    """Create the command-line argument parser."""
    parser = CliParser(
        prog="proactive-replay",
        description="Trace-driven proactive agent: generate, replay, evaluate",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s gen-trace --mix data/mix_default.json --seed 42 --out runs/trace.jsonl
  %(prog)s replay --config data/pipeline.env --trace runs/trace.jsonl \
      --backend scripted:runs/trace.script.jsonl --out runs/run.jsonl
  %(prog)s eval --run runs/run.jsonl --trace runs/trace.jsonl --tolerance 5 --out runs/report.json
  %(prog)s export-distill --trace runs/trace.jsonl --config data/pipeline.env --out runs/distill.jsonl
  %(prog)s validate --trace runs/trace.jsonl
        """,
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable debug logging")
    subparsers = parser.add_subparsers(dest="command", required=True)

    gen = subparsers.add_parser("gen-trace", help="Generate a synthetic trace from a scenario mix")
    gen.add_argument("--mix", required=True, help="Scenario mix (JSON list of segments)")
    gen.add_argument("--seed", type=int, default=42, help="Generator seed. Default: 42")
    gen.add_argument("--out", required=True, help="Trace output path")
    gen.add_argument("--config", help="Pipeline config supplying bank/tools/POI paths")
    gen.add_argument("--tolerance", type=float, default=5.0, help="Oracle script window half-width")

    rep = subparsers.add_parser("replay", help="Replay a trace through the pipeline")
    rep.add_argument("--config", required=True, help="Pipeline config (key=value or JSON)")
    rep.add_argument("--trace", help="Trace path overriding paths.trace")
    rep.add_argument("--backend", help="Reasoner backend overriding reasoner.backend")
    rep.add_argument("--out", required=True, help="Run log output path")

    ev = subparsers.add_parser("eval", help="Evaluate a run log against its trace")
    ev.add_argument("--run", required=True, help="Run log path")
    ev.add_argument("--trace", required=True, help="Ground-truth trace path")
    ev.add_argument("--tolerance", type=float, default=5.0, help="Matching tolerance in seconds. Default: 5")
    ev.add_argument("--config", help="Pipeline config supplying tool/POI paths and scheduler settings")
    ev.add_argument("--out", required=True, help="Report output path (JSON)")

    dist = subparsers.add_parser("export-distill", help="Export chain-of-thought distillation records")
    dist.add_argument("--trace", required=True, help="Annotated trace path")
    dist.add_argument("--config", required=True, help="Pipeline config")
    dist.add_argument("--backend", help="Reasoner backend overriding reasoner.backend")
    dist.add_argument("--out", required=True, help="Records output path (JSON lines)")

    val = subparsers.add_parser("validate", help="Check a trace file")
    val.add_argument("--trace", required=True, help="Trace path")
    val.add_argument("--gap-threshold", type=float, default=5.0, help="Report gaps longer than this")

    return parser


def _load_config(path: Optional[str], check: bool = True) -> PipelineConfig:
    """Pipeline config from ``path``, else the shipped defaults in the data directory."""
    if path:
        return load_pipeline_config(Path(path), check=check)
    default = config.default_path("pipeline.env")
    if default.exists():
        return load_pipeline_config(default, check=False)
    return resolve_paths(PipelineConfig(), config.DATA_DIR, check=False)


def _with_overrides(cfg: PipelineConfig, trace: Optional[str] = None, backend: Optional[str] = None) -> PipelineConfig:
    """Apply command-line trace/backend overrides, then check every referenced file."""
    if trace:
        cfg = cfg.model_copy(update={"paths": cfg.paths.model_copy(update={"trace": trace})})
    if backend:
        cfg = cfg.model_copy(update={"reasoner": cfg.reasoner.model_copy(update={"backend": backend})})
    return resolve_paths(cfg, Path.cwd(), check=True)


def cmd_gen_trace(args) -> int:
    cfg = _load_config(args.config, check=False)
    trace = gen_trace(
        load_mix(Path(args.mix)),
        args.seed,
        Path(args.out),
        load_bank(Path(cfg.paths.bank), cfg.persona.scenarios),
        load_registry(Path(cfg.paths.tools)),
        load_pois(Path(cfg.paths.pois)),
        tolerance_s=args.tolerance,
    )
    console.print(f"[green]Trace written[/green] {args.out}: {len(trace.events)} events, "
                  f"{len(trace.annotations())} annotations, {trace.duration_s:g}s")
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = _with_overrides(load_pipeline_config(Path(args.config), check=False), args.trace, args.backend)
    start_time = time.time()
    resources = PipelineResources.from_config(cfg)
    run = TraceReplayer(cfg, resources).run()
    write_run_log(run, Path(args.out))

    table = Table(title="Replay")
    table.add_column("samples")
    table.add_column("invocations")
    table.add_column("proactive")
    table.add_column("delivered")
    table.add_column("dropped")
    table.add_row(
        str(len(run.samples)),
        str(len(run.invocations)),
        str(sum(1 for inv in run.invocations if inv.decided_proactive)),
        str(len(run.delivered_assistance())),
        str(run.dropped_frames),
    )
    console.print(table)
    console.print(f"Run log written to {args.out} in {time.time() - start_time:.1f}s")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args.config, check=False)

    run = read_run_log(Path(args.run))
    truth = load_trace(Path(args.trace), cfg.evaluation.annotation_window_s)
    report = evaluate_run(
        run, truth, load_registry(Path(cfg.paths.tools)), args.tolerance, cfg=cfg, pois=load_pois(Path(cfg.paths.pois))
    )
    write_json(report.model_dump(mode="json"), Path(args.out))

    table = Table(title=f"Evaluation (tolerance {args.tolerance:g}s)")
    for name in ("acc_p", "md", "f1", "acc_args", "recall", "sampling_ratio"):
        table.add_column(name)
    table.add_row(*(f"{getattr(report, name):.3f}" for name in
                    ("acc_p", "md", "f1", "acc_args", "recall", "sampling_ratio")))
    console.print(table)

    baselines = Table(title="Baselines")
    baselines.add_column("sampler")
    baselines.add_column("samples")
    baselines.add_column("recall")
    baselines.add_column("sampling_ratio")
    for result in report.baselines:
        baselines.add_row(result.name, str(result.samples), f"{result.recall:.3f}", f"{result.sampling_ratio:.3f}")
    console.print(baselines)
    return EXIT_OK


def cmd_export_distill(args) -> int:
    cfg = _with_overrides(load_pipeline_config(Path(args.config), check=False), backend=args.backend)
    trace = load_trace(Path(args.trace), cfg.evaluation.annotation_window_s)
    embedder = make_embedder(cfg.persona.embedder)
    thought_backend = make_reasoner_backend(
        cfg.distill.thought_backend or cfg.reasoner.backend, cfg.reasoner.model, cfg.reasoner.timeout_s
    )
    records = export_distillation(
        trace,
        thought_backend,
        load_persona_store(Path(cfg.paths.personas), cfg.persona.scenarios),
        ScenarioObjectBank(load_bank(Path(cfg.paths.bank), cfg.persona.scenarios), embedder),
        load_pois(Path(cfg.paths.pois)),
        cfg,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(out, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record.model_dump(mode="json"), sort_keys=True, ensure_ascii=False) + "\n")
            count += 1
    console.print(f"[green]{count} distillation records[/green] written to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    trace = load_trace(Path(args.trace))
    report = validate_trace(trace, args.gap_threshold)
    console.print_json(report.model_dump_json())
    if not report.ok:
        for violation in report.violations:
            console.print(f"[red]violation[/red] {violation}")
        return EXIT_VALIDATION
    console.print("[green]Trace is valid[/green]")
    return EXIT_OK


COMMANDS = {
    "gen-trace": cmd_gen_trace,
    "replay": cmd_replay,
    "eval": cmd_eval,
    "export-distill": cmd_export_distill,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    """Main entry point."""
    parser = create_parser()
    args = parser.parse_args(argv)
    setup_logging("DEBUG" if args.verbose else None)

    try:
        return COMMANDS[args.command](args)
    except VALIDATION_ERRORS as e:
        console.print(f"[red]Validation failed:[/red] {e}")
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        console.print("[yellow]Interrupted by user[/yellow]")
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception("Command %s failed", args.command)
        console.print(f"[red]Error:[/red] {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
