"""
Command-line driver for disqsim
Commands: run, matrix, bench list|gen, validate-arch
"""

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from disqsim.architecture import load_architecture, summarize
from disqsim.benchmarks import generate, list_benchmarks, parse_benchmark
from disqsim.circuit import circuit_metrics
from disqsim.circuit_io import FORMAT_JSON, FORMATS, dump_circuit, load_circuit, serialize_circuit
from disqsim.config import Config
from disqsim.errors import EXIT_INTERNAL, DisqSimError, InputError
from disqsim.pipeline import (
    MATRIX_FIELDS,
    STAGE_TRACE,
    STAGES,
    Pipeline,
    RunOptions,
    run_matrix,
    run_pipeline,
)
from disqsim.simulator import FIDELITY_METRICS, SHOT_METHODS

logger = logging.getLogger(__name__)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
        logger.info(f"Wrote {out}")
    else:
        sys.stdout.write(text)


def _dumps(data) -> str:
    return json.dumps(data, indent=2) + "\n"


def _options(args: argparse.Namespace, **extra) -> RunOptions:
    return RunOptions.from_config(
        shots=args.shots,
        seed=args.seed,
        exact=args.exact or None,
        kappa=args.kappa,
        **extra,
    )


def _read_bundle(path: str) -> dict:
    """A JSON stage bundle, or a trace dump whose first line is the bundle header"""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise InputError(f"cannot read stage bundle {path}: {e}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        error = e
    try:
        header, *entries = [json.loads(line) for line in text.splitlines() if line.strip()]
    except (json.JSONDecodeError, ValueError):
        raise InputError(f"cannot read stage bundle {path}: {error}")
    if not isinstance(header, dict) or header.get("stage") != STAGE_TRACE:
        raise InputError(f"cannot read stage bundle {path}: {error}")
    return {**header, "artifact": entries}


def cmd_run(args: argparse.Namespace) -> int:
    if args.from_stage:
        pipeline = Pipeline.from_bundle(_read_bundle(args.from_stage))
        result = pipeline.bundle(args.stage) if args.stage else pipeline.report()
    else:
        if (args.circuit is None) == (args.bench is None):
            raise InputError("run needs exactly one of --circuit or --bench")
        if args.bench:
            bench = parse_benchmark(args.bench)
            circuit, name = generate(bench), bench.label
        else:
            circuit, name = load_circuit(args.circuit, args.format), Path(args.circuit).stem
        options = _options(
            args,
            distance_km=args.distance,
            noise_free=args.noise_free or None,
            opt_level=args.opt_level,
            fidelity_metric=args.fidelity_metric,
            method=args.method,
        )
        result = run_pipeline(circuit, load_architecture(args.arch), options, name, args.stage)

    if args.stage == STAGE_TRACE:
        header = {key: value for key, value in result.items() if key != "artifact"}
        lines = [json.dumps(header)] + [json.dumps(entry) for entry in result["artifact"]]
        _emit("\n".join(lines) + "\n", args.out)
    elif args.stage:
        _emit(_dumps(result), args.out)
    else:
        _emit(_dumps(result.to_dict()), args.out)
    return 0


def cmd_matrix(args: argparse.Namespace) -> int:
    options = _options(args, workers=args.workers)
    rows = run_matrix(args.bench or [], args.arch or [], args.distance or [0.2], options)
    if args.format == "csv":
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=list(MATRIX_FIELDS), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        _emit(buffer.getvalue(), args.out)
    else:
        _emit(_dumps({"schema": 1, "rows": rows}), args.out)
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    if args.bench_command == "list":
        _emit(_dumps(list_benchmarks()), None)
        return 0
    bench = parse_benchmark(args.name)
    circuit = generate(bench)
    if args.out:
        dump_circuit(circuit, args.out, args.format)
    else:
        sys.stdout.write(serialize_circuit(circuit, args.format or FORMAT_JSON))
    logger.info(f"{bench.label}: {circuit_metrics(circuit).to_dict()}")
    return 0


def cmd_validate_arch(args: argparse.Namespace) -> int:
    spec = load_architecture(args.arch)
    _emit(_dumps({"valid": True, "architecture": summarize(spec)}), None)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="disqsim", description="Distributed quantum circuit compiler and noisy simulator"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Compile and simulate one circuit")
    run.add_argument("--circuit", help="Circuit file (.qasm or .json)")
    run.add_argument("--bench", help="Benchmark as NAME or NAME:SIZE")
    run.add_argument("--arch", default="arch-a", help="Architecture file or preset (default: arch-a)")
    run.add_argument("--shots", type=int, help="Shots per run (default: DISQSIM_SHOTS)")
    run.add_argument("--seed", type=int, help="Master seed (default: DISQSIM_SEED)")
    run.add_argument("--exact", action="store_true", help="Exact noise-free distribution, no sampling")
    run.add_argument("--kappa", type=float, help="Link-noise coupling factor in [0, 1]")
    run.add_argument("--distance", type=float, help="Override every optical link length (km)")
    run.add_argument("--noise-free", action="store_true", help="Zero all device and link noise")
    run.add_argument("--opt-level", type=int, choices=[0, 1], help="Transpiler optimization level")
    run.add_argument("--fidelity-metric", choices=FIDELITY_METRICS)
    run.add_argument("--method", choices=SHOT_METHODS, help="Shot sampling method")
    run.add_argument("--stage", choices=STAGES, help="Stop after a stage and dump its artifact")
    run.add_argument("--from-stage", help="Resume from a dumped stage bundle")
    run.add_argument("--format", choices=FORMATS, help="Circuit format (default: by file suffix)")
    run.add_argument("--out", help="Write output here instead of stdout")
    run.set_defaults(handler=cmd_run)

    matrix = commands.add_parser("matrix", help="Benchmark x architecture x distance sweep")
    matrix.add_argument("--bench", action="append", help="Benchmark (repeatable)")
    matrix.add_argument("--arch", action="append", help="Architecture (repeatable)")
    matrix.add_argument("--distance", action="append", type=float, help="Link length in km (repeatable)")
    matrix.add_argument("--shots", type=int)
    matrix.add_argument("--seed", type=int)
    matrix.add_argument("--exact", action="store_true")
    matrix.add_argument("--kappa", type=float)
    matrix.add_argument("--workers", type=int, help="Process pool size (default: DISQSIM_WORKERS)")
    matrix.add_argument("--format", choices=["json", "csv"], default="json")
    matrix.add_argument("--out")
    matrix.set_defaults(handler=cmd_matrix)

    bench = commands.add_parser("bench", help="Benchmark circuits")
    bench_commands = bench.add_subparsers(dest="bench_command", required=True)
    bench_commands.add_parser("list", help="List benchmark families")
    gen = bench_commands.add_parser("gen", help="Write a benchmark circuit")
    gen.add_argument("name", help="NAME or NAME:SIZE")
    gen.add_argument("--out")
    gen.add_argument("--format", choices=FORMATS)
    bench.set_defaults(handler=cmd_bench)

    validate = commands.add_parser("validate-arch", help="Validate an architecture file or preset")
    validate.add_argument("arch")
    validate.set_defaults(handler=cmd_validate_arch)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=Config().log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except DisqSimError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
