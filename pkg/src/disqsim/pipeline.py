"""
End-to-end pipeline
construct -> isolate -> transpile -> assemble -> noise -> simulate -> report,
with self-contained stage bundles and the benchmark x architecture x distance matrix
"""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from disqsim.architecture import (
    ArchitectureSpec,
    load_architecture,
    noise_free,
    parse_architecture,
    with_distance,
)
from disqsim.assembler import AssembledCircuit, assemble
from disqsim.benchmarks import BenchmarkSpec, generate, parse_benchmark
from disqsim.circuit import Circuit, circuit_metrics, ensure_measured
from disqsim.circuit_io import circuit_from_dict, circuit_to_dict
from disqsim.config import Config
from disqsim.constructor import construct
from disqsim.errors import DisqSimError, InputError, IsolationError
from disqsim.isolator import (
    IsolationResult,
    isolate,
    sync_table_from_dict,
    sync_table_to_dict,
    validate_isolation,
)
from disqsim.noise import NoiseSpec, build_noise_spec
from disqsim.simulator import (
    FIDELITY_METRICS,
    SCHEMA_VERSION,
    SHOT_METHODS,
    ReportMetrics,
    SimulationReport,
    counts_to_distribution,
    fidelity,
    run_exact,
    run_shots,
    top_state,
    vector_to_distribution,
)
from disqsim.transpiler import TranspiledSubcircuit, transpile_all

logger = logging.getLogger(__name__)

STAGE_DQC = "dqc-logical"
STAGE_ISOLATED = "isolated"
STAGE_TRANSPILED = "transpiled"
STAGE_ASSEMBLED = "assembled"
STAGE_TRACE = "trace"
STAGE_NOISE = "noisespec"
STAGES = (STAGE_DQC, STAGE_ISOLATED, STAGE_TRANSPILED, STAGE_ASSEMBLED, STAGE_TRACE, STAGE_NOISE)
RESUMABLE_STAGES = STAGES


class RunOptions(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    shots: int = Field(10000, ge=1)
    seed: int = Field(1234, ge=0)
    exact: bool = False
    kappa: float = Field(1.0, ge=0.0, le=1.0)
    distance_km: Optional[float] = Field(None, gt=0.0)
    noise_free: bool = False
    opt_level: int = Field(1, ge=0, le=1)
    fidelity_metric: str = "bhattacharyya"
    method: str = "grouped"
    workers: int = Field(1, ge=1)

    @classmethod
    def from_config(cls, **overrides) -> "RunOptions":
        """Defaults from the environment, then explicit overrides (None means unset)"""
        config = Config()
        values = {
            "shots": config.shots,
            "seed": config.seed,
            "kappa": config.kappa,
            "opt_level": config.opt_level,
            "workers": config.workers,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            options = cls(**values)
        except ValidationError as e:
            first = e.errors()[0]
            raise InputError(f"invalid option {'.'.join(map(str, first['loc']))}: {first['msg']}")
        if options.fidelity_metric not in FIDELITY_METRICS:
            raise InputError(f"unknown fidelity metric '{options.fidelity_metric}'")
        if options.method not in SHOT_METHODS:
            raise InputError(f"unknown shot method '{options.method}'")
        return options


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Stamp the stage name on any pipeline error raised inside"""
    try:
        yield
    except DisqSimError as e:
        if e.stage is None:
            e.stage = name
        raise


def prepare_architecture(spec: ArchitectureSpec, options: RunOptions) -> ArchitectureSpec:
    if options.distance_km is not None:
        spec = with_distance(spec, options.distance_km)
    if options.noise_free:
        spec = noise_free(spec)
    return spec


class Pipeline:
    """One circuit on one architecture; stages run lazily and are cached"""

    def __init__(
        self, circuit: Circuit, spec: ArchitectureSpec, options: RunOptions, name: str = "circuit"
    ):
        self.circuit = ensure_measured(circuit)
        self.spec = spec
        self.options = options
        self.name = name
        self.kappa = 0.0 if options.noise_free else options.kappa
        self._dqc: Optional[Circuit] = None
        self._isolation: Optional[IsolationResult] = None
        self._transpiled: Optional[Tuple[TranspiledSubcircuit, ...]] = None
        self._sync_table = None
        self._comm: Optional[Tuple[int, ...]] = None
        self._assembled: Optional[AssembledCircuit] = None
        self._noise: Optional[NoiseSpec] = None
        self._construction_info: dict = {}

    # Stages

    def dqc(self) -> Circuit:
        if self._dqc is None:
            with stage(STAGE_DQC):
                construction = construct(self.circuit, self.spec)
            self._dqc = construction.circuit
            self._construction_info = {
                "partition": construction.partition.to_dict(),
                "remote_cnots": construction.telegates,
                "paths": [p.to_dict() for p in construction.paths],
                "allocation": construction.allocation.to_dict(),
                "epr_pairs": construction.epr_pairs,
            }
        return self._dqc

    def isolation(self) -> IsolationResult:
        if self._isolation is None:
            dqc = self.dqc()
            with stage(STAGE_ISOLATED):
                result = isolate(dqc, self.spec.qpu_ids)
                violations = validate_isolation(result, dqc)
                if violations:
                    raise IsolationError("; ".join(violations))
            self._isolation = result
        return self._isolation

    def transpiled(self) -> Tuple[TranspiledSubcircuit, ...]:
        if self._transpiled is None:
            isolation = self.isolation()
            with stage(STAGE_TRANSPILED):
                self._transpiled = transpile_all(
                    isolation, self.spec, self.options.opt_level, self.options.workers
                )
            self._sync_table = isolation.sync_table
            self._comm = tuple(
                q for q, role in enumerate(isolation.qubit_roles) if role == "communication"
            )
        return self._transpiled

    def assembled(self) -> AssembledCircuit:
        if self._assembled is None:
            subs = self.transpiled()
            with stage(STAGE_ASSEMBLED):
                self._assembled = assemble(subs, self._sync_table, self.spec, self._comm)
        return self._assembled

    def noise(self) -> NoiseSpec:
        if self._noise is None:
            assembled = self.assembled()
            with stage(STAGE_NOISE):
                self._noise = build_noise_spec(assembled, self.spec, self.kappa)
        return self._noise

    # Bundles

    def artifact(self, name: str) -> object:
        if name == STAGE_DQC:
            return {"circuit": circuit_to_dict(self.dqc()), **self._construction_info}
        if name == STAGE_ISOLATED:
            return self.isolation().to_dict()
        if name == STAGE_TRANSPILED:
            subs = self.transpiled()
            return {
                "subcircuits": [t.to_dict() for t in subs],
                "sync_table": sync_table_to_dict(self._sync_table),
                "comm_qubits": list(self._comm),
            }
        if name == STAGE_ASSEMBLED:
            return self.assembled().to_dict()
        if name == STAGE_TRACE:
            return [entry.to_dict() for entry in self.assembled().trace.entries]
        if name == STAGE_NOISE:
            return self.noise().to_dict()
        raise InputError(f"unknown stage '{name}', expected one of {', '.join(STAGES)}")

    def bundle(self, name: str) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "stage": name,
            "name": self.name,
            "circuit": circuit_to_dict(self.circuit),
            "arch": self.spec.model_dump(mode="json"),
            "options": self.options.model_dump(mode="json"),
            "artifact": self.artifact(name),
        }

    @classmethod
    def from_bundle(cls, data: dict, options: Optional[RunOptions] = None) -> "Pipeline":
        """Rebuild a pipeline whose stages up to the bundle's stage are already done"""
        if data.get("schema") != SCHEMA_VERSION:
            raise InputError(f"unsupported bundle schema {data.get('schema')!r}")
        name = data.get("stage")
        if name not in RESUMABLE_STAGES:
            raise InputError(
                f"cannot resume from stage {name!r}, expected one of {', '.join(RESUMABLE_STAGES)}"
            )
        try:
            options = options or RunOptions(**data["options"])
            pipeline = cls(
                circuit_from_dict(data["circuit"]),
                parse_architecture(data["arch"]),
                options,
                data.get("name", "circuit"),
            )
            artifact = data["artifact"]
            if name == STAGE_DQC:
                pipeline._dqc = circuit_from_dict(artifact["circuit"])
            elif name == STAGE_ISOLATED:
                pipeline._isolation = IsolationResult.from_dict(artifact)
            elif name == STAGE_TRANSPILED:
                pipeline._transpiled = tuple(
                    TranspiledSubcircuit.from_dict(t) for t in artifact["subcircuits"]
                )
                pipeline._sync_table = sync_table_from_dict(artifact["sync_table"])
                pipeline._comm = tuple(artifact["comm_qubits"])
            elif name == STAGE_ASSEMBLED:
                pipeline._assembled = AssembledCircuit.from_dict(artifact)
            elif name == STAGE_NOISE:
                pipeline._noise = NoiseSpec.from_dict(artifact)
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"malformed {name} bundle: {e}")
        if name in (STAGE_TRACE, STAGE_NOISE):
            pipeline._check_replay(name, artifact)
        logger.info(f"Resuming '{pipeline.name}' from stage {name}")
        return pipeline

    def _check_replay(self, name: str, artifact: object) -> None:
        """Trace and noisespec bundles replay assembly from their own circuit and architecture"""
        assembled = self.assembled()
        if name == STAGE_TRACE:
            rebuilt = json.loads(json.dumps(self.artifact(STAGE_TRACE)))
            if rebuilt != json.loads(json.dumps(artifact)):
                raise InputError("trace bundle does not match its circuit and architecture")
        elif len(self._noise) != len(assembled.circuit):
            raise InputError(
                f"noisespec bundle has {len(self._noise)} channel(s) for "
                f"{len(assembled.circuit)} instruction(s)"
            )

    # Simulation

    def metrics(self) -> ReportMetrics:
        mono = circuit_metrics(self.circuit)
        assembled = self.assembled()
        executed = circuit_metrics(assembled.circuit)
        return ReportMetrics(
            qubits=mono.qubits,
            depth=executed.depth,
            two_qubit_count=executed.two_qubit_count,
            igd=mono.igd,
            epr_pairs_consumed=assembled.epr_pairs,
            comm_qubits=len(assembled.comm_qubits),
            average_gate_noise=self.noise().average_gate_noise,
        )

    def report(self) -> SimulationReport:
        options = self.options
        width = self.circuit.num_clbits
        with stage("simulate"):
            ideal = vector_to_distribution(run_exact(self.circuit), width)
            assembled = self.assembled()
            if options.exact:
                observed = vector_to_distribution(run_exact(assembled), width)
                shots = None
            else:
                results = run_shots(
                    assembled, self.noise(), options.shots, options.seed, options.method
                )
                observed = counts_to_distribution(results)
                shots = options.shots
            value = fidelity(observed, ideal, options.fidelity_metric)
            state, prob = top_state(observed)
            ideal_state, ideal_prob = top_state(ideal)
        report = SimulationReport(
            circuit=self.name,
            arch=self.spec.name,
            mode="exact" if options.exact else options.method,
            shots=shots,
            seed=options.seed,
            distance_km=options.distance_km,
            kappa=self.kappa,
            fidelity_metric=options.fidelity_metric,
            fidelity=value,
            infidelity=1.0 - value,
            top_state=state,
            top_state_int=int(state, 2) if state else 0,
            top_prob=prob,
            ideal_top_state=ideal_state,
            ideal_top_prob=ideal_prob,
            metrics=self.metrics(),
            distribution=observed,
        )
        logger.info(
            f"{self.name} on {self.spec.name}: fidelity={value:.6f}, top={state} ({prob:.6f})"
        )
        return report


def load_source(
    circuit: Optional[Circuit], benchmark: Optional[str]
) -> Tuple[Circuit, str]:
    if (circuit is None) == (benchmark is None):
        raise InputError("give exactly one of a circuit or a benchmark")
    if benchmark is not None:
        spec = parse_benchmark(benchmark)
        return generate(spec), spec.label
    return circuit, "circuit"


def run_pipeline(
    circuit: Circuit,
    arch: ArchitectureSpec,
    options: RunOptions,
    name: str = "circuit",
    stop: Optional[str] = None,
):
    """Full run returning a report, or a stage bundle when stop names a stage"""
    pipeline = Pipeline(circuit, prepare_architecture(arch, options), options, name)
    if stop is not None:
        return pipeline.bundle(stop)
    return pipeline.report()


# Matrix


MATRIX_FIELDS = (
    "benchmark",
    "arch",
    "distance_km",
    "fidelity",
    "infidelity",
    "average_gate_noise",
    "epr_pairs",
    "depth",
    "two_qubit_count",
    "comm_qubits",
    "top_prob",
    "error",
)


def _cell_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def run_cell(
    benchmark: str, arch: str, distance_km: float, options: RunOptions, index: int = 0
) -> dict:
    """One matrix row; failures become an 'error' entry instead of raising"""
    row: Dict[str, object] = {name: None for name in MATRIX_FIELDS}
    row.update({"benchmark": benchmark, "arch": arch, "distance_km": distance_km})
    try:
        cell_options = options.model_copy(
            update={"distance_km": distance_km, "seed": _cell_seed(options.seed, index)}
        )
        spec: BenchmarkSpec = parse_benchmark(benchmark)
        report = run_pipeline(generate(spec), load_architecture(arch), cell_options, spec.label)
    except DisqSimError as e:
        logger.warning(f"Matrix cell {benchmark} x {arch} @ {distance_km} km failed: {e}")
        row["error"] = str(e)
        return row
    except Exception as e:
        logger.exception(f"Unexpected failure in matrix cell {benchmark} x {arch} @ {distance_km} km")
        row["error"] = f"unexpected: {type(e).__name__}: {e}"
        return row
    metrics = report.metrics
    row.update(
        {
            "fidelity": report.fidelity,
            "infidelity": report.infidelity,
            "average_gate_noise": metrics.average_gate_noise,
            "epr_pairs": metrics.epr_pairs_consumed,
            "depth": metrics.depth,
            "two_qubit_count": metrics.two_qubit_count,
            "comm_qubits": metrics.comm_qubits,
            "top_prob": report.top_prob,
        }
    )
    return row


def _run_cell_job(job: tuple) -> dict:
    return run_cell(*job)


def run_matrix(
    benchmarks: Sequence[str],
    archs: Sequence[str],
    distances: Sequence[float],
    options: RunOptions,
) -> List[dict]:
    """Rows in (benchmark, arch, distance) order; deterministic for a given seed"""
    jobs = []
    for benchmark in benchmarks:
        for arch in archs:
            for distance in distances:
                jobs.append((benchmark, arch, distance, options, len(jobs)))
    logger.info(f"Running matrix of {len(jobs)} cell(s) with {options.workers} worker(s)")
    if options.workers > 1 and len(jobs) > 1:
        single = options.model_copy(update={"workers": 1})
        jobs = [(b, a, d, single, i) for b, a, d, _, i in jobs]
        with ProcessPoolExecutor(max_workers=options.workers) as pool:
            return list(pool.map(_run_cell_job, jobs))
    return [run_cell(*job) for job in jobs]
