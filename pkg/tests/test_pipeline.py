"""
Tests for run options, stage bundles, end-to-end reports and the experiment matrix
"""

import json
import logging
import math

import numpy as np
import pytest

from conftest import make_arch
from disqsim.architecture import load_architecture
from disqsim.benchmarks import generate, parse_benchmark
from disqsim.circuit import CircuitBuilder, GateKind
from disqsim.errors import ConfigError, InputError, RoutingError
from disqsim.pipeline import (
    MATRIX_FIELDS,
    RESUMABLE_STAGES,
    STAGE_NOISE,
    STAGE_TRACE,
    Pipeline,
    RunOptions,
    load_source,
    prepare_architecture,
    run_cell,
    run_matrix,
    run_pipeline,
)
from disqsim.simulator import run_exact, total_variation, vector_to_distribution


class TestRunOptions:
    def test_defaults(self):
        options = RunOptions.from_config()
        assert (options.shots, options.seed, options.kappa) == (10000, 1234, 1.0)
        assert options.method == "grouped"

    def test_environment_then_overrides(self, monkeypatch):
        monkeypatch.setenv("DISQSIM_SHOTS", "50")
        monkeypatch.setenv("DISQSIM_SEED", "9")
        options = RunOptions.from_config(seed=3, kappa=None)
        assert options.shots == 50
        assert options.seed == 3
        assert options.kappa == 1.0

    def test_invalid_override(self):
        with pytest.raises(InputError, match="shots"):
            RunOptions.from_config(shots=0)

    def test_unknown_metric(self):
        with pytest.raises(InputError):
            RunOptions.from_config(fidelity_metric="hellinger")

    def test_bad_environment(self, monkeypatch):
        monkeypatch.setenv("DISQSIM_KAPPA", "2")
        with pytest.raises(ConfigError):
            RunOptions.from_config()


class TestLoadSource:
    def test_benchmark(self):
        circuit, name = load_source(None, "ghz:5")
        assert name == "ghz-5"
        assert circuit.num_qubits == 5

    def test_exactly_one(self, bell):
        with pytest.raises(InputError):
            load_source(bell, "ghz")
        with pytest.raises(InputError):
            load_source(None, None)


class TestReport:
    def test_noise_free_bell(self, bell, two_qpu_arch, noise_free_options):
        report = run_pipeline(bell, two_qpu_arch, noise_free_options, "bell")
        assert report.mode == "exact"
        assert report.shots is None
        assert report.kappa == 0.0
        assert report.fidelity == pytest.approx(1.0)
        assert report.top_state == "00"
        assert report.distribution == pytest.approx({"00": 0.5, "11": 0.5})
        assert report.metrics.epr_pairs_consumed == 1
        assert report.metrics.comm_qubits == 2
        assert report.to_dict()["schema"] == 1

    def test_sampled_report_is_reproducible(self, bell, two_qpu_arch):
        options = RunOptions(shots=200, seed=5)
        first = run_pipeline(bell, two_qpu_arch, options).to_dict()
        assert first["mode"] == "grouped"
        assert first["shots"] == 200
        assert set(first["distribution"]) <= {"00", "01", "10", "11"}
        assert first == run_pipeline(bell, two_qpu_arch, options).to_dict()

    def test_remote_cx_and_readout_errors_share_one_group(self, bell, caplog):
        spec = make_arch([3, 3], [(0, 1)], noise={"p2": 0.05, "p_ro": 0.03})
        with caplog.at_level(logging.INFO, logger="disqsim.simulator"):
            report = run_pipeline(bell, spec, RunOptions(shots=3000, seed=8))
        assert "in 1 group(s)" in caplog.text
        assert 0.0 < report.fidelity < 1.0

    def test_unmeasured_circuit_gets_measured(self, two_qpu_arch, noise_free_options):
        c = CircuitBuilder(2).h(0).cx(0, 1).build()
        report = run_pipeline(c, two_qpu_arch, noise_free_options)
        assert set(report.distribution) == {"00", "11"}

    def test_longer_links_add_noise(self, bell, two_qpu_arch):
        def noise_at(distance_km):
            options = RunOptions(distance_km=distance_km)
            spec = prepare_architecture(two_qpu_arch, options)
            return Pipeline(bell, spec, options).noise().average_gate_noise

        assert noise_at(0.2) == pytest.approx(1 - math.exp(-0.01))
        assert noise_at(20.0) == pytest.approx(1 - math.exp(-1.0))

    @pytest.mark.parametrize("benchmark, partition_sizes", [("ghz:6", [3, 3]), ("qaoa:8", [3, 3, 2])])
    def test_distributed_matches_monolithic(self, benchmark, partition_sizes, noise_free_options):
        spec = parse_benchmark(benchmark)
        pipeline = Pipeline(generate(spec), load_architecture("arch-b"), noise_free_options, spec.label)
        partition = pipeline.artifact("dqc-logical")["partition"]
        sizes = [list(partition["qubits"].values()).count(p) for p in range(len(partition["mapping"]))]
        assert sizes == partition_sizes

        report = pipeline.report()
        mono = vector_to_distribution(run_exact(pipeline.circuit), pipeline.circuit.num_clbits)
        assert total_variation(report.distribution, mono) < 1e-9
        assert report.fidelity == pytest.approx(1.0)

    def test_stage_errors_name_the_stage(self):
        spec = make_arch([2, 2], [])
        c = CircuitBuilder(3, 3).cx(1, 2).measure_all().build()
        with pytest.raises(RoutingError) as e:
            run_pipeline(c, spec, RunOptions(exact=True))
        assert e.value.stage == "dqc-logical"
        assert e.value.exit_code == 3


class TestBundles:
    @pytest.fixture
    def pipeline(self, bell, two_qpu_arch, noise_free_options):
        return Pipeline(bell, two_qpu_arch, noise_free_options, "bell")

    def test_bundle_layout(self, pipeline):
        bundle = pipeline.bundle("isolated")
        assert list(bundle) == ["schema", "stage", "name", "circuit", "arch", "options", "artifact"]
        assert bundle["stage"] == "isolated"

    @pytest.mark.parametrize("stage", RESUMABLE_STAGES)
    def test_resume_gives_the_same_report(self, pipeline, stage):
        expected = pipeline.report().to_dict()
        bundle = json.loads(json.dumps(pipeline.bundle(stage)))
        resumed = Pipeline.from_bundle(bundle)
        assert resumed.report().to_dict() == expected

    def test_trace_and_noise_bundles(self, pipeline):
        trace = pipeline.bundle(STAGE_TRACE)["artifact"]
        assert len(trace) == len(pipeline.assembled().circuit)
        noise = pipeline.bundle(STAGE_NOISE)["artifact"]
        assert len(noise["channels"]) == len(trace)

    def test_noisespec_bundle_replays_sampled_run(self, bell, two_qpu_arch):
        options = RunOptions(shots=300, seed=11)
        pipeline = Pipeline(bell, two_qpu_arch, options, "bell")
        expected = pipeline.report().to_dict()
        bundle = json.loads(json.dumps(pipeline.bundle(STAGE_NOISE)))
        assert Pipeline.from_bundle(bundle).report().to_dict() == expected

    def test_tampered_trace_is_rejected(self, pipeline):
        bundle = json.loads(json.dumps(pipeline.bundle(STAGE_TRACE)))
        bundle["artifact"].pop()
        with pytest.raises(InputError, match="does not match"):
            Pipeline.from_bundle(bundle)

    def test_noisespec_must_cover_every_instruction(self, pipeline):
        bundle = json.loads(json.dumps(pipeline.bundle(STAGE_NOISE)))
        bundle["artifact"]["channels"].append(bundle["artifact"]["channels"][0])
        with pytest.raises(InputError, match="channel"):
            Pipeline.from_bundle(bundle)

    def test_unknown_bundle_stage(self, pipeline):
        bundle = pipeline.bundle(STAGE_TRACE)
        bundle["stage"] = "routed"
        with pytest.raises(InputError):
            Pipeline.from_bundle(bundle)

    def test_schema_is_checked(self, pipeline):
        bundle = pipeline.bundle("assembled")
        bundle["schema"] = 2
        with pytest.raises(InputError):
            Pipeline.from_bundle(bundle)

    def test_malformed_artifact(self, pipeline):
        bundle = pipeline.bundle("transpiled")
        del bundle["artifact"]["sync_table"]
        with pytest.raises(InputError):
            Pipeline.from_bundle(bundle)

    def test_unknown_stage(self, pipeline):
        with pytest.raises(InputError):
            pipeline.bundle("routed")


class TestMatrix:
    def test_empty(self, noise_free_options):
        assert run_matrix([], ["arch-a"], [0.2], noise_free_options) == []

    def test_rows_in_order(self, noise_free_options):
        rows = run_matrix(["ghz:4"], ["arch-b"], [0.2, 2.0], noise_free_options)
        assert [row["distance_km"] for row in rows] == [0.2, 2.0]
        for row in rows:
            assert list(row) == list(MATRIX_FIELDS)
            assert row["error"] is None
            assert row["fidelity"] == pytest.approx(1.0)
            assert row["epr_pairs"] == 1

    def test_failures_become_rows(self, noise_free_options):
        rows = run_matrix(["shor", "ghz:4"], ["arch-z"], [0.2], noise_free_options)
        assert len(rows) == 2
        assert "unknown benchmark" in rows[0]["error"]
        assert rows[1]["error"]
        assert rows[1]["fidelity"] is None

    def test_unexpected_errors_become_rows(self, monkeypatch, noise_free_options):
        def broken(*args, **kwargs):
            raise ValueError("singular matrix")

        monkeypatch.setattr("disqsim.pipeline.run_pipeline", broken)
        row = run_cell("ghz:4", "arch-b", 0.2, noise_free_options)
        assert row["error"] == "unexpected: ValueError: singular matrix"
        assert row["fidelity"] is None
        assert (row["benchmark"], row["arch"], row["distance_km"]) == ("ghz:4", "arch-b", 0.2)

    def test_seeded_rows_repeat(self):
        options = RunOptions(shots=100, seed=3)
        first = run_matrix(["ghz:4"], ["arch-b"], [0.2, 20.0], options)
        assert first == run_matrix(["ghz:4"], ["arch-b"], [0.2, 20.0], options)

    @pytest.mark.slow
    def test_full_noise_free_matrix(self, noise_free_options):
        names = ["qec-steane", "fulladder", "ghz", "tfim", "qaoa", "vqe"]
        rows = run_matrix(names, ["arch-a", "arch-d"], [0.2], noise_free_options)
        assert len(rows) == 12
        for row in rows:
            assert row["error"] is None, row
            assert row["fidelity"] == pytest.approx(1.0, abs=1e-6)
        single = [row for row in rows if row["arch"] == "arch-a"]
        assert all(row["epr_pairs"] == 0 for row in single)


BENCHMARK_NAMES = ["qec-steane", "fulladder", "ghz", "tfim", "qaoa", "vqe"]


def _preset_pipeline(benchmark, arch, options):
    spec = parse_benchmark(benchmark)
    arch_spec = prepare_architecture(load_architecture(arch), options)
    return Pipeline(generate(spec), arch_spec, options, spec.label)


class TestPresetArchitectures:
    @pytest.mark.slow
    @pytest.mark.parametrize("arch", ["arch-a", "arch-b", "arch-c", "arch-d", "arch-e"])
    @pytest.mark.parametrize("benchmark", BENCHMARK_NAMES)
    def test_every_cell_assembles(self, benchmark, arch, noise_free_options):
        assembled = _preset_pipeline(benchmark, arch, noise_free_options).assembled()
        kinds = {ins.kind for ins in assembled.circuit.instructions}
        assert GateKind.VIRTUAL not in kinds
        if arch == "arch-a":
            assert assembled.epr_pairs == 0

    @pytest.mark.slow
    @pytest.mark.parametrize("arch", ["arch-b", "arch-c", "arch-d", "arch-e"])
    @pytest.mark.parametrize("benchmark", BENCHMARK_NAMES)
    def test_noise_free_dqc_matches_monolithic(self, benchmark, arch, noise_free_options):
        pipeline = _preset_pipeline(benchmark, arch, noise_free_options)
        distributed = run_exact(pipeline.assembled())
        monolithic = run_exact(pipeline.circuit)
        assert distributed.shape == monolithic.shape
        assert np.max(np.abs(distributed - monolithic)) <= 1e-9

    @pytest.mark.slow
    @pytest.mark.parametrize("arch", ["arch-b", "arch-c", "arch-d", "arch-e"])
    @pytest.mark.parametrize("benchmark", BENCHMARK_NAMES)
    def test_noise_free_shots_hit_the_ideal_top_state(self, benchmark, arch):
        options = RunOptions(noise_free=True, kappa=0.0, shots=10000, seed=17)
        report = _preset_pipeline(benchmark, arch, options).report()
        p = report.ideal_top_prob
        observed = report.distribution.get(report.ideal_top_state, 0.0)
        sigma = math.sqrt(p * (1.0 - p) / options.shots)
        assert abs(observed - p) <= 3.0 * sigma + 2e-3

    @pytest.mark.parametrize("benchmark", BENCHMARK_NAMES)
    def test_small_devices_lower_average_gate_noise(self, benchmark):
        options = RunOptions(distance_km=0.2)
        noise = {
            arch: _preset_pipeline(benchmark, arch, options).noise().average_gate_noise
            for arch in ("arch-a", "arch-b")
        }
        assert 0.0 < noise["arch-b"] < noise["arch-a"]

    @pytest.mark.slow
    @pytest.mark.parametrize("benchmark", BENCHMARK_NAMES)
    def test_distributed_presets_beat_the_single_device(self, benchmark):
        options = RunOptions(shots=20000, seed=2024)
        rows = {arch: run_cell(benchmark, arch, 0.2, options) for arch in ("arch-a", "arch-b", "arch-d")}
        for row in rows.values():
            assert row["error"] is None, row
        assert rows["arch-b"]["fidelity"] > rows["arch-a"]["fidelity"]
        assert rows["arch-d"]["fidelity"] > rows["arch-a"]["fidelity"]

    @pytest.mark.slow
    @pytest.mark.parametrize("benchmark", ["ghz", "qaoa"])
    def test_shorter_links_keep_more_fidelity(self, benchmark):
        options = RunOptions(shots=10000, seed=99, kappa=1.0)
        near, far = run_matrix([benchmark], ["arch-b"], [0.2, 2.0], options)
        assert near["error"] is None and far["error"] is None
        assert near["fidelity"] >= far["fidelity"]
