"""
Tests for splitting logical DQC circuits into per-QPU subcircuits
"""

import dataclasses

import pytest

from disqsim.circuit import GateKind
from disqsim.constructor import construct
from disqsim.errors import InputError, IsolationError
from disqsim.isolator import (
    PIN_TAG,
    VgCase,
    VgSide,
    case_of_tag,
    isolate,
    read_bundle,
    split_vg_tag,
    validate_isolation,
    write_bundle,
)


@pytest.fixture
def bell_dqc(bell, two_qpu_arch):
    return construct(bell, two_qpu_arch).circuit


@pytest.fixture
def bell_isolated(bell_dqc, two_qpu_arch):
    return isolate(bell_dqc, two_qpu_arch.qpu_ids)


class TestTags:
    @pytest.mark.parametrize(
        "tag, case",
        [
            ("rg0003:epr01", VgCase.EPR_PAIR),
            ("rg0003:es01", VgCase.ES_BELL),
            ("rg0003:tg", VgCase.TELEGATE),
            ("rg0003:tg:local", None),
            ("pin", None),
        ],
    )
    def test_case_of_tag(self, tag, case):
        assert case_of_tag(tag) is case

    def test_split_vg_tag(self):
        assert split_vg_tag("rg0000:tg/left") == ("rg0000:tg", VgSide.LEFT)


class TestIsolate:
    def test_sync_table(self, bell_isolated):
        table = bell_isolated.sync_table
        assert sorted(table) == ["rg0000:epr00", "rg0000:tg"]
        assert table["rg0000:tg"].case is VgCase.TELEGATE
        assert table["rg0000:tg"].sides == {VgSide.LEFT: "q0", VgSide.RIGHT: "q1"}
        assert len(table["rg0000:tg"].payload) == 8
        assert bell_isolated.vg_count == 4

    def test_subcircuit_shape(self, bell_isolated):
        sub = bell_isolated.subcircuit("q0")
        assert sub.circuit.num_qubits == 3
        assert sub.circuit.num_clbits == 2
        assert sub.local_to_global == {0: 0, 2: 2}
        assert bell_isolated.num_data_clbits == 2

    def test_virtual_gates_are_pinned(self, bell_isolated):
        for sub in bell_isolated.subcircuits:
            instructions = sub.circuit.instructions
            for i, ins in enumerate(instructions):
                if ins.kind is GateKind.VIRTUAL:
                    assert instructions[i - 1].kind is GateKind.BARRIER
                    assert instructions[i - 1].tag == PIN_TAG

    def test_telegate_sides_cover_data_qubits(self, bell_isolated):
        left = bell_isolated.subcircuit("q0").record("rg0000:tg")
        right = bell_isolated.subcircuit("q1").record("rg0000:tg")
        assert left.global_qubits == (2, 0)
        assert right.global_qubits == (3, 1)

    def test_validates_clean(self, bell_isolated, bell_dqc):
        assert validate_isolation(bell_isolated, bell_dqc) == []

    def test_entanglement_swap_has_three_sides(self, line_arch):
        from disqsim.architecture import PartitionMap
        from disqsim.circuit import CircuitBuilder

        c = CircuitBuilder(2, 2).h(0).cx(0, 1).measure_all().build()
        pm = PartitionMap(partition={0: 0, 1: 1}, mapping={0: "q0", 1: "q2"})
        dqc = construct(c, line_arch, pm).circuit
        result = isolate(dqc, line_arch.qpu_ids)
        assert sorted(result.sync_table) == [
            "rg0000:epr00",
            "rg0000:epr01",
            "rg0000:es01",
            "rg0000:tg",
        ]
        es = result.sync_table["rg0000:es01"]
        assert es.sides == {
            VgSide.REPEATER: "q1",
            VgSide.ENDPOINT_A: "q0",
            VgSide.ENDPOINT_B: "q2",
        }
        assert result.vg_count == 9
        assert validate_isolation(result, dqc) == []

    def test_needs_qubit_homes(self, bell):
        with pytest.raises(IsolationError):
            isolate(bell, ["q0", "q1"])


class TestValidation:
    def test_dangling_sync(self, bell_isolated):
        q0, q1 = bell_isolated.subcircuits
        broken = dataclasses.replace(q0, vg_records=q0.vg_records[:1])
        violations = validate_isolation([broken, q1])
        assert violations == ["dangling sync rg0000:tg: 1 of 2 sides present"]

    def test_unpinned_virtual_gate(self, bell_isolated):
        q0, q1 = bell_isolated.subcircuits
        unpinned = q0.circuit.with_instructions(
            ins for ins in q0.circuit.instructions if ins.tag != PIN_TAG
        )
        violations = validate_isolation([dataclasses.replace(q0, circuit=unpinned), q1])
        assert any(v.startswith("unpinned VG") for v in violations)

    def test_lost_local_instruction(self, bell_isolated, bell_dqc):
        q0, q1 = bell_isolated.subcircuits
        trimmed = q0.circuit.with_instructions(q0.circuit.instructions[1:])
        violations = validate_isolation([dataclasses.replace(q0, circuit=trimmed), q1], bell_dqc)
        assert violations == ["local instruction multiset differs: 1 missing, 0 unexpected"]


class TestBundle:
    def test_round_trip(self, tmp_path, bell_isolated):
        path = tmp_path / "bell.isolated.json"
        sidecar = write_bundle(bell_isolated, path)
        assert sidecar.name == "bell.isolated.sync.json"
        assert read_bundle(path) == bell_isolated

    def test_missing_sidecar(self, tmp_path, bell_isolated):
        path = tmp_path / "bell.isolated.json"
        write_bundle(bell_isolated, path).unlink()
        with pytest.raises(InputError):
            read_bundle(path)
