"""
Tests for merging transpiled subcircuits at sync points
"""

import pytest

from conftest import assemble_circuit, make_arch
from disqsim.architecture import PartitionMap
from disqsim.assembler import LINK, AssembledCircuit, assemble
from disqsim.circuit import Circuit, CircuitBuilder, GateKind, Instruction
from disqsim.errors import DeadlockError
from disqsim.isolator import SyncEntry, VgCase, VgSide
from disqsim.simulator import run_exact, vector_to_distribution
from disqsim.transpiler import TranspiledSubcircuit


def _vg(tag):
    return Instruction(GateKind.VIRTUAL, (0,), tag=tag)


class TestAssemble:
    @pytest.fixture
    def assembled(self, bell, two_qpu_arch):
        return assemble_circuit(bell, two_qpu_arch)[1]

    def test_shape(self, assembled):
        c = assembled.circuit
        assert c.num_qubits == 6
        assert assembled.data_clbits == 2
        assert assembled.qpu_of_qubit == {0: "q0", 1: "q0", 2: "q0", 3: "q1", 4: "q1", 5: "q1"}
        assert assembled.comm_qubits == (2, 5)
        assert c.comm_qubits == [2, 5]

    def test_no_virtual_gates_or_pins_remain(self, assembled):
        for ins in assembled.circuit.instructions:
            assert ins.kind is not GateKind.VIRTUAL
            assert ins.tag != "pin"

    def test_epr_preparation_spans_the_link(self, assembled):
        assert assembled.epr_pairs == 1
        epr = [
            (ins, origin)
            for ins, origin, sync_id in zip(
                assembled.circuit.instructions, assembled.origins, assembled.sync_ids
            )
            if sync_id == "rg0000:epr00"
        ]
        assert [ins.kind for ins, _ in epr] == [GateKind.H, GateKind.CX]
        assert epr[1][0].qubits == (2, 5)
        assert {origin for _, origin in epr} == {LINK}

    def test_trace_is_a_permutation(self, assembled):
        assert sorted(assembled.trace.order) == list(range(len(assembled.circuit)))
        assert len(assembled.trace.entries) == len(assembled.circuit)

    def test_runs_like_the_monolithic_circuit(self, assembled):
        dist = vector_to_distribution(run_exact(assembled), assembled.data_clbits)
        assert dist == pytest.approx({"00": 0.5, "11": 0.5}, abs=1e-10)

    def test_two_hop_runs_like_the_monolithic_circuit(self, line_arch):
        c = CircuitBuilder(2, 2).h(0).cx(0, 1).measure_all().build()
        pm = PartitionMap(partition={0: 0, 1: 1}, mapping={0: "q0", 1: "q2"})
        _, assembled = assemble_circuit(c, line_arch, pm)
        assert assembled.epr_pairs == 2
        dist = vector_to_distribution(run_exact(assembled), assembled.data_clbits)
        assert dist == pytest.approx({"00": 0.5, "11": 0.5}, abs=1e-10)

    def test_round_trip(self, assembled):
        again = AssembledCircuit.from_dict(assembled.to_dict())
        assert again == assembled
        assert again.to_dict()["epr_pairs"] == 1


class TestDeadlock:
    def test_crossed_sync_order(self):
        spec = make_arch([2, 2], [(0, 1)])
        subs = [
            TranspiledSubcircuit("q0", Circuit(1, 0, (_vg("s1/left"), _vg("s2/left"))), {}, {}),
            TranspiledSubcircuit("q1", Circuit(1, 0, (_vg("s2/right"), _vg("s1/right"))), {}, {}),
        ]
        sides = {VgSide.LEFT: "q0", VgSide.RIGHT: "q1"}
        table = {
            "s1": SyncEntry(VgCase.EPR_PAIR, sides, ()),
            "s2": SyncEntry(VgCase.EPR_PAIR, sides, ()),
        }
        with pytest.raises(DeadlockError) as e:
            assemble(subs, table, spec)
        assert e.value.blocked == ["s1", "s2"]
        assert e.value.exit_code == 4

    def test_local_only_subcircuits_merge_in_order(self):
        spec = make_arch([2, 2], [(0, 1)])
        subs = [
            TranspiledSubcircuit("q0", CircuitBuilder(1).x(0).build(), {0: 0}, {0: 0}),
            TranspiledSubcircuit("q1", CircuitBuilder(1).x(0).build(), {0: 0}, {0: 0}),
        ]
        assembled = assemble(subs, {}, spec)
        assert [ins.qubits for ins in assembled.circuit.instructions] == [(0,), (2,)]
        assert assembled.origins == ("q0", "q1")
