"""
Tests for remote-gate identification, ES routing, comm allocation and TeleGate placement
"""

import networkx as nx
import numpy as np
import pytest

from conftest import make_arch
from disqsim.architecture import PartitionMap
from disqsim.circuit import CircuitBuilder, GateKind, QubitRole
from disqsim.constructor import (
    ROLE_ENDPOINT,
    ROLE_REPEATER_LEFT,
    allocate_comm_qubits,
    construct,
    decompose_to_remote_cnots,
    identify_remote_gates,
    route_es,
)
from disqsim.errors import ArchitectureError, CapacityError, RoutingError
from disqsim.isolator import VgCase, case_of_tag
from disqsim.simulator import run_exact, vector_to_distribution


def _pm(*qpus):
    """Partition map placing qubit i on qpus[i]"""
    ids = sorted(set(qpus), key=qpus.index)
    mapping = {p: qpu for p, qpu in enumerate(ids)}
    return PartitionMap(
        partition={q: ids.index(qpu) for q, qpu in enumerate(qpus)}, mapping=mapping
    )


def _epr_count(c):
    return len({ins.tag for ins in c.instructions if ins.tag and case_of_tag(ins.tag) is VgCase.EPR_PAIR})


class TestRemoteGates:
    def test_identify(self):
        c = CircuitBuilder(3).cx(0, 1).cx(1, 2).h(2).build()
        rg = identify_remote_gates(c, _pm("q0", "q0", "q1"))
        assert [r.index for r in rg] == [1]
        assert (rg[0].control_qpu, rg[0].target_qpu) == ("q0", "q1")

    def test_decompose_counts(self):
        c = CircuitBuilder(2).cz(0, 1).swap(0, 1).rzz(0, 1, 0.3).build()
        pm = _pm("q0", "q1")
        decomposed = decompose_to_remote_cnots(c, identify_remote_gates(c, pm))
        cx = [ins for ins in decomposed.instructions if ins.kind is GateKind.CX]
        assert len(cx) == 1 + 3 + 2

    def test_conditioned_remote_gate_rejected(self):
        c = CircuitBuilder(2, 1).measure(0, 0).gate(GateKind.CX, 0, 1, condition=(0, 1)).build()
        pm = _pm("q0", "q1")
        with pytest.raises(ArchitectureError):
            decompose_to_remote_cnots(c, identify_remote_gates(c, pm))


class TestRouting:
    def test_direct_link(self, two_qpu_arch):
        c = CircuitBuilder(2).cx(0, 1).build()
        rg = identify_remote_gates(c, _pm("q0", "q1"))[0]
        path = route_es(rg, two_qpu_arch)
        assert path.qpus == ("q0", "q1")
        assert path.hops == 1

    def test_fewest_hops_then_length(self):
        spec = make_arch([4, 4, 4, 4], [(0, 1), (1, 3), (0, 2), (2, 3)])
        c = CircuitBuilder(2).cx(0, 1).build()
        rg = identify_remote_gates(c, _pm("q0", "q3"))[0]
        path = route_es(rg, spec)
        assert path.qpus == ("q0", "q1", "q3")
        assert path.repeaters == ("q1",)
        assert path.total_length_km == pytest.approx(0.4)

    def test_no_path(self):
        spec = make_arch([4, 4], [])
        c = CircuitBuilder(2).cx(0, 1).build()
        rg = identify_remote_gates(c, _pm("q0", "q1"))[0]
        with pytest.raises(RoutingError):
            route_es(rg, spec)


class TestAllocation:
    def test_repeater_gets_two(self, line_arch):
        c = CircuitBuilder(2).cx(0, 1).build()
        pm = _pm("q0", "q2")
        rg = identify_remote_gates(c, pm)[0]
        alloc = allocate_comm_qubits([route_es(rg, line_arch)], line_arch, pm)
        assert alloc.qubits == {"q0": (4,), "q1": (4, 3), "q2": (4,)}
        assert alloc.roles["q0"] == (ROLE_ENDPOINT,)
        assert alloc.roles["q1"][0] == ROLE_REPEATER_LEFT

    def test_capacity_shortfall(self):
        spec = make_arch([2, 2], [(0, 1)])
        c = CircuitBuilder(4).cx(1, 2).build()
        pm = _pm("q0", "q0", "q1", "q1")
        rg = identify_remote_gates(c, pm)[0]
        with pytest.raises(CapacityError, match="short by 1"):
            allocate_comm_qubits([route_es(rg, spec)], spec, pm)


class TestConstruct:
    def test_layout_and_roles(self, two_qpu_arch, bell):
        construction = construct(bell, two_qpu_arch)
        dqc = construction.circuit
        assert dqc.num_qubits == 4
        assert dqc.qubit_roles[2:] == (QubitRole.COMMUNICATION,) * 2
        assert dqc.qubit_homes == (("q0", 0), ("q1", 0), ("q0", 2), ("q1", 2))
        assert dqc.num_clbits == 4
        assert construction.telegates == 1
        assert construction.epr_pairs == 1

    def test_remote_cx_matches_local(self, two_qpu_arch, bell):
        dqc = construct(bell, two_qpu_arch).circuit
        dist = vector_to_distribution(run_exact(dqc), dqc.num_clbits)
        data = {}
        for bits, p in dist.items():
            data[bits[-2:]] = data.get(bits[-2:], 0.0) + p
        assert data == pytest.approx({"00": 0.5, "11": 0.5}, abs=1e-10)

    def test_two_hop_remote_cx(self, line_arch):
        c = CircuitBuilder(2, 2).h(0).cx(0, 1).measure_all().build()
        pm = _pm("q0", "q2")
        construction = construct(c, line_arch, pm)
        assert construction.epr_pairs == 2
        assert _epr_count(construction.circuit) == 2
        dqc = construction.circuit
        dist = vector_to_distribution(run_exact(dqc), dqc.num_clbits)
        data = {}
        for bits, p in dist.items():
            data[bits[-2:]] = data.get(bits[-2:], 0.0) + p
        assert data == pytest.approx({"00": 0.5, "11": 0.5}, abs=1e-10)

    def test_local_circuit_is_unchanged(self, two_qpu_arch):
        c = CircuitBuilder(1, 1).h(0).measure(0, 0).build()
        construction = construct(c, two_qpu_arch)
        assert construction.remote_gates == ()
        assert construction.circuit.instructions == c.instructions

    def test_condition_measured_on_another_qpu_rejected(self, two_qpu_arch):
        c = (
            CircuitBuilder(2, 1)
            .h(0)
            .measure(0, 0)
            .gate(GateKind.X, 1, condition=(0, 1))
            .build()
        )
        with pytest.raises(ArchitectureError, match="measured on q0"):
            construct(c, two_qpu_arch, _pm("q0", "q1"))

    def test_condition_measured_on_same_qpu_allowed(self, two_qpu_arch):
        c = (
            CircuitBuilder(2, 2)
            .h(0)
            .measure(0, 0)
            .gate(GateKind.X, 1, condition=(0, 1))
            .measure(1, 1)
            .build()
        )
        construction = construct(c, two_qpu_arch, _pm("q0", "q0"))
        assert construction.circuit.instructions == c.instructions


class TestEprAccounting:
    @pytest.mark.parametrize("seed", range(10))
    def test_epr_pairs_equal_hops(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(2, 5))
        ring = bool(rng.integers(0, 2)) and k > 2
        links = [(i, i + 1) for i in range(k - 1)] + ([(k - 1, 0)] if ring else [])
        spec = make_arch([5] * k, links)
        n = int(rng.integers(2, 3 * k + 1))
        b = CircuitBuilder(n, n)
        for _ in range(int(rng.integers(5, 41))):
            if rng.random() < 0.5:
                b.h(int(rng.integers(n)))
            else:
                a, t = (int(q) for q in rng.choice(n, size=2, replace=False))
                b.cx(a, t)
        c = b.measure_all().build()

        construction = construct(c, spec)
        graph = nx.Graph(links)
        pm = construction.partition
        expected = 0
        for ins in c.instructions:
            if ins.kind is GateKind.CX:
                qa, qb = pm.qpu_of(ins.qubits[0]), pm.qpu_of(ins.qubits[1])
                if qa != qb:
                    expected += nx.shortest_path_length(graph, int(qa[1:]), int(qb[1:]))
        assert construction.epr_pairs == expected
        assert _epr_count(construction.circuit) == expected
