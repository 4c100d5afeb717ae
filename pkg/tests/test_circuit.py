"""
Tests for the circuit IR, dependency DAG and metrics
"""

import math

import numpy as np
import pytest

from disqsim.circuit import (
    Circuit,
    CircuitBuilder,
    GateKind,
    Instruction,
    QubitRole,
    build_dag,
    circuit_depth,
    circuit_metrics,
    ensure_measured,
    reorder,
    topological_order,
)
from disqsim.errors import CycleError, InputError
from disqsim.gates import equal_up_to_phase, gate_matrix
from disqsim.simulator import circuit_unitary


class TestInstruction:
    def test_arity_is_checked(self):
        with pytest.raises(InputError):
            Instruction(GateKind.CX, (0,))

    def test_repeated_qubit_rejected(self):
        with pytest.raises(InputError):
            Instruction(GateKind.CZ, (1, 1))

    def test_rotation_needs_one_parameter(self):
        with pytest.raises(InputError):
            Instruction(GateKind.RZ, (0,))

    def test_non_finite_parameter_rejected(self):
        with pytest.raises(InputError):
            Instruction(GateKind.RX, (0,), (math.inf,))

    def test_measure_writes_one_clbit_per_qubit(self):
        with pytest.raises(InputError):
            Instruction(GateKind.MEASURE, (0, 1), (), (0,))

    def test_only_unitaries_can_be_conditioned(self):
        with pytest.raises(InputError):
            Instruction(GateKind.RESET, (0,), condition=(0, 1))

    def test_remap_moves_condition_clbit(self):
        ins = Instruction(GateKind.X, (0,), condition=(1, 1))
        moved = ins.remap({0: 3}, {1: 5})
        assert moved.qubits == (3,)
        assert moved.condition == (5, 1)


class TestCircuit:
    def test_out_of_range_qubit(self):
        with pytest.raises(InputError):
            CircuitBuilder(2).cx(0, 2).build()

    def test_out_of_range_condition_clbit(self):
        with pytest.raises(InputError):
            Circuit(1, 1, (Instruction(GateKind.X, (0,), condition=(1, 1)),))

    def test_roles_default_to_data(self):
        c = CircuitBuilder(3).h(0).build()
        assert c.qubit_roles == (QubitRole.DATA,) * 3
        assert c.data_qubits == [0, 1, 2]
        assert c.comm_qubits == []

    def test_ensure_measured_appends_layer(self):
        c = ensure_measured(CircuitBuilder(3).h(0).build())
        measures = [ins for ins in c.instructions if ins.kind is GateKind.MEASURE]
        assert len(measures) == 3
        assert c.num_clbits == 3

    def test_ensure_measured_keeps_measured_circuit(self, bell):
        assert ensure_measured(bell) is bell


class TestDag:
    def test_edges_follow_qubits_and_clbits(self):
        c = (
            CircuitBuilder(2, 1)
            .h(0)
            .measure(0, 0)
            .gate(GateKind.X, 1, condition=(0, 1))
            .build()
        )
        dag = build_dag(c)
        assert dag.edges() == [(0, 1), (1, 2)]

    def test_topological_order_breaks_ties_by_index(self):
        c = CircuitBuilder(3).h(2).h(0).cx(0, 1).h(1).build()
        assert topological_order(build_dag(c)).order == (0, 1, 2, 3)

    def test_reorder_replays_trace(self):
        c = CircuitBuilder(2).h(1).h(0).build()
        trace = topological_order(build_dag(c))
        assert reorder(c, trace).instructions == c.instructions

    def test_cycle_is_reported(self):
        c = CircuitBuilder(1).h(0).x(0).build()
        dag = build_dag(c)
        dag.graph.add_edge(1, 0)
        with pytest.raises(CycleError) as e:
            topological_order(dag)
        assert len(e.value.cycle) == 2


class TestMetrics:
    def test_ghz_metrics(self):
        b = CircuitBuilder(4, 4).h(0)
        for q in range(3):
            b.cx(q, q + 1)
        metrics = circuit_metrics(b.measure_all().build())
        assert metrics.qubits == 4
        assert metrics.two_qubit_count == 3
        assert metrics.igd == pytest.approx(0.5)
        assert metrics.depth == 5

    def test_barriers_add_no_depth(self):
        c = CircuitBuilder(2).h(0).barrier().h(0).build()
        assert circuit_depth(c) == 2

    def test_single_qubit_igd_is_zero(self):
        assert circuit_metrics(CircuitBuilder(1).h(0).build()).igd == 0.0


class TestGates:
    def test_toffoli_decomposition(self):
        c = CircuitBuilder(3).ccx(0, 1, 2).build()
        expected = np.eye(8, dtype=complex)
        expected[[6, 7]] = expected[[7, 6]]
        assert equal_up_to_phase(circuit_unitary(c), expected)

    def test_sx_squares_to_x(self):
        sx = gate_matrix(GateKind.SX)
        assert np.allclose(sx @ sx, gate_matrix(GateKind.X))

    def test_non_unitary_has_no_matrix(self):
        with pytest.raises(InputError):
            gate_matrix(GateKind.MEASURE)
