"""
Per-QPU transpiler
Basis decomposition, BFS-region layout, greedy SWAP routing between pinned segments
and light peephole optimization
"""

import cmath
import dataclasses
import logging
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from disqsim.architecture import (
    ION_BASIS,
    SUPERCONDUCTING_BASIS,
    ArchitectureSpec,
    QpuProfile,
)
from disqsim.circuit import Circuit, GateKind, Instruction
from disqsim.circuit_io import circuit_from_dict, circuit_to_dict
from disqsim.errors import InvariantError, RoutingError
from disqsim.gates import INVERSE_PAIRS, SELF_INVERSE, gate_matrix
from disqsim.isolator import IsolatedSubcircuit, IsolationResult, VirtualGateRecord

logger = logging.getLogger(__name__)

ANGLE_TOLERANCE = 1e-10
HALF_PI = math.pi / 2

# Kinds that delimit routing and optimization segments
SEGMENT_BOUNDARIES = frozenset({GateKind.BARRIER, GateKind.VIRTUAL})
SYMMETRIC_KINDS = frozenset({GateKind.CZ, GateKind.SWAP, GateKind.RZZ, GateKind.RXX})


@dataclass(frozen=True)
class TranspiledSubcircuit:
    qpu_id: str
    circuit: Circuit
    layout: Dict[int, int]
    final_permutation: Dict[int, int]
    swaps: int = 0
    vg_records: Tuple[VirtualGateRecord, ...] = ()
    local_to_global: Dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "qpu_id": self.qpu_id,
            "circuit": circuit_to_dict(self.circuit),
            "layout": {str(k): v for k, v in sorted(self.layout.items())},
            "final_permutation": {str(k): v for k, v in sorted(self.final_permutation.items())},
            "swaps": self.swaps,
            "vg_records": [r.to_dict() for r in self.vg_records],
            "local_to_global": {str(k): v for k, v in sorted(self.local_to_global.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TranspiledSubcircuit":
        return cls(
            qpu_id=data["qpu_id"],
            circuit=circuit_from_dict(data["circuit"]),
            layout={int(k): v for k, v in data["layout"].items()},
            final_permutation={int(k): v for k, v in data["final_permutation"].items()},
            swaps=data.get("swaps", 0),
            vg_records=tuple(VirtualGateRecord.from_dict(r) for r in data["vg_records"]),
            local_to_global={int(k): v for k, v in data["local_to_global"].items()},
        )


# Single-qubit synthesis


def _wrap(angle: float) -> float:
    """Map into (-pi, pi]"""
    wrapped = math.remainder(angle, 2 * math.pi)
    return math.pi if math.isclose(wrapped, -math.pi, abs_tol=ANGLE_TOLERANCE) else wrapped


def _is_zero_angle(angle: float) -> bool:
    return abs(_wrap(angle)) < ANGLE_TOLERANCE


def euler_zyz(u: np.ndarray) -> Tuple[float, float, float]:
    """(theta, phi, lam) with u equal to RZ(phi) RY(theta) RZ(lam) up to global phase"""
    v = u / cmath.sqrt(np.linalg.det(u))
    theta = 2 * math.atan2(abs(v[1, 0]), abs(v[0, 0]))
    if abs(v[0, 0]) < ANGLE_TOLERANCE:
        total, diff = 0.0, 2 * cmath.phase(v[1, 0])
    elif abs(v[1, 0]) < ANGLE_TOLERANCE:
        total, diff = 2 * cmath.phase(v[1, 1]), 0.0
    else:
        total, diff = 2 * cmath.phase(v[1, 1]), 2 * cmath.phase(v[1, 0])
    return theta, (total + diff) / 2, (total - diff) / 2


def _rz(q: int, angle: float, condition) -> List[Instruction]:
    if _is_zero_angle(angle):
        return []
    return [Instruction(GateKind.RZ, (q,), (_wrap(angle),), condition=condition)]


def synthesize_1q(
    u: np.ndarray, q: int, target: str, condition: Optional[Tuple[int, int]] = None
) -> List[Instruction]:
    """Gate sequence (circuit order) implementing u on qubit q in the target basis"""
    theta, phi, lam = euler_zyz(u)

    def gate(kind: GateKind, *params: float) -> Instruction:
        return Instruction(kind, (q,), tuple(params), condition=condition)

    if target == "ion":
        out = _rz(q, lam, condition)
        if not _is_zero_angle(theta):
            out.append(gate(GateKind.RY, _wrap(theta)))
        return out + _rz(q, phi, condition)

    if _is_zero_angle(theta):
        return _rz(q, phi + lam, condition)
    if math.isclose(theta, math.pi, abs_tol=ANGLE_TOLERANCE):
        return _rz(q, lam - phi + math.pi, condition) + [gate(GateKind.X)]
    if math.isclose(theta, HALF_PI, abs_tol=ANGLE_TOLERANCE):
        return _rz(q, lam - HALF_PI, condition) + [gate(GateKind.SX)] + _rz(q, phi + HALF_PI, condition)
    return (
        _rz(q, lam, condition)
        + [gate(GateKind.SX)]
        + _rz(q, theta + math.pi, condition)
        + [gate(GateKind.SX)]
        + _rz(q, phi + math.pi, condition)
    )


# Two-qubit rewrite rules, all exact up to global phase


def _cx_rules(ins: Instruction) -> List[Instruction]:
    a, b = ins.qubits
    cond = ins.condition

    def g(kind: GateKind, *qubits: int, params: Tuple[float, ...] = ()) -> Instruction:
        return Instruction(kind, tuple(qubits), params, condition=cond)

    if ins.kind is GateKind.CZ:
        return [g(GateKind.H, b), g(GateKind.CX, a, b), g(GateKind.H, b)]
    if ins.kind is GateKind.SWAP:
        return [g(GateKind.CX, a, b), g(GateKind.CX, b, a), g(GateKind.CX, a, b)]
    if ins.kind is GateKind.RZZ:
        return [g(GateKind.CX, a, b), g(GateKind.RZ, b, params=ins.params), g(GateKind.CX, a, b)]
    if ins.kind is GateKind.RXX:
        return (
            [g(GateKind.H, a), g(GateKind.H, b), g(GateKind.CX, a, b)]
            + [g(GateKind.RZ, b, params=ins.params), g(GateKind.CX, a, b)]
            + [g(GateKind.H, a), g(GateKind.H, b)]
        )
    raise InvariantError(f"no CX rule for {ins.kind.value}")


def _rxx_rules(ins: Instruction) -> List[Instruction]:
    a, b = ins.qubits
    cond = ins.condition

    def g(kind: GateKind, *qubits: int, params: Tuple[float, ...] = ()) -> Instruction:
        return Instruction(kind, tuple(qubits), params, condition=cond)

    if ins.kind is GateKind.CX:
        return [
            g(GateKind.RY, a, params=(HALF_PI,)),
            g(GateKind.RXX, a, b, params=(HALF_PI,)),
            g(GateKind.RY, a, params=(-HALF_PI,)),
            g(GateKind.RX, b, params=(-HALF_PI,)),
            g(GateKind.RZ, a, params=(-HALF_PI,)),
        ]
    if ins.kind is GateKind.RZZ:
        hadamards = [g(GateKind.H, a), g(GateKind.H, b)]
        return hadamards + [g(GateKind.RXX, a, b, params=ins.params)] + hadamards
    return _cx_rules(ins)


def target_of(basis: Iterable[GateKind]) -> str:
    basis = set(basis)
    if SUPERCONDUCTING_BASIS <= basis:
        return "superconducting"
    if ION_BASIS <= basis:
        return "ion"
    raise InvariantError(f"basis {sorted(g.value for g in basis)} has no supported target")


def decompose_to_basis(c: Circuit, basis: Iterable[GateKind]) -> Circuit:
    basis = frozenset(basis)
    target = target_of(basis)
    rules: Callable[[Instruction], List[Instruction]] = (
        _rxx_rules if target == "ion" else _cx_rules
    )

    def expand(ins: Instruction) -> List[Instruction]:
        if not ins.is_unitary or ins.kind in basis:
            return [ins]
        if len(ins.qubits) == 1:
            return synthesize_1q(gate_matrix(ins.kind, ins.params), ins.qubits[0], target, ins.condition)
        out: List[Instruction] = []
        for piece in rules(ins):
            out.extend(expand(piece))
        return out

    out: List[Instruction] = []
    for ins in c.instructions:
        expanded = expand(ins)
        if ins.tag is not None:
            expanded = [piece.replace(tag=ins.tag) for piece in expanded]
        out.extend(expanded)
    return c.with_instructions(out)


# Layout and routing


def _sorted_graph(graph: nx.Graph, nodes: Optional[Iterable[int]] = None) -> nx.Graph:
    """Copy with nodes and adjacency inserted in ascending order"""
    keep = sorted(nodes if nodes is not None else graph.nodes)
    ordered = nx.Graph()
    ordered.add_nodes_from(keep)
    ordered.add_edges_from(sorted(tuple(sorted(e)) for e in graph.subgraph(keep).edges))
    return ordered


def _bfs_order(graph: nx.Graph, start: int) -> List[int]:
    seen, order, queue = {start}, [], deque([start])
    while queue:
        u = queue.popleft()
        order.append(u)
        for v in sorted(graph[u]):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return order


def _bfs_path(graph: nx.Graph, src: int, dst: int) -> Optional[List[int]]:
    """Shortest path; ties go to the lower-indexed neighbour"""
    parent: Dict[int, Optional[int]] = {src: None}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            path = [u]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1]
        for v in sorted(graph[u]):
            if v not in parent:
                parent[v] = u
                queue.append(v)
    return None


def used_qubits(c: Circuit) -> List[int]:
    return sorted({q for ins in c.instructions for q in ins.qubits})


def initial_layout(c: Circuit, qpu: QpuProfile) -> Dict[int, int]:
    """Used virtual qubits, ascending, onto a BFS-ordered connected region from physical 0"""
    used = used_qubits(c)
    if len(used) > qpu.num_qubits:
        raise RoutingError(f"{len(used)} qubits do not fit on {qpu.id} ({qpu.num_qubits})")
    if qpu.all_to_all:
        return {v: v for v in used}
    region = _bfs_order(qpu.coupling_graph(), 0)[: len(used)]
    return dict(zip(used, region))


class _Router:
    def __init__(self, coupling: nx.Graph, layout: Dict[int, int], swap_rules):
        self.phys_of = dict(layout)
        self.virt_at: Dict[int, int] = {p: v for v, p in layout.items()}
        region = _sorted_graph(coupling, layout.values())
        if len(region) > 1 and not nx.is_connected(region):
            region = _sorted_graph(coupling)
        self.graph = region if len(region) > 1 else _sorted_graph(coupling)
        self.swap_rules = swap_rules
        self.out: List[Instruction] = []
        self.swaps = 0
        self.pending: List[Tuple[int, int]] = []

    def place(self, ins: Instruction) -> Instruction:
        return ins.replace(qubits=tuple(self.phys_of[q] for q in ins.qubits))

    def swap(self, p1: int, p2: int) -> None:
        self.out.extend(self.swap_rules(Instruction(GateKind.SWAP, (p1, p2))))
        v1, v2 = self.virt_at.get(p1), self.virt_at.get(p2)
        self.virt_at.pop(p1, None)
        self.virt_at.pop(p2, None)
        if v1 is not None:
            self.phys_of[v1] = p2
            self.virt_at[p2] = v1
        if v2 is not None:
            self.phys_of[v2] = p1
            self.virt_at[p1] = v2
        self.swaps += 1

    def two_qubit(self, ins: Instruction) -> None:
        a, b = ins.qubits
        pa, pb = self.phys_of[a], self.phys_of[b]
        if not self.graph.has_edge(pa, pb):
            path = _bfs_path(self.graph, pa, pb)
            if path is None:
                raise RoutingError(f"physical qubits {pa} and {pb} are not connected")
            logger.debug(f"Routing {ins.kind.value}({pa},{pb}) along {path}")
            for k in range(len(path) - 2):
                self.swap(path[k], path[k + 1])
                self.pending.append((path[k], path[k + 1]))
        self.out.append(self.place(ins))

    def restore(self) -> None:
        """Undo this segment's SWAPs so every qubit is back at its layout position"""
        if self.pending:
            logger.debug(f"Restoring layout with {len(self.pending)} swap(s)")
        for p1, p2 in reversed(self.pending):
            self.swap(p1, p2)
        self.pending.clear()


def route_to_coupling(
    c: Circuit,
    coupling: nx.Graph,
    layout: Dict[int, int],
    basis: Optional[Iterable[GateKind]] = None,
) -> TranspiledSubcircuit:
    """Insert SWAPs so every two-qubit gate acts on a coupled physical pair.

    SWAPs are emitted in `basis` when given, otherwise as SWAP instructions. Barriers and
    virtual gates are pinned: the SWAPs of the segment before them are undone first, so they
    always land on their initial layout position and no qubit moves across a boundary.
    """
    if basis is not None:
        basis = frozenset(basis)
        swap_rules = lambda ins: decompose_to_basis(  # noqa: E731
            Circuit(max(ins.qubits) + 1, 0, (ins,)), basis
        ).instructions
    else:
        swap_rules = lambda ins: (ins,)  # noqa: E731

    router = _Router(coupling, layout, swap_rules)
    for ins in c.instructions:
        missing = [q for q in ins.qubits if q not in router.phys_of]
        if missing:
            raise InvariantError(f"qubits {missing} have no layout position")
        if ins.is_unitary and len(ins.qubits) == 2:
            router.two_qubit(ins)
        elif ins.kind in SEGMENT_BOUNDARIES:
            router.restore()
            router.out.append(router.place(ins))
        else:
            router.out.append(router.place(ins))

    num_physical = max(max(coupling.nodes, default=0) + 1, c.num_qubits)
    routed = Circuit(num_qubits=num_physical, num_clbits=c.num_clbits, instructions=tuple(router.out))
    return TranspiledSubcircuit(
        qpu_id="",
        circuit=routed,
        layout=dict(layout),
        final_permutation=dict(router.phys_of),
        swaps=router.swaps,
    )


# Optimization


def _cancels(first: Instruction, second: Instruction) -> bool:
    if first.condition is not None or second.condition is not None:
        return False
    if first.tag != second.tag:
        return False
    same_qubits = first.qubits == second.qubits or (
        first.kind in SYMMETRIC_KINDS and set(first.qubits) == set(second.qubits)
    )
    if not same_qubits:
        return False
    if first.kind is second.kind and first.kind in SELF_INVERSE:
        return True
    return INVERSE_PAIRS.get(first.kind) is second.kind


def _cancel_inverses(instructions: Sequence[Instruction]) -> List[Instruction]:
    out: List[Optional[Instruction]] = []
    last: Dict[int, List[int]] = {}
    for ins in instructions:
        if ins.is_unitary:
            heads = {last[q][-1] if last.get(q) else None for q in ins.qubits}
            if len(heads) == 1:
                j = heads.pop()
                if j is not None and _cancels(out[j], ins):
                    out[j] = None
                    for q in ins.qubits:
                        last[q].pop()
                    continue
        out.append(ins)
        for q in ins.qubits:
            last.setdefault(q, []).append(len(out) - 1)
    return [ins for ins in out if ins is not None]


def _merge_runs(instructions: Sequence[Instruction], target: str) -> List[Instruction]:
    out: List[Instruction] = []
    runs: Dict[int, List[Instruction]] = {}

    def flush(q: int) -> None:
        run = runs.pop(q, [])
        if len(run) < 2:
            out.extend(run)
            return
        u = np.eye(2, dtype=complex)
        for ins in run:
            u = gate_matrix(ins.kind, ins.params) @ u
        merged = synthesize_1q(u, q, target)
        out.extend(merged if len(merged) < len(run) else run)

    for ins in instructions:
        mergeable = (
            ins.is_unitary and len(ins.qubits) == 1 and ins.condition is None and ins.tag is None
        )
        if mergeable:
            runs.setdefault(ins.qubits[0], []).append(ins)
            continue
        for q in ins.qubits:
            flush(q)
        out.append(ins)
    for q in sorted(runs):
        flush(q)
    return out


def optimize(c: Circuit, basis: Iterable[GateKind]) -> Circuit:
    """Adjacent-inverse cancellation then single-qubit run merging"""
    target = target_of(basis)
    instructions = _cancel_inverses(c.instructions)
    instructions = _merge_runs(instructions, target)
    instructions = _cancel_inverses(instructions)
    return c.with_instructions(instructions)


def transpile(sub: IsolatedSubcircuit, qpu: QpuProfile, opt_level: int = 1) -> TranspiledSubcircuit:
    basis = frozenset(qpu.basis_gates)
    decomposed = decompose_to_basis(sub.circuit, basis)
    layout = initial_layout(decomposed, qpu)
    routed = route_to_coupling(decomposed, qpu.coupling_graph(), layout, basis)
    circuit = routed.circuit
    if opt_level >= 1:
        circuit = optimize(circuit, basis)
    logger.debug(
        f"Transpiled {qpu.id}: {len(sub.circuit)} -> {len(circuit)} instructions, "
        f"{routed.swaps} swap(s)"
    )
    return dataclasses.replace(
        routed,
        qpu_id=sub.qpu_id,
        circuit=circuit,
        vg_records=sub.vg_records,
        local_to_global=dict(sub.local_to_global),
    )


def transpile_all(
    isolation: IsolationResult, spec: ArchitectureSpec, opt_level: int = 1, workers: int = 1
) -> Tuple[TranspiledSubcircuit, ...]:
    jobs = [(sub, spec.qpu(sub.qpu_id)) for sub in isolation.subcircuits]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: transpile(job[0], job[1], opt_level), jobs))
    else:
        results = [transpile(sub, qpu, opt_level) for sub, qpu in jobs]
    logger.info(
        f"Transpiled {len(results)} subcircuit(s): "
        + ", ".join(f"{t.qpu_id}={len(t.circuit)} ops/{t.swaps} swaps" for t in results)
    )
    return tuple(results)
