"""
DQC constructor
Turns a monolithic circuit into a logical distributed circuit: remote-gate identification,
decomposition to remote CNOTs, ES routing, communication-qubit allocation and
ES / TeleGate placement
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx

from disqsim.architecture import ArchitectureSpec, PartitionMap, default_partition
from disqsim.circuit import Circuit, GateKind, Instruction, QubitRole
from disqsim.errors import ArchitectureError, CapacityError, RoutingError

logger = logging.getLogger(__name__)

DECOMPOSABLE = frozenset({GateKind.CX, GateKind.CZ, GateKind.SWAP, GateKind.RZZ, GateKind.RXX})

ROLE_ENDPOINT = "endpoint"
ROLE_REPEATER_LEFT = "repeater-left"
ROLE_REPEATER_RIGHT = "repeater-right"


@dataclass(frozen=True)
class RemoteGate:
    index: int
    instruction: Instruction
    control_partition: int
    target_partition: int
    control_qpu: str
    target_qpu: str

    @property
    def control(self) -> int:
        return self.instruction.qubits[0]

    @property
    def target(self) -> int:
        return self.instruction.qubits[1]


@dataclass(frozen=True)
class EsPath:
    qpus: Tuple[str, ...]
    total_length_km: float

    @property
    def hops(self) -> int:
        return len(self.qpus) - 1

    @property
    def repeaters(self) -> Tuple[str, ...]:
        return self.qpus[1:-1]

    def to_dict(self) -> dict:
        return {"qpus": list(self.qpus), "total_length_km": self.total_length_km}


@dataclass(frozen=True)
class CommAllocation:
    """Local communication-qubit indices per QPU, with the role each one plays"""

    qubits: Dict[str, Tuple[int, ...]] = field(default_factory=dict)
    roles: Dict[str, Tuple[str, ...]] = field(default_factory=dict)

    def count(self, qpu_id: str) -> int:
        return len(self.qubits.get(qpu_id, ()))

    def to_dict(self) -> dict:
        return {
            qpu: {"qubits": list(self.qubits[qpu]), "roles": list(self.roles[qpu])}
            for qpu in self.qubits
        }


@dataclass(frozen=True)
class Construction:
    """Everything the constructor decided, plus the logical DQC circuit"""

    circuit: Circuit
    partition: PartitionMap
    remote_gates: Tuple[RemoteGate, ...]
    paths: Tuple[EsPath, ...]
    allocation: CommAllocation
    num_data_qubits: int
    num_data_clbits: int

    @property
    def epr_pairs(self) -> int:
        return sum(p.hops for p in self.paths)

    @property
    def telegates(self) -> int:
        return len(self.remote_gates)

    @property
    def comm_qubits(self) -> int:
        return sum(len(q) for q in self.allocation.qubits.values())


def identify_remote_gates(c: Circuit, pm: PartitionMap) -> List[RemoteGate]:
    remote = []
    for i, ins in enumerate(c.instructions):
        if not ins.is_unitary or len(ins.qubits) < 2:
            continue
        partitions = [pm.partition[q] for q in ins.qubits]
        if len(set(partitions)) > 2:
            raise ArchitectureError(f"instruction {i} touches more than two partitions")
        if partitions[0] != partitions[1]:
            remote.append(
                RemoteGate(
                    index=i,
                    instruction=ins,
                    control_partition=partitions[0],
                    target_partition=partitions[1],
                    control_qpu=pm.mapping[partitions[0]],
                    target_qpu=pm.mapping[partitions[1]],
                )
            )
    return remote


def _as_cnots(ins: Instruction) -> List[Instruction]:
    a, b = ins.qubits

    def g(kind: GateKind, *qubits: int, params: Tuple[float, ...] = ()) -> Instruction:
        return Instruction(kind, tuple(qubits), params)

    if ins.kind is GateKind.CX:
        return [ins]
    if ins.kind is GateKind.CZ:
        return [g(GateKind.H, b), g(GateKind.CX, a, b), g(GateKind.H, b)]
    if ins.kind is GateKind.SWAP:
        return [g(GateKind.CX, a, b), g(GateKind.CX, b, a), g(GateKind.CX, a, b)]
    if ins.kind is GateKind.RZZ:
        return [g(GateKind.CX, a, b), g(GateKind.RZ, b, params=ins.params), g(GateKind.CX, a, b)]
    if ins.kind is GateKind.RXX:
        hadamards = [g(GateKind.H, a), g(GateKind.H, b)]
        return (
            hadamards
            + [g(GateKind.CX, a, b), g(GateKind.RZ, b, params=ins.params), g(GateKind.CX, a, b)]
            + hadamards
        )
    raise ArchitectureError(f"remote {ins.kind.value} cannot be decomposed into CNOTs")


def check_classical_locality(c: Circuit, pm: PartitionMap) -> None:
    """Local gates may only be conditioned on clbits last measured on their own QPU"""
    written: Dict[int, str] = {}
    for i, ins in enumerate(c.instructions):
        qpus = {pm.qpu_of(q) for q in ins.qubits}
        if ins.condition is not None and len(qpus) == 1:
            qpu = next(iter(qpus))
            bit = ins.condition[0]
            source = written.get(bit, qpu)
            if source != qpu:
                raise ArchitectureError(
                    f"{ins.kind.value} at instruction {i} on {qpu} is conditioned on clbit {bit} "
                    f"measured on {source}; cross-QPU classical control is not supported"
                )
        for bit in ins.clbits:
            written[bit] = next(iter(qpus))


def decompose_to_remote_cnots(c: Circuit, rg: Sequence[RemoteGate]) -> Circuit:
    remote = {r.index: r for r in rg}
    out: List[Instruction] = []
    for i, ins in enumerate(c.instructions):
        if i not in remote:
            out.append(ins)
            continue
        if ins.kind not in DECOMPOSABLE:
            raise ArchitectureError(f"remote {ins.kind.value} at instruction {i} is not supported")
        if ins.condition is not None:
            raise ArchitectureError(
                f"remote {ins.kind.value} at instruction {i} carries a classical condition"
            )
        out.extend(_as_cnots(ins))
    return c.with_instructions(out)


def route_es(crg: RemoteGate, spec: ArchitectureSpec) -> EsPath:
    """Cheapest simple path by (hops, length, QPU-id sequence)"""
    graph = spec.network.graph()
    a, b = crg.control_qpu, crg.target_qpu
    if a not in graph or b not in graph:
        raise RoutingError(f"no optical path between {a} and {b}")
    if graph.has_edge(a, b):
        return EsPath((a, b), graph[a][b]["length_km"])

    best: Optional[Tuple[int, float, Tuple[str, ...]]] = None
    for path in nx.all_simple_paths(graph, a, b):
        length = sum(graph[u][v]["length_km"] for u, v in zip(path, path[1:]))
        key = (len(path) - 1, length, tuple(path))
        if best is None or key < best:
            best = key
    if best is None:
        raise RoutingError(f"no optical path between {a} and {b}")
    return EsPath(best[2], best[1])


def allocate_comm_qubits(
    paths: Sequence[EsPath], spec: ArchitectureSpec, pm: PartitionMap
) -> CommAllocation:
    need: Dict[str, int] = {}
    for path in paths:
        for qpu in (path.qpus[0], path.qpus[-1]):
            need[qpu] = max(need.get(qpu, 0), 1)
        for qpu in path.repeaters:
            need[qpu] = 2

    qubits: Dict[str, Tuple[int, ...]] = {}
    roles: Dict[str, Tuple[str, ...]] = {}
    for qpu in spec.qpus:
        count = need.get(qpu.id, 0)
        if count == 0:
            continue
        data = len(pm.qubits_on(qpu.id))
        if data + count > qpu.num_qubits:
            raise CapacityError(
                f"QPU '{qpu.id}' needs {data} data + {count} communication qubits but has "
                f"{qpu.num_qubits} (short by {data + count - qpu.num_qubits})"
            )
        qubits[qpu.id] = tuple(qpu.num_qubits - 1 - k for k in range(count))
        roles[qpu.id] = (
            (ROLE_REPEATER_LEFT, ROLE_REPEATER_RIGHT) if count == 2 else (ROLE_ENDPOINT,)
        )
    return CommAllocation(qubits=qubits, roles=roles)


def _tag(n: int, suffix: str) -> str:
    return f"rg{n:04d}:{suffix}"


class _Placer:
    """Emits the logical DQC instruction stream over the extended register"""

    def __init__(self, c: Circuit, pm: PartitionMap, alloc: CommAllocation, spec: ArchitectureSpec):
        self.num_data_qubits = c.num_qubits
        self.num_data_clbits = c.num_clbits
        self.comm: Dict[str, List[int]] = {}
        homes: List[Tuple[str, int]] = []
        for q in range(c.num_qubits):
            qpu = pm.qpu_of(q)
            homes.append((qpu, pm.qubits_on(qpu).index(q)))
        index = c.num_qubits
        for qpu in spec.qpu_ids:
            for local in alloc.qubits.get(qpu, ()):
                self.comm.setdefault(qpu, []).append(index)
                homes.append((qpu, local))
                index += 1
        self.homes = tuple(homes)
        self.num_qubits = index
        self.num_clbits = c.num_clbits
        self.out: List[Instruction] = []

    def clbit(self) -> int:
        self.num_clbits += 1
        return self.num_clbits - 1

    def emit(self, kind: GateKind, *qubits: int, tag: str, condition=None, clbits=()) -> None:
        self.out.append(Instruction(kind, tuple(qubits), (), tuple(clbits), condition, tag))

    def remote_cx(self, n: int, rg: RemoteGate, path: EsPath) -> None:
        e_a = self.comm[path.qpus[0]][0]
        e_b = self.comm[path.qpus[-1]][0]

        def left_half(j: int) -> int:
            return e_a if j == 0 else self.comm[path.qpus[j]][1]

        def right_half(j: int) -> int:
            return e_b if j == path.hops - 1 else self.comm[path.qpus[j + 1]][0]

        for j in range(path.hops):
            tag = _tag(n, f"epr{j:02d}")
            self.emit(GateKind.H, left_half(j), tag=tag)
            self.emit(GateKind.CX, left_half(j), right_half(j), tag=tag)

        for i in range(1, path.hops):
            tag = _tag(n, f"es{i:02d}")
            rl, rr = self.comm[path.qpus[i]]
            x = right_half(i)
            m1, m2 = self.clbit(), self.clbit()
            self.emit(GateKind.CX, rl, rr, tag=tag)
            self.emit(GateKind.H, rl, tag=tag)
            self.emit(GateKind.MEASURE, rl, tag=tag, clbits=(m1,))
            self.emit(GateKind.MEASURE, rr, tag=tag, clbits=(m2,))
            self.emit(GateKind.X, x, tag=tag, condition=(m2, 1))
            self.emit(GateKind.Z, x, tag=tag, condition=(m1, 1))
            self.emit(GateKind.RESET, rl, tag=tag)
            self.emit(GateKind.RESET, rr, tag=tag)

        c, t = rg.control, rg.target
        ma, mb = self.clbit(), self.clbit()
        self.emit(GateKind.CX, c, e_a, tag=_tag(n, "tg:local"))
        tag = _tag(n, "tg")
        self.emit(GateKind.MEASURE, e_a, tag=tag, clbits=(ma,))
        self.emit(GateKind.X, e_b, tag=tag, condition=(ma, 1))
        self.emit(GateKind.CX, e_b, t, tag=tag)
        self.emit(GateKind.H, e_b, tag=tag)
        self.emit(GateKind.MEASURE, e_b, tag=tag, clbits=(mb,))
        self.emit(GateKind.Z, c, tag=tag, condition=(mb, 1))
        self.emit(GateKind.RESET, e_a, tag=tag)
        self.emit(GateKind.RESET, e_b, tag=tag)

    def build(self) -> Circuit:
        roles = (QubitRole.DATA,) * self.num_data_qubits + (QubitRole.COMMUNICATION,) * (
            self.num_qubits - self.num_data_qubits
        )
        return Circuit(
            num_qubits=self.num_qubits,
            num_clbits=self.num_clbits,
            instructions=tuple(self.out),
            qubit_roles=roles,
            qubit_homes=self.homes,
        )


def place_es_and_telegate(
    c: Circuit,
    crg: Sequence[RemoteGate],
    paths: Sequence[EsPath],
    alloc: CommAllocation,
    pm: PartitionMap,
    spec: ArchitectureSpec,
) -> Circuit:
    placer = _Placer(c, pm, alloc, spec)
    by_index = {rg.index: (n, rg, path) for n, (rg, path) in enumerate(zip(crg, paths))}
    for i, ins in enumerate(c.instructions):
        if i in by_index:
            placer.remote_cx(*by_index[i])
        else:
            placer.out.append(ins)
    return placer.build()


def construct(
    c: Circuit, spec: ArchitectureSpec, pm: Optional[PartitionMap] = None
) -> Construction:
    pm = pm or default_partition(c, spec)
    check_classical_locality(c, pm)
    rg = identify_remote_gates(c, pm)
    decomposed = decompose_to_remote_cnots(c, rg)
    crg = identify_remote_gates(decomposed, pm)

    routes: Dict[Tuple[str, str], EsPath] = {}
    paths = []
    for gate in crg:
        key = (gate.control_qpu, gate.target_qpu)
        if key not in routes:
            routes[key] = route_es(gate, spec)
            logger.debug(f"ES route {key[0]} -> {key[1]}: {' - '.join(routes[key].qpus)}")
        paths.append(routes[key])

    alloc = allocate_comm_qubits(paths, spec, pm)
    dqc = place_es_and_telegate(decomposed, crg, paths, alloc, pm, spec)
    construction = Construction(
        circuit=dqc,
        partition=pm,
        remote_gates=tuple(crg),
        paths=tuple(paths),
        allocation=alloc,
        num_data_qubits=c.num_qubits,
        num_data_clbits=c.num_clbits,
    )
    logger.info(
        f"Constructed logical DQC circuit: {len(rg)} remote gate(s), {len(crg)} remote CNOT(s), "
        f"{construction.epr_pairs} EPR pair(s), {construction.comm_qubits} comm qubit(s)"
    )
    return construction
