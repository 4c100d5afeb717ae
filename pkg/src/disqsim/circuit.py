"""
Circuit intermediate representation
Gate alphabet, instructions, immutable circuits, the dependency DAG and circuit metrics.
The same Circuit type carries monolithic, logical-DQC, isolated and assembled circuits.
"""

import dataclasses
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx

from disqsim.errors import CycleError, InputError

logger = logging.getLogger(__name__)


class GateKind(str, Enum):
    """Instruction kinds; the value is the native-json spelling"""

    H = "H"
    X = "X"
    Y = "Y"
    Z = "Z"
    S = "S"
    SDG = "Sdg"
    T = "T"
    TDG = "Tdg"
    SX = "SX"
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    CX = "CX"
    CZ = "CZ"
    SWAP = "SWAP"
    RZZ = "RZZ"
    RXX = "RXX"
    MEASURE = "Measure"
    RESET = "Reset"
    BARRIER = "Barrier"
    VIRTUAL = "VirtualGate"

    @property
    def arity(self) -> Optional[int]:
        """Fixed qubit count, or None for variadic kinds"""
        if self in TWO_QUBIT_KINDS:
            return 2
        if self in (GateKind.BARRIER, GateKind.VIRTUAL, GateKind.MEASURE):
            return None
        return 1

    @property
    def num_params(self) -> int:
        return 1 if self in ROTATION_KINDS else 0

    @property
    def is_unitary(self) -> bool:
        return self not in NON_UNITARY_KINDS


TWO_QUBIT_KINDS = frozenset(
    {GateKind.CX, GateKind.CZ, GateKind.SWAP, GateKind.RZZ, GateKind.RXX}
)
ROTATION_KINDS = frozenset(
    {GateKind.RX, GateKind.RY, GateKind.RZ, GateKind.RZZ, GateKind.RXX}
)
NON_UNITARY_KINDS = frozenset(
    {GateKind.MEASURE, GateKind.RESET, GateKind.BARRIER, GateKind.VIRTUAL}
)
ENTANGLING_KINDS = frozenset({GateKind.CX, GateKind.CZ, GateKind.RZZ, GateKind.RXX})


class QubitRole(str, Enum):
    DATA = "data"
    COMMUNICATION = "communication"


@dataclass(frozen=True)
class Instruction:
    """One circuit operation. Measure writes clbits[i] from qubits[i]."""

    kind: GateKind
    qubits: Tuple[int, ...]
    params: Tuple[float, ...] = ()
    clbits: Tuple[int, ...] = ()
    condition: Optional[Tuple[int, int]] = None
    tag: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.qubits:
            raise InputError(f"{self.kind.value} needs at least one qubit")
        if len(set(self.qubits)) != len(self.qubits):
            raise InputError(f"{self.kind.value} repeats a qubit: {list(self.qubits)}")
        arity = self.kind.arity
        if arity is not None and len(self.qubits) != arity:
            raise InputError(
                f"{self.kind.value} acts on {arity} qubit(s), got {len(self.qubits)}"
            )
        if len(self.params) != self.kind.num_params:
            raise InputError(
                f"{self.kind.value} takes {self.kind.num_params} parameter(s), got {len(self.params)}"
            )
        if any(not math.isfinite(p) for p in self.params):
            raise InputError(f"{self.kind.value} has a non-finite parameter")
        if self.kind is GateKind.MEASURE:
            if len(self.clbits) != len(self.qubits):
                raise InputError("Measure writes exactly one clbit per measured qubit")
        elif self.clbits:
            raise InputError(f"{self.kind.value} cannot write classical bits")
        if self.condition is not None:
            if not self.kind.is_unitary:
                raise InputError(f"{self.kind.value} cannot be classically conditioned")
            if self.condition[1] not in (0, 1):
                raise InputError("condition value must be 0 or 1")

    @property
    def is_unitary(self) -> bool:
        return self.kind.is_unitary

    def replace(self, **changes) -> "Instruction":
        return dataclasses.replace(self, **changes)

    def remap(
        self,
        qubit_map: Mapping[int, int],
        clbit_map: Optional[Mapping[int, int]] = None,
    ) -> "Instruction":
        """Rename qubits (and clbits, including the condition source)"""
        clbits = self.clbits
        condition = self.condition
        if clbit_map is not None:
            clbits = tuple(clbit_map[b] for b in self.clbits)
            if condition is not None:
                condition = (clbit_map[condition[0]], condition[1])
        return dataclasses.replace(
            self,
            qubits=tuple(qubit_map[q] for q in self.qubits),
            clbits=clbits,
            condition=condition,
        )


@dataclass(frozen=True)
class Circuit:
    """Immutable circuit over qubit and classical-bit registers"""

    num_qubits: int
    num_clbits: int = 0
    instructions: Tuple[Instruction, ...] = ()
    qubit_roles: Tuple[QubitRole, ...] = ()
    qubit_homes: Optional[Tuple[Tuple[str, int], ...]] = None

    def __post_init__(self) -> None:
        if not isinstance(self.instructions, tuple):
            object.__setattr__(self, "instructions", tuple(self.instructions))
        if not self.qubit_roles:
            object.__setattr__(self, "qubit_roles", (QubitRole.DATA,) * self.num_qubits)
        elif not isinstance(self.qubit_roles, tuple):
            object.__setattr__(self, "qubit_roles", tuple(self.qubit_roles))
        if len(self.qubit_roles) != self.num_qubits:
            raise InputError(
                f"{len(self.qubit_roles)} qubit roles declared for {self.num_qubits} qubits"
            )
        if self.qubit_homes is not None and len(self.qubit_homes) != self.num_qubits:
            raise InputError("qubit_homes must name a home for every qubit")
        for position, ins in enumerate(self.instructions):
            for q in ins.qubits:
                if not 0 <= q < self.num_qubits:
                    raise InputError(
                        f"instruction {position} ({ins.kind.value}) uses qubit {q}, "
                        f"circuit has {self.num_qubits}"
                    )
            bits = list(ins.clbits)
            if ins.condition is not None:
                bits.append(ins.condition[0])
            for b in bits:
                if not 0 <= b < self.num_clbits:
                    raise InputError(
                        f"instruction {position} ({ins.kind.value}) uses clbit {b}, "
                        f"circuit has {self.num_clbits}"
                    )

    def __len__(self) -> int:
        return len(self.instructions)

    @property
    def data_qubits(self) -> List[int]:
        return [q for q, role in enumerate(self.qubit_roles) if role is QubitRole.DATA]

    @property
    def comm_qubits(self) -> List[int]:
        return [q for q, role in enumerate(self.qubit_roles) if role is QubitRole.COMMUNICATION]

    def with_instructions(self, instructions: Iterable[Instruction]) -> "Circuit":
        return dataclasses.replace(self, instructions=tuple(instructions))

    def has_measurements(self) -> bool:
        return any(ins.kind is GateKind.MEASURE for ins in self.instructions)


class CircuitBuilder:
    """Mutable helper that appends instructions and freezes them into a Circuit"""

    def __init__(self, num_qubits: int, num_clbits: int = 0):
        self.num_qubits = num_qubits
        self.num_clbits = num_clbits
        self.instructions: List[Instruction] = []

    def append(self, instruction: Instruction) -> "CircuitBuilder":
        self.instructions.append(instruction)
        return self

    def gate(
        self,
        kind: GateKind,
        *qubits: int,
        params: Sequence[float] = (),
        condition: Optional[Tuple[int, int]] = None,
        tag: Optional[str] = None,
    ) -> "CircuitBuilder":
        return self.append(
            Instruction(kind, tuple(qubits), tuple(float(p) for p in params), (), condition, tag)
        )

    def h(self, q: int) -> "CircuitBuilder":
        return self.gate(GateKind.H, q)

    def x(self, q: int) -> "CircuitBuilder":
        return self.gate(GateKind.X, q)

    def y(self, q: int) -> "CircuitBuilder":
        return self.gate(GateKind.Y, q)

    def z(self, q: int) -> "CircuitBuilder":
        return self.gate(GateKind.Z, q)

    def s(self, q: int) -> "CircuitBuilder":
        return self.gate(GateKind.S, q)

    def t(self, q: int) -> "CircuitBuilder":
        return self.gate(GateKind.T, q)

    def tdg(self, q: int) -> "CircuitBuilder":
        return self.gate(GateKind.TDG, q)

    def rx(self, q: int, theta: float) -> "CircuitBuilder":
        return self.gate(GateKind.RX, q, params=(theta,))

    def ry(self, q: int, theta: float) -> "CircuitBuilder":
        return self.gate(GateKind.RY, q, params=(theta,))

    def rz(self, q: int, theta: float) -> "CircuitBuilder":
        return self.gate(GateKind.RZ, q, params=(theta,))

    def cx(self, control: int, target: int) -> "CircuitBuilder":
        return self.gate(GateKind.CX, control, target)

    def cz(self, a: int, b: int) -> "CircuitBuilder":
        return self.gate(GateKind.CZ, a, b)

    def swap(self, a: int, b: int) -> "CircuitBuilder":
        return self.gate(GateKind.SWAP, a, b)

    def rzz(self, a: int, b: int, theta: float) -> "CircuitBuilder":
        return self.gate(GateKind.RZZ, a, b, params=(theta,))

    def rxx(self, a: int, b: int, theta: float) -> "CircuitBuilder":
        return self.gate(GateKind.RXX, a, b, params=(theta,))

    def ccx(self, a: int, b: int, c: int) -> "CircuitBuilder":
        """Toffoli in the standard 6-CX decomposition"""
        self.h(c).cx(b, c).tdg(c).cx(a, c).t(c).cx(b, c).tdg(c).cx(a, c)
        self.t(b).t(c).h(c).cx(a, b).t(a).tdg(b).cx(a, b)
        return self

    def measure(self, q: int, c: int) -> "CircuitBuilder":
        return self.append(Instruction(GateKind.MEASURE, (q,), (), (c,)))

    def measure_all(self) -> "CircuitBuilder":
        for q in range(self.num_qubits):
            self.measure(q, q)
        return self

    def reset(self, q: int) -> "CircuitBuilder":
        return self.gate(GateKind.RESET, q)

    def barrier(self, *qubits: int, tag: Optional[str] = None) -> "CircuitBuilder":
        return self.gate(GateKind.BARRIER, *(qubits or range(self.num_qubits)), tag=tag)

    def build(self) -> Circuit:
        return Circuit(self.num_qubits, self.num_clbits, tuple(self.instructions))


def ensure_measured(c: Circuit) -> Circuit:
    """Append a measurement of every data qubit when the circuit measures nothing"""
    if c.has_measurements():
        return c
    data = c.data_qubits
    logger.warning(f"Circuit has no measurements; measuring all {len(data)} data qubits")
    num_clbits = max(c.num_clbits, len(data))
    extra = [Instruction(GateKind.MEASURE, (q,), (), (i,)) for i, q in enumerate(data)]
    return dataclasses.replace(
        c, num_clbits=num_clbits, instructions=c.instructions + tuple(extra)
    )


# Dependency DAG


@dataclass(frozen=True)
class DependencyDag:
    """Nodes are instruction indices; edges follow shared qubits and clbits"""

    graph: nx.DiGraph
    instructions: Tuple[Instruction, ...]

    def __len__(self) -> int:
        return self.graph.number_of_nodes()

    def edges(self) -> List[Tuple[int, int]]:
        return sorted(self.graph.edges())


@dataclass(frozen=True)
class TraceEntry:
    index: int
    instruction: int
    qpu: Optional[str]
    kind: str
    qubits: Tuple[int, ...]
    sync_id: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "qpu": self.qpu,
            "kind": self.kind,
            "qubits": list(self.qubits),
            "sync_id": self.sync_id,
        }


@dataclass(frozen=True)
class ExecutionTrace:
    """Total order over instruction indices, optionally annotated per entry"""

    order: Tuple[int, ...]
    entries: Tuple[TraceEntry, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.order)

    def position(self) -> Dict[int, int]:
        return {instruction: i for i, instruction in enumerate(self.order)}


def build_dag(c: Circuit) -> DependencyDag:
    graph = nx.DiGraph()
    graph.add_nodes_from(range(len(c.instructions)))
    last_on_qubit: Dict[int, int] = {}
    last_writer: Dict[int, int] = {}
    readers: Dict[int, List[int]] = defaultdict(list)

    for i, ins in enumerate(c.instructions):
        for q in ins.qubits:
            if q in last_on_qubit:
                graph.add_edge(last_on_qubit[q], i)
            last_on_qubit[q] = i
        if ins.condition is not None:
            bit = ins.condition[0]
            if bit in last_writer:
                graph.add_edge(last_writer[bit], i)
            readers[bit].append(i)
        for bit in ins.clbits:
            if bit in last_writer:
                graph.add_edge(last_writer[bit], i)
            for reader in readers.pop(bit, []):
                graph.add_edge(reader, i)
            last_writer[bit] = i

    return DependencyDag(graph=graph, instructions=c.instructions)


def topological_order(d: DependencyDag) -> ExecutionTrace:
    """Kahn layer-by-layer order, ties broken by instruction index"""
    try:
        order: List[int] = []
        for generation in nx.topological_generations(d.graph):
            order.extend(sorted(generation))
    except nx.NetworkXUnfeasible:
        cycle = nx.find_cycle(d.graph)
        raise CycleError([(u, v) for u, v, *_ in cycle])
    return ExecutionTrace(order=tuple(order))


def reorder(c: Circuit, trace: ExecutionTrace) -> Circuit:
    """Replay a trace as an instruction list"""
    return c.with_instructions(c.instructions[i] for i in trace.order)


# Metrics


@dataclass(frozen=True)
class CircuitMetrics:
    qubits: int
    depth: int
    two_qubit_count: int
    igd: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def circuit_depth(c: Circuit, dag: Optional[DependencyDag] = None) -> int:
    """Longest DAG path, barriers and virtual gates weigh nothing"""
    dag = dag or build_dag(c)
    level = [0] * len(c.instructions)
    for i, ins in enumerate(c.instructions):
        weight = 0 if ins.kind in (GateKind.BARRIER, GateKind.VIRTUAL) else 1
        preceding = max((level[p] for p in dag.graph.predecessors(i)), default=0)
        level[i] = preceding + weight
    return max(level, default=0)


def interaction_pairs(c: Circuit) -> set:
    data = set(c.data_qubits)
    pairs = set()
    for ins in c.instructions:
        if ins.is_unitary and len(ins.qubits) == 2 and set(ins.qubits) <= data:
            pairs.add(frozenset(ins.qubits))
    return pairs


def circuit_metrics(c: Circuit) -> CircuitMetrics:
    n = len(c.data_qubits)
    two_qubit = sum(1 for ins in c.instructions if ins.is_unitary and len(ins.qubits) == 2)
    igd = len(interaction_pairs(c)) / (n * (n - 1) / 2) if n >= 2 else 0.0
    return CircuitMetrics(qubits=n, depth=circuit_depth(c), two_qubit_count=two_qubit, igd=igd)
