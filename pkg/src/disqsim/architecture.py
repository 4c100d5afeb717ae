"""
Architecture model
QPU profiles, optical network, partition and mapping; file loading, presets and the default partition
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import networkx as nx
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_serializer, field_validator

from disqsim.circuit import Circuit, GateKind
from disqsim.config import Config
from disqsim.errors import ArchitectureError, CapacityError

logger = logging.getLogger(__name__)

PRESET_DIR = Path(__file__).parent / "presets"
PRESET_NAMES = ("arch-a", "arch-b", "arch-c", "arch-d", "arch-e")

SUPERCONDUCTING_BASIS = frozenset({GateKind.RZ, GateKind.SX, GateKind.X, GateKind.CX})
ION_BASIS = frozenset({GateKind.RX, GateKind.RY, GateKind.RZ, GateKind.RXX})
TARGET_BASES: Dict[str, frozenset] = {"superconducting": SUPERCONDUCTING_BASIS, "ion": ION_BASIS}

DEFAULT_ALPHA = 0.05
DEFAULT_DISTANCE_KM = 0.2

# Per-QPU communication qubits reserved by the default partition, most pessimistic first
COMM_RESERVATIONS = (2, 1)


class DeviceNoiseProfile(BaseModel):
    """Depolarizing, readout and reset error rates of one device"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    p1: float = Field(0.0, ge=0.0, le=1.0)
    p2: float = Field(0.0, ge=0.0, le=1.0)
    p_ro: float = Field(0.0, ge=0.0, le=1.0)
    p_reset: float = Field(0.0, ge=0.0, le=1.0)

    @property
    def is_zero(self) -> bool:
        return self.p1 == self.p2 == self.p_ro == self.p_reset == 0.0


class QpuProfile(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    id: str = Field(min_length=1)
    num_qubits: int = Field(gt=0)
    coupling_map: List[Tuple[int, int]] = []
    basis_gates: List[GateKind]
    noise_profile: DeviceNoiseProfile = DeviceNoiseProfile()

    @field_validator("coupling_map", mode="before")
    @classmethod
    def parse_edges(cls, value):
        edges = []
        for edge in value or []:
            if isinstance(edge, str):
                try:
                    a, b = (int(part) for part in edge.split("-"))
                except ValueError:
                    raise ValueError(f"coupling edge must look like 'a-b', got {edge!r}")
            else:
                a, b = edge
            if a == b:
                raise ValueError(f"coupling edge {a}-{b} is a self-loop")
            edges.append((min(a, b), max(a, b)))
        return sorted(set(edges))

    @field_serializer("coupling_map")
    def dump_edges(self, edges: List[Tuple[int, int]]) -> List[str]:
        return [f"{a}-{b}" for a, b in edges]

    @property
    def all_to_all(self) -> bool:
        return not self.coupling_map

    @property
    def target(self) -> Optional[str]:
        """Name of the transpiler target the basis supports"""
        basis = set(self.basis_gates)
        for name, target in TARGET_BASES.items():
            if target <= basis:
                return name
        return None

    def coupling_graph(self) -> nx.Graph:
        if self.all_to_all:
            return nx.complete_graph(self.num_qubits)
        graph = nx.Graph()
        graph.add_nodes_from(range(self.num_qubits))
        graph.add_edges_from(self.coupling_map)
        return graph


class NetworkEdge(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    a: str
    b: str
    length_km: float = Field(gt=0.0)


class NetworkTopology(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    alpha: float = Field(DEFAULT_ALPHA, ge=0.0)
    edges: List[NetworkEdge] = []

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        for edge in self.edges:
            g.add_edge(edge.a, edge.b, length_km=edge.length_km)
        return g

    def length(self, a: str, b: str) -> float:
        for edge in self.edges:
            if {edge.a, edge.b} == {a, b}:
                return edge.length_km
        raise ArchitectureError(f"no optical link between {a} and {b}")


class PartitionSection(BaseModel):
    """File form of P and M: a strategy name, or an explicit qubit/partition table"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    strategy: Literal["fill", "balanced"] = "fill"
    qubits: Optional[Dict[int, int]] = None
    mapping: Optional[Dict[int, str]] = None


class ArchitectureSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = "custom"
    qpus: List[QpuProfile] = Field(min_length=1)
    network: NetworkTopology = NetworkTopology()
    partition: Optional[PartitionSection] = None

    def qpu(self, qpu_id: str) -> QpuProfile:
        for q in self.qpus:
            if q.id == qpu_id:
                return q
        raise ArchitectureError(f"unknown QPU '{qpu_id}'")

    @property
    def qpu_ids(self) -> List[str]:
        return [q.id for q in self.qpus]

    @property
    def total_qubits(self) -> int:
        return sum(q.num_qubits for q in self.qpus)

    def offsets(self) -> Dict[str, int]:
        """Global index of each QPU's local qubit 0, in declaration order"""
        offsets, running = {}, 0
        for q in self.qpus:
            offsets[q.id] = running
            running += q.num_qubits
        return offsets

    def is_networked(self, qpu_id: str) -> bool:
        return any(qpu_id in (e.a, e.b) for e in self.network.edges)


@dataclass(frozen=True)
class PartitionMap:
    """P (data qubit -> partition) and M (partition -> QPU)"""

    partition: Dict[int, int]
    mapping: Dict[int, str]

    def qpu_of(self, qubit: int) -> str:
        return self.mapping[self.partition[qubit]]

    def qubits_on(self, qpu_id: str) -> List[int]:
        return sorted(q for q, p in self.partition.items() if self.mapping[p] == qpu_id)

    def used_qpus(self) -> List[str]:
        return [self.mapping[p] for p in sorted(self.mapping)]

    def to_dict(self) -> dict:
        return {
            "qubits": {str(q): p for q, p in sorted(self.partition.items())},
            "mapping": {str(p): qpu for p, qpu in sorted(self.mapping.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PartitionMap":
        return cls(
            partition={int(q): int(p) for q, p in data["qubits"].items()},
            mapping={int(p): str(qpu) for p, qpu in data["mapping"].items()},
        )


def architecture_violations(spec: ArchitectureSpec) -> List[str]:
    """Semantic checks beyond the file schema; empty list means valid"""
    violations = []
    ids = spec.qpu_ids
    if len(set(ids)) != len(ids):
        violations.append(f"duplicate QPU ids: {ids}")
    for q in spec.qpus:
        for a, b in q.coupling_map:
            if b >= q.num_qubits:
                violations.append(f"{q.id}: coupling edge {a}-{b} out of range")
        if q.target is None:
            violations.append(
                f"{q.id}: basis {sorted(g.value for g in q.basis_gates)} is not universal; "
                f"expected a superset of {{RZ,SX,X,CX}} or {{RX,RY,RZ,RXX}}"
            )
        if any(not g.is_unitary for g in q.basis_gates):
            violations.append(f"{q.id}: basis may only list unitary gates")
        if not q.all_to_all and not nx.is_connected(q.coupling_graph()):
            violations.append(f"{q.id}: coupling map is disconnected")
    for e in spec.network.edges:
        if e.a == e.b:
            violations.append(f"network self-loop on {e.a}")
        for end in (e.a, e.b):
            if end not in ids:
                violations.append(f"network edge references unknown QPU '{end}'")
    part = spec.partition
    if part is not None and (part.qubits is None) != (part.mapping is None):
        violations.append("partition needs both 'qubits' and 'mapping', or neither")
    if part is not None and part.mapping is not None:
        targets = list(part.mapping.values())
        if len(set(targets)) != len(targets):
            violations.append("mapping assigns two partitions to one QPU")
        for pid, target in part.mapping.items():
            if target not in ids:
                violations.append(f"partition {pid} maps to unknown QPU '{target}'")
        if sorted(part.mapping) != list(range(len(part.mapping))):
            violations.append("partition ids must be contiguous from 0")
        for q, pid in (part.qubits or {}).items():
            if pid not in part.mapping:
                violations.append(f"qubit {q} assigned to unmapped partition {pid}")
    return violations


def _check_explicit_capacity(spec: ArchitectureSpec) -> None:
    part = spec.partition
    if part is None or part.qubits is None or part.mapping is None:
        return
    for pid, qpu_id in part.mapping.items():
        size = sum(1 for p in part.qubits.values() if p == pid)
        capacity = spec.qpu(qpu_id).num_qubits
        if size > capacity:
            raise CapacityError(
                f"partition {pid} has {size} qubits but QPU '{qpu_id}' has only {capacity}"
            )


def parse_architecture(data: dict) -> ArchitectureSpec:
    try:
        spec = ArchitectureSpec.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise ArchitectureError(f"invalid architecture at {location}: {first['msg']}")
    violations = architecture_violations(spec)
    if violations:
        raise ArchitectureError("; ".join(violations))
    _check_explicit_capacity(spec)
    return spec


def _resolve_path(source: Union[str, Path]) -> Path:
    path = Path(source)
    if path.is_file():
        return path
    name = str(source)
    arch_dir = Config().arch_dir
    candidates = [arch_dir / f"{name}.json"] if arch_dir else []
    candidates.append(PRESET_DIR / f"{name}.json")
    for candidate in candidates:
        if candidate.is_file():
            return candidate
    raise ArchitectureError(
        f"architecture '{name}' is neither a file nor a preset ({', '.join(list_presets())})"
    )


def load_architecture(source: Union[str, Path]) -> ArchitectureSpec:
    """Load a file path or a preset name"""
    path = _resolve_path(source)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ArchitectureError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}")
    spec = parse_architecture(data)
    logger.info(
        f"Loaded architecture '{spec.name}': {len(spec.qpus)} QPU(s), "
        f"{len(spec.network.edges)} optical link(s)"
    )
    return spec


def list_presets() -> List[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("arch-*.json"))


def canonical_json(spec: ArchitectureSpec) -> str:
    return json.dumps(spec.model_dump(mode="json"), indent=2) + "\n"


def with_distance(spec: ArchitectureSpec, length_km: float) -> ArchitectureSpec:
    if length_km <= 0:
        raise ArchitectureError(f"link length must be positive, got {length_km}")
    edges = [e.model_copy(update={"length_km": length_km}) for e in spec.network.edges]
    return spec.model_copy(update={"network": spec.network.model_copy(update={"edges": edges})})


def noise_free(spec: ArchitectureSpec) -> ArchitectureSpec:
    qpus = [q.model_copy(update={"noise_profile": DeviceNoiseProfile()}) for q in spec.qpus]
    return spec.model_copy(update={"qpus": qpus})


def summarize(spec: ArchitectureSpec) -> dict:
    return {
        "name": spec.name,
        "qpus": [
            {
                "id": q.id,
                "num_qubits": q.num_qubits,
                "target": q.target,
                "all_to_all": q.all_to_all,
                "noise_profile": q.noise_profile.model_dump(),
            }
            for q in spec.qpus
        ],
        "links": [[e.a, e.b, e.length_km] for e in spec.network.edges],
        "alpha": spec.network.alpha,
        "strategy": spec.partition.strategy if spec.partition else "fill",
    }


# Partitioning


def _fill(n: int, capacities: Sequence[int]) -> List[int]:
    sizes, remaining = [], n
    for cap in capacities:
        take = min(cap, remaining)
        sizes.append(take)
        remaining -= take
    return sizes


def _balanced(n: int, capacities: Sequence[int]) -> List[int]:
    """Largest-remainder split proportional to capacity"""
    total = sum(capacities)
    quotas = [n * cap / total for cap in capacities]
    sizes = [int(q) for q in quotas]
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def default_partition(c: Circuit, spec: ArchitectureSpec) -> PartitionMap:
    """Contiguous blocks of data qubits onto QPUs in declaration order"""
    data = c.data_qubits
    part = spec.partition
    if part is not None and part.qubits is not None and part.mapping is not None:
        missing = [q for q in data if q not in part.qubits]
        if missing:
            raise ArchitectureError(f"partition does not assign data qubits {missing}")
        return PartitionMap(
            partition={q: part.qubits[q] for q in data}, mapping=dict(part.mapping)
        )

    strategy = part.strategy if part is not None else "fill"
    n = len(data)
    for reserve in COMM_RESERVATIONS:
        capacities = [
            max(q.num_qubits - (reserve if spec.is_networked(q.id) else 0), 0)
            for q in spec.qpus
        ]
        if len(spec.qpus) == 1:
            capacities = [spec.qpus[0].num_qubits]
        if sum(capacities) >= n:
            break
        logger.debug(f"{n} qubits do not fit with {reserve} comm qubit(s) reserved per QPU")
    else:
        raise CapacityError(
            f"{n} data qubits exceed the capacity of '{spec.name}' "
            f"({sum(capacities)} after reserving communication qubits)"
        )

    sizes = _fill(n, capacities) if strategy == "fill" else _balanced(n, capacities)
    partition: Dict[int, int] = {}
    mapping: Dict[int, str] = {}
    cursor = 0
    for qpu, size in zip(spec.qpus, sizes):
        if size == 0:
            continue
        pid = len(mapping)
        mapping[pid] = qpu.id
        for q in data[cursor : cursor + size]:
            partition[q] = pid
        cursor += size
    logger.info(
        f"Partitioned {n} data qubits ({strategy}, {reserve} comm reserved): "
        + ", ".join(f"{mapping[p]}={sizes_}" for p, sizes_ in _sizes(partition, mapping).items())
    )
    return PartitionMap(partition=partition, mapping=mapping)


def _sizes(partition: Dict[int, int], mapping: Dict[int, str]) -> Dict[int, int]:
    counts = {p: 0 for p in mapping}
    for p in partition.values():
        counts[p] += 1
    return counts
