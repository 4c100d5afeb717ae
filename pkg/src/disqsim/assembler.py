"""
DQC assembler
Merges independently transpiled subcircuits into one executable circuit by resolving
virtual gates at sync points, then derives the execution trace
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from disqsim.architecture import ArchitectureSpec
from disqsim.circuit import (
    Circuit,
    ExecutionTrace,
    GateKind,
    Instruction,
    QubitRole,
    TraceEntry,
    build_dag,
    topological_order,
)
from disqsim.circuit_io import circuit_from_dict, circuit_to_dict
from disqsim.errors import DeadlockError, InvariantError
from disqsim.isolator import PIN_TAG, SyncEntry, VgCase, VgSide, case_of_tag, split_vg_tag
from disqsim.transpiler import TranspiledSubcircuit

logger = logging.getLogger(__name__)

LINK = "link"


@dataclass(frozen=True)
class SyncPoint:
    sync_id: str
    case: VgCase
    waiting_sides: Tuple[VgSide, ...]
    resolution: Tuple[Instruction, ...]


@dataclass(frozen=True)
class AssembledCircuit:
    circuit: Circuit
    qpu_of_qubit: Dict[int, str]
    trace: ExecutionTrace
    data_clbits: int
    comm_qubits: Tuple[int, ...] = ()
    origins: Tuple[str, ...] = ()
    sync_ids: Tuple[Optional[str], ...] = ()
    sync_points: Tuple[SyncPoint, ...] = field(default=(), compare=False)

    @property
    def epr_pairs(self) -> int:
        return len({s for s in self.sync_ids if s and case_of_tag(s) is VgCase.EPR_PAIR})

    def to_dict(self) -> dict:
        return {
            "circuit": circuit_to_dict(self.circuit),
            "qpu_of_qubit": {str(q): qpu for q, qpu in sorted(self.qpu_of_qubit.items())},
            "data_clbits": self.data_clbits,
            "comm_qubits": list(self.comm_qubits),
            "origins": list(self.origins),
            "sync_ids": list(self.sync_ids),
            "epr_pairs": self.epr_pairs,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AssembledCircuit":
        circuit = circuit_from_dict(data["circuit"])
        sync_ids = tuple(data["sync_ids"])
        assembled = cls(
            circuit=circuit,
            qpu_of_qubit={int(q): qpu for q, qpu in data["qpu_of_qubit"].items()},
            trace=ExecutionTrace(order=tuple(range(len(circuit)))),
            data_clbits=data["data_clbits"],
            comm_qubits=tuple(data["comm_qubits"]),
            origins=tuple(data["origins"]),
            sync_ids=sync_ids,
        )
        return _with_trace(assembled)


class _Merge:
    def __init__(
        self,
        subs: Sequence[TranspiledSubcircuit],
        sync_table: Dict[str, SyncEntry],
        spec: ArchitectureSpec,
    ):
        offsets = spec.offsets()
        self.subs = list(subs)
        self.sync_table = sync_table
        self.offset = {sub.qpu_id: offsets[sub.qpu_id] for sub in self.subs}
        self.owner = {
            offsets[qpu.id] + p: qpu.id for qpu in spec.qpus for p in range(qpu.num_qubits)
        }
        self.cursor = {sub.qpu_id: 0 for sub in self.subs}
        self.blocked: Dict[str, Tuple[str, VgSide, Instruction]] = {}
        self.out: List[Instruction] = []
        self.origins: List[str] = []
        self.sync_ids: List[Optional[str]] = []
        self.points: List[SyncPoint] = []

    def globalize(self, qpu: str, ins: Instruction) -> Instruction:
        offset = self.offset[qpu]
        return ins.replace(qubits=tuple(offset + q for q in ins.qubits))

    def advance(self, sub: TranspiledSubcircuit) -> bool:
        qpu = sub.qpu_id
        if qpu in self.blocked:
            return False
        instructions = sub.circuit.instructions
        moved = False
        while self.cursor[qpu] < len(instructions):
            ins = instructions[self.cursor[qpu]]
            if ins.kind is GateKind.VIRTUAL:
                sync_id, side = split_vg_tag(ins.tag or "")
                if sync_id not in self.sync_table:
                    raise InvariantError(f"virtual gate {ins.tag} on {qpu} has no sync entry")
                self.blocked[qpu] = (sync_id, side, ins)
                return moved
            self.cursor[qpu] += 1
            moved = True
            if ins.kind is GateKind.BARRIER and ins.tag == PIN_TAG:
                continue
            self.out.append(self.globalize(qpu, ins))
            self.origins.append(qpu)
            self.sync_ids.append(None)
        return moved

    def resolvable(self) -> List[str]:
        waiting = sorted({sync_id for sync_id, _, _ in self.blocked.values()})
        ready = []
        for sync_id in waiting:
            entry = self.sync_table[sync_id]
            if all(
                self.blocked.get(qpu, (None, None))[:2] == (sync_id, side)
                for side, qpu in entry.sides.items()
            ):
                ready.append(sync_id)
        return ready

    def resolve(self, sync_id: str) -> None:
        entry = self.sync_table[sync_id]
        qubit_map: Dict[int, int] = {}
        for side, qpu in entry.sides.items():
            _, _, vg = self.blocked.pop(qpu)
            sub = next(s for s in self.subs if s.qpu_id == qpu)
            record = next(
                r for r in sub.vg_records if r.sync_id == sync_id and r.side is side
            )
            if len(record.global_qubits) != len(vg.qubits):
                raise InvariantError(f"{sync_id}/{side.value} changed arity during transpilation")
            for logical, physical in zip(record.global_qubits, vg.qubits):
                qubit_map[logical] = self.offset[qpu] + physical
            self.cursor[qpu] += 1

        payload = tuple(ins.remap(qubit_map) for ins in entry.payload)
        for ins in payload:
            self.out.append(ins)
            self.origins.append(LINK if entry.case is VgCase.EPR_PAIR else self._origin(ins))
            self.sync_ids.append(sync_id)
        self.points.append(SyncPoint(sync_id, entry.case, tuple(entry.sides), payload))
        logger.debug(f"Resolved sync {sync_id} ({entry.case.value}), {len(payload)} instruction(s)")

    def _origin(self, ins: Instruction) -> str:
        owners = {self.owner.get(q, LINK) for q in ins.qubits}
        return owners.pop() if len(owners) == 1 else LINK

    def run(self) -> None:
        while True:
            for sub in self.subs:
                self.advance(sub)
            exhausted = all(
                self.cursor[s.qpu_id] >= len(s.circuit.instructions) for s in self.subs
            )
            if exhausted and not self.blocked:
                return
            ready = self.resolvable()
            if not ready:
                raise DeadlockError(sorted({sync_id for sync_id, _, _ in self.blocked.values()}))
            for sync_id in ready:
                self.resolve(sync_id)


def _with_trace(a: AssembledCircuit) -> AssembledCircuit:
    return AssembledCircuit(
        circuit=a.circuit,
        qpu_of_qubit=a.qpu_of_qubit,
        trace=derive_trace(a),
        data_clbits=a.data_clbits,
        comm_qubits=a.comm_qubits,
        origins=a.origins,
        sync_ids=a.sync_ids,
        sync_points=a.sync_points,
    )


def assemble(
    subs: Sequence[TranspiledSubcircuit],
    sync_table: Dict[str, SyncEntry],
    spec: ArchitectureSpec,
    comm_qubits: Sequence[int] = (),
) -> AssembledCircuit:
    """Multi-cursor merge; comm_qubits are logical-global comm indices used for roles"""
    merge = _Merge(subs, sync_table, spec)
    merge.run()

    data_clbits = max((s.circuit.num_clbits for s in subs), default=0)
    payload_bits = [b for ins in merge.out for b in ins.clbits] + [
        ins.condition[0] for ins in merge.out if ins.condition is not None
    ]
    num_clbits = max([data_clbits] + [b + 1 for b in payload_bits])

    qpu_of_qubit = dict(merge.owner)
    offsets = spec.offsets()

    logical_comm = set(comm_qubits)
    comm_physical = []
    for sub in subs:
        for virtual, physical in sub.layout.items():
            if sub.local_to_global.get(virtual) in logical_comm:
                comm_physical.append(offsets[sub.qpu_id] + physical)
    comm_physical.sort()
    comm_set = set(comm_physical)
    roles = tuple(
        QubitRole.COMMUNICATION if q in comm_set else QubitRole.DATA
        for q in range(spec.total_qubits)
    )

    circuit = Circuit(
        num_qubits=spec.total_qubits,
        num_clbits=num_clbits,
        instructions=tuple(merge.out),
        qubit_roles=roles,
    )
    assembled = _with_trace(
        AssembledCircuit(
            circuit=circuit,
            qpu_of_qubit=qpu_of_qubit,
            trace=ExecutionTrace(order=()),
            data_clbits=data_clbits,
            comm_qubits=tuple(comm_physical),
            origins=tuple(merge.origins),
            sync_ids=tuple(merge.sync_ids),
            sync_points=tuple(merge.points),
        )
    )
    logger.info(
        f"Assembled {len(circuit)} instruction(s) over {circuit.num_qubits} qubits, "
        f"{len(merge.points)} sync point(s) resolved"
    )
    return assembled


def derive_trace(a: AssembledCircuit) -> ExecutionTrace:
    trace = topological_order(build_dag(a.circuit))
    entries = []
    for position, index in enumerate(trace.order):
        ins = a.circuit.instructions[index]
        entries.append(
            TraceEntry(
                index=position,
                instruction=index,
                qpu=a.origins[index] if a.origins else None,
                kind=ins.kind.value,
                qubits=ins.qubits,
                sync_id=a.sync_ids[index] if a.sync_ids else None,
            )
        )
    return ExecutionTrace(order=trace.order, entries=tuple(entries))
