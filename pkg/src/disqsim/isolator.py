"""
DQC isolator
Cuts cross-QPU links into virtual gates pinned by barriers and splits the logical
DQC circuit into per-QPU subcircuits with a shared sync table
"""

import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from itertools import groupby
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from disqsim.circuit import Circuit, GateKind, Instruction
from disqsim.circuit_io import (
    circuit_from_dict,
    circuit_to_dict,
    instruction_from_dict,
    instruction_to_dict,
)
from disqsim.errors import InputError, IsolationError

logger = logging.getLogger(__name__)

PIN_TAG = "pin"


class VgCase(str, Enum):
    EPR_PAIR = "epr_pair"
    TELEGATE = "telegate_mc_pair"
    ES_BELL = "es_bell_pair"

    @property
    def sides(self) -> int:
        return 3 if self is VgCase.ES_BELL else 2


class VgSide(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    REPEATER = "repeater"
    ENDPOINT_A = "endpoint_a"
    ENDPOINT_B = "endpoint_b"


def case_of_tag(tag: str) -> Optional[VgCase]:
    """Classify a constructor tag such as rg0003:epr01; None for local tags"""
    if ":" not in tag:
        return None
    suffix = tag.split(":", 1)[1]
    if suffix.startswith("epr"):
        return VgCase.EPR_PAIR
    if suffix.startswith("es"):
        return VgCase.ES_BELL
    if suffix == "tg":
        return VgCase.TELEGATE
    return None


def vg_tag(sync_id: str, side: VgSide) -> str:
    return f"{sync_id}/{side.value}"


def split_vg_tag(tag: str) -> Tuple[str, VgSide]:
    sync_id, side = tag.rsplit("/", 1)
    return sync_id, VgSide(side)


@dataclass(frozen=True)
class VirtualGateRecord:
    sync_id: str
    case: VgCase
    side: VgSide
    local_qubits: Tuple[int, ...]
    global_qubits: Tuple[int, ...]
    original_payload: Tuple[Instruction, ...]

    def to_dict(self) -> dict:
        return {
            "sync_id": self.sync_id,
            "case": self.case.value,
            "side": self.side.value,
            "local_qubits": list(self.local_qubits),
            "global_qubits": list(self.global_qubits),
            "original_payload": [instruction_to_dict(i) for i in self.original_payload],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "VirtualGateRecord":
        return cls(
            sync_id=data["sync_id"],
            case=VgCase(data["case"]),
            side=VgSide(data["side"]),
            local_qubits=tuple(data["local_qubits"]),
            global_qubits=tuple(data["global_qubits"]),
            original_payload=tuple(instruction_from_dict(i) for i in data["original_payload"]),
        )


@dataclass(frozen=True)
class SyncEntry:
    case: VgCase
    sides: Dict[VgSide, str]
    payload: Tuple[Instruction, ...]

    def to_dict(self) -> dict:
        return {
            "case": self.case.value,
            "sides": {side.value: qpu for side, qpu in self.sides.items()},
            "payload": [instruction_to_dict(i) for i in self.payload],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SyncEntry":
        return cls(
            case=VgCase(data["case"]),
            sides={VgSide(side): qpu for side, qpu in data["sides"].items()},
            payload=tuple(instruction_from_dict(i) for i in data["payload"]),
        )


@dataclass(frozen=True)
class IsolatedSubcircuit:
    qpu_id: str
    circuit: Circuit
    vg_records: Tuple[VirtualGateRecord, ...]
    local_to_global: Dict[int, int]

    def record(self, sync_id: str) -> VirtualGateRecord:
        for r in self.vg_records:
            if r.sync_id == sync_id:
                return r
        raise IsolationError(f"{self.qpu_id} has no record for sync '{sync_id}'")

    def to_dict(self) -> dict:
        return {
            "qpu_id": self.qpu_id,
            "circuit": circuit_to_dict(self.circuit),
            "vg_records": [r.to_dict() for r in self.vg_records],
            "local_to_global": {str(k): v for k, v in sorted(self.local_to_global.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IsolatedSubcircuit":
        return cls(
            qpu_id=data["qpu_id"],
            circuit=circuit_from_dict(data["circuit"]),
            vg_records=tuple(VirtualGateRecord.from_dict(r) for r in data["vg_records"]),
            local_to_global={int(k): v for k, v in data["local_to_global"].items()},
        )


@dataclass(frozen=True)
class IsolationResult:
    """Subcircuits in QPU declaration order plus the shared sync table"""

    subcircuits: Tuple[IsolatedSubcircuit, ...]
    sync_table: Dict[str, SyncEntry]
    num_qubits: int
    num_clbits: int
    num_data_clbits: int
    qubit_roles: Tuple[str, ...]

    def subcircuit(self, qpu_id: str) -> IsolatedSubcircuit:
        for sub in self.subcircuits:
            if sub.qpu_id == qpu_id:
                return sub
        raise IsolationError(f"no subcircuit for QPU '{qpu_id}'")

    @property
    def vg_count(self) -> int:
        return sum(len(sub.vg_records) for sub in self.subcircuits)

    def to_dict(self) -> dict:
        return {
            "num_qubits": self.num_qubits,
            "num_clbits": self.num_clbits,
            "num_data_clbits": self.num_data_clbits,
            "qubit_roles": list(self.qubit_roles),
            "subcircuits": [sub.to_dict() for sub in self.subcircuits],
            "sync_table": sync_table_to_dict(self.sync_table),
        }

    @classmethod
    def from_dict(cls, data: dict, sync_table: Optional[dict] = None) -> "IsolationResult":
        return cls(
            subcircuits=tuple(IsolatedSubcircuit.from_dict(s) for s in data["subcircuits"]),
            sync_table=sync_table_from_dict(
                sync_table if sync_table is not None else data["sync_table"]
            ),
            num_qubits=data["num_qubits"],
            num_clbits=data["num_clbits"],
            num_data_clbits=data["num_data_clbits"],
            qubit_roles=tuple(data["qubit_roles"]),
        )


def sync_table_to_dict(table: Dict[str, SyncEntry]) -> dict:
    return {sync_id: table[sync_id].to_dict() for sync_id in sorted(table)}


def sync_table_from_dict(data: dict) -> Dict[str, SyncEntry]:
    return {sync_id: SyncEntry.from_dict(entry) for sync_id, entry in data.items()}


class _Splitter:
    """Walks the logical DQC circuit and appends to per-QPU instruction lists"""

    def __init__(self, dqc: Circuit, qpu_order: Sequence[str]):
        if dqc.qubit_homes is None:
            raise IsolationError("circuit has no qubit homes; run the constructor first")
        self.dqc = dqc
        self.homes = dqc.qubit_homes
        self.qpus = [q for q in qpu_order if any(h[0] == q for h in self.homes)]
        self.out: Dict[str, List[Instruction]] = {q: [] for q in self.qpus}
        self.records: Dict[str, List[VirtualGateRecord]] = {q: [] for q in self.qpus}
        self.sync_table: Dict[str, SyncEntry] = {}
        self.clbit_home: Dict[int, str] = {}
        self.first_half: Dict[str, int] = {}
        self.num_data_clbits = self._data_clbits()

    def _data_clbits(self) -> int:
        tagged = {b for ins in self.dqc.instructions if ins.tag for b in ins.clbits}
        return min(tagged) if tagged else self.dqc.num_clbits

    def qpu(self, q: int) -> str:
        return self.homes[q][0]

    def local(self, q: int) -> int:
        return self.homes[q][1]

    def local_instruction(self, ins: Instruction, position: int) -> None:
        qpus = {self.qpu(q) for q in ins.qubits}
        if len(qpus) > 1:
            if ins.kind is not GateKind.BARRIER:
                raise IsolationError(
                    f"untagged instruction {position} ({ins.kind.value}) spans QPUs {sorted(qpus)}"
                )
            for qpu in self.qpus:
                mine = tuple(self.local(q) for q in ins.qubits if self.qpu(q) == qpu)
                if mine:
                    self.out[qpu].append(ins.replace(qubits=mine))
            return
        qpu = qpus.pop()
        if ins.condition is not None:
            bit = ins.condition[0]
            if self.clbit_home.get(bit, qpu) != qpu or bit >= self.num_data_clbits:
                raise IsolationError(
                    f"instruction {position} on {qpu} is conditioned on clbit {bit} "
                    f"written on another QPU"
                )
        for bit in ins.clbits:
            self.clbit_home[bit] = qpu
        self.out[qpu].append(ins.replace(qubits=tuple(self.local(q) for q in ins.qubits)))

    def virtual_gate(
        self, sync_id: str, case: VgCase, side: VgSide, qubits: Sequence[int], payload
    ) -> None:
        qpu = self.qpu(qubits[0])
        if any(self.qpu(q) != qpu for q in qubits):
            raise IsolationError(f"{sync_id}/{side.value} covers qubits on several QPUs")
        local = tuple(self.local(q) for q in qubits)
        self.out[qpu].append(Instruction(GateKind.BARRIER, local, tag=PIN_TAG))
        self.out[qpu].append(Instruction(GateKind.VIRTUAL, local, tag=vg_tag(sync_id, side)))
        self.records[qpu].append(
            VirtualGateRecord(sync_id, case, side, local, tuple(qubits), tuple(payload))
        )

    def group(self, tag: str, case: VgCase, payload: List[Instruction]) -> None:
        rg = tag.split(":", 1)[0]
        kinds = [ins.kind for ins in payload]
        if case is VgCase.EPR_PAIR:
            if kinds != [GateKind.H, GateKind.CX]:
                raise IsolationError(f"{tag}: malformed EPR preparation")
            left, right = payload[1].qubits
            self.first_half.setdefault(rg, left)
            sides = {VgSide.LEFT: [left], VgSide.RIGHT: [right]}
        elif case is VgCase.ES_BELL:
            if len(payload) != 8 or rg not in self.first_half:
                raise IsolationError(f"{tag}: malformed entanglement swap")
            rl, rr = payload[0].qubits
            x = payload[4].qubits[0]
            sides = {
                VgSide.REPEATER: [rl, rr],
                VgSide.ENDPOINT_A: [self.first_half[rg]],
                VgSide.ENDPOINT_B: [x],
            }
        else:
            if len(payload) != 8:
                raise IsolationError(f"{tag}: malformed TeleGate block")
            e_a = payload[0].qubits[0]
            e_b, t = payload[2].qubits
            c = payload[5].qubits[0]
            sides = {VgSide.LEFT: [e_a, c], VgSide.RIGHT: [e_b, t]}

        for side, qubits in sides.items():
            self.virtual_gate(tag, case, side, qubits, payload)
        self.sync_table[tag] = SyncEntry(
            case=case,
            sides={side: self.qpu(qubits[0]) for side, qubits in sides.items()},
            payload=tuple(payload),
        )

    def run(self) -> None:
        position = 0
        for tag, run in groupby(self.dqc.instructions, key=lambda ins: ins.tag):
            block = list(run)
            case = case_of_tag(tag) if tag else None
            if case is None:
                for ins in block:
                    self.local_instruction(ins, position)
                    position += 1
            else:
                self.group(tag, case, block)
                position += len(block)


def isolate(dqc: Circuit, qpu_order: Sequence[str]) -> IsolationResult:
    """Split a logical DQC circuit; qpu_order is the architecture's declaration order"""
    splitter = _Splitter(dqc, qpu_order)
    splitter.run()

    subcircuits = []
    for qpu in splitter.qpus:
        local_to_global = {
            local: q for q, (home, local) in enumerate(dqc.qubit_homes) if home == qpu
        }
        circuit = Circuit(
            num_qubits=max(local_to_global) + 1,
            num_clbits=splitter.num_data_clbits,
            instructions=tuple(splitter.out[qpu]),
        )
        subcircuits.append(
            IsolatedSubcircuit(
                qpu_id=qpu,
                circuit=circuit,
                vg_records=tuple(splitter.records[qpu]),
                local_to_global=local_to_global,
            )
        )

    result = IsolationResult(
        subcircuits=tuple(subcircuits),
        sync_table=splitter.sync_table,
        num_qubits=dqc.num_qubits,
        num_clbits=dqc.num_clbits,
        num_data_clbits=splitter.num_data_clbits,
        qubit_roles=tuple(role.value for role in dqc.qubit_roles),
    )
    logger.info(
        f"Isolated {len(subcircuits)} subcircuit(s), {len(result.sync_table)} sync point(s), "
        f"{result.vg_count} virtual gate(s)"
    )
    return result


def validate_isolation(
    subs: Union[IsolationResult, Sequence[IsolatedSubcircuit]], dqc: Optional[Circuit] = None
) -> List[str]:
    """Violations of the isolation contract; an empty list means the split is sound"""
    if isinstance(subs, IsolationResult):
        subs = subs.subcircuits
    violations: List[str] = []

    groups: Dict[str, List[VirtualGateRecord]] = defaultdict(list)
    for sub in subs:
        for record in sub.vg_records:
            groups[record.sync_id].append(record)
            if not record.original_payload:
                violations.append(f"empty payload for {record.sync_id}/{record.side.value}")
    for sync_id in sorted(groups):
        records = groups[sync_id]
        expected = records[0].case.sides
        if len(records) < expected:
            violations.append(
                f"dangling sync {sync_id}: {len(records)} of {expected} sides present"
            )
        elif len(records) > expected:
            violations.append(f"sync {sync_id} appears on {len(records)} sides, expected {expected}")

    for sub in subs:
        instructions = sub.circuit.instructions
        for i, ins in enumerate(instructions):
            if ins.kind is not GateKind.VIRTUAL:
                continue
            before = instructions[i - 1] if i > 0 else None
            if (
                before is None
                or before.kind is not GateKind.BARRIER
                or set(before.qubits) != set(ins.qubits)
            ):
                violations.append(f"unpinned VG {ins.tag} on {sub.qpu_id}")

    if dqc is not None:
        expected_ops: Counter = Counter(
            ins
            for ins in dqc.instructions
            if ins.kind is not GateKind.BARRIER and (ins.tag is None or case_of_tag(ins.tag) is None)
        )
        actual_ops: Counter = Counter()
        for sub in subs:
            for ins in sub.circuit.instructions:
                if ins.kind in (GateKind.VIRTUAL, GateKind.BARRIER):
                    continue
                actual_ops[ins.remap(sub.local_to_global)] += 1
        if expected_ops != actual_ops:
            missing = sum((expected_ops - actual_ops).values())
            extra = sum((actual_ops - expected_ops).values())
            violations.append(
                f"local instruction multiset differs: {missing} missing, {extra} unexpected"
            )
    return violations


def write_bundle(result: IsolationResult, path: Union[str, Path]) -> Path:
    """Write subcircuits as native-json plus a <name>.sync.json sidecar; returns the sidecar path"""
    path = Path(path)
    data = result.to_dict()
    sync = data.pop("sync_table")
    sidecar = path.with_name(path.stem + ".sync.json")
    path.write_text(json.dumps(data, indent=2) + "\n")
    sidecar.write_text(json.dumps(sync, indent=2) + "\n")
    return sidecar


def read_bundle(path: Union[str, Path]) -> IsolationResult:
    path = Path(path)
    sidecar = path.with_name(path.stem + ".sync.json")
    try:
        data = json.loads(path.read_text())
        sync = json.loads(sidecar.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read isolation bundle {path}: {e}")
    return IsolationResult.from_dict(data, sync)
