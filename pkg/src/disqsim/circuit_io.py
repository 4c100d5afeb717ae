"""
Circuit file formats
native-json (canonical, bit-exact round trips) and a small OpenQASM 2.0 subset
"""

import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import pyparsing as pp
from pydantic import BaseModel, ConfigDict, ValidationError

from disqsim.circuit import Circuit, GateKind, Instruction, QubitRole
from disqsim.errors import CircuitParseError, InputError

logger = logging.getLogger(__name__)

FORMAT_QASM = "qasm2-subset"
FORMAT_JSON = "native-json"
FORMATS = (FORMAT_QASM, FORMAT_JSON)

QASM_NAMES: Dict[str, GateKind] = {
    "h": GateKind.H,
    "x": GateKind.X,
    "y": GateKind.Y,
    "z": GateKind.Z,
    "s": GateKind.S,
    "sdg": GateKind.SDG,
    "t": GateKind.T,
    "tdg": GateKind.TDG,
    "sx": GateKind.SX,
    "rx": GateKind.RX,
    "ry": GateKind.RY,
    "rz": GateKind.RZ,
    "cx": GateKind.CX,
    "CX": GateKind.CX,
    "cz": GateKind.CZ,
    "swap": GateKind.SWAP,
    "rzz": GateKind.RZZ,
    "rxx": GateKind.RXX,
}
_QASM_SPELLING = {kind: name for name, kind in QASM_NAMES.items() if name != "CX"}


# native-json schema


class ConditionModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    clbit: int
    value: int


class InstructionModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: GateKind
    params: List[float] = []
    qubits: List[int]
    clbits: List[int] = []
    condition: Optional[ConditionModel] = None
    tag: Optional[str] = None


class CircuitModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    num_qubits: int
    num_clbits: int = 0
    qubit_roles: List[QubitRole] = []
    instructions: List[InstructionModel] = []
    qubit_homes: Optional[List[Tuple[str, int]]] = None


def instruction_to_dict(ins: Instruction) -> dict:
    return {
        "kind": ins.kind.value,
        "params": list(ins.params),
        "qubits": list(ins.qubits),
        "clbits": list(ins.clbits),
        "condition": (
            {"clbit": ins.condition[0], "value": ins.condition[1]}
            if ins.condition is not None
            else None
        ),
        "tag": ins.tag,
    }


def _instruction_from_model(im: InstructionModel) -> Instruction:
    return Instruction(
        kind=im.kind,
        qubits=tuple(im.qubits),
        params=tuple(im.params),
        clbits=tuple(im.clbits),
        condition=(im.condition.clbit, im.condition.value) if im.condition else None,
        tag=im.tag,
    )


def _first_error(e: ValidationError) -> str:
    first = e.errors()[0]
    location = ".".join(str(part) for part in first["loc"])
    return f"{first['msg']} at {location}" if location else first["msg"]


def instruction_from_dict(data: dict) -> Instruction:
    try:
        return _instruction_from_model(InstructionModel.model_validate(data))
    except ValidationError as e:
        raise CircuitParseError(f"invalid instruction: {_first_error(e)}")
    except InputError as e:
        raise CircuitParseError(e.message)


def circuit_to_dict(c: Circuit) -> dict:
    """Plain dict in the fixed native-json field order"""
    return {
        "num_qubits": c.num_qubits,
        "num_clbits": c.num_clbits,
        "qubit_roles": [role.value for role in c.qubit_roles],
        "instructions": [instruction_to_dict(ins) for ins in c.instructions],
        "qubit_homes": (
            [[qpu, local] for qpu, local in c.qubit_homes] if c.qubit_homes is not None else None
        ),
    }


def circuit_from_dict(data: dict) -> Circuit:
    try:
        model = CircuitModel.model_validate(data)
    except ValidationError as e:
        raise CircuitParseError(f"invalid native-json circuit: {_first_error(e)}")
    instructions = []
    for position, im in enumerate(model.instructions):
        try:
            instructions.append(_instruction_from_model(im))
        except InputError as e:
            raise CircuitParseError(f"instruction {position}: {e.message}")
    try:
        return Circuit(
            num_qubits=model.num_qubits,
            num_clbits=model.num_clbits,
            instructions=tuple(instructions),
            qubit_roles=tuple(model.qubit_roles),
            qubit_homes=(
                tuple((qpu, local) for qpu, local in model.qubit_homes)
                if model.qubit_homes is not None
                else None
            ),
        )
    except InputError as e:
        raise CircuitParseError(e.message)


def _parse_json(text: str) -> Circuit:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise CircuitParseError(e.msg, e.lineno, e.colno)
    if not isinstance(data, dict):
        raise CircuitParseError("native-json circuit must be an object")
    return circuit_from_dict(data)


# QASM 2.0 subset grammar


def _fold_unary(tokens):
    sign, value = tokens[0]
    return -value if sign == "-" else value


def _fold_binary(tokens):
    values = tokens[0]
    result = values[0]
    for op, operand in zip(values[1::2], values[2::2]):
        if op == "+":
            result += operand
        elif op == "-":
            result -= operand
        elif op == "*":
            result *= operand
        else:
            result /= operand
    return result


def _build_grammar() -> pp.ParserElement:
    LBR, RBR, LPAR, RPAR, SEMI = map(pp.Suppress, "[]();")
    integer = pp.Word(pp.nums).set_parse_action(lambda t: int(t[0]))
    ident = pp.Word(pp.alphas + "_", pp.alphanums + "_")

    number = pp.Regex(r"(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?").set_parse_action(
        lambda t: float(t[0])
    )
    pi = pp.Keyword("pi").set_parse_action(lambda: math.pi)
    expr = pp.infix_notation(
        number | pi,
        [
            (pp.one_of("+ -"), 1, pp.OpAssoc.RIGHT, _fold_unary),
            (pp.one_of("* /"), 2, pp.OpAssoc.LEFT, _fold_binary),
            (pp.one_of("+ -"), 2, pp.OpAssoc.LEFT, _fold_binary),
        ],
    )

    location = pp.Empty().set_parse_action(lambda s, loc, t: loc)
    arg = pp.Group(location("loc") + ident("reg") + pp.Optional(LBR + integer("index") + RBR))
    args = pp.Group(pp.DelimitedList(arg))

    header = pp.Suppress(pp.Keyword("OPENQASM") + pp.Regex(r"\d+(\.\d+)?") + SEMI)
    include = pp.Suppress(pp.Keyword("include") + pp.QuotedString('"') + SEMI)
    decl = pp.Group(
        location("loc")
        + pp.one_of("qreg creg", as_keyword=True)("decl")
        + ident("name")
        + LBR
        + integer("size")
        + RBR
        + SEMI
    )
    condition = pp.Group(
        location("loc")
        + pp.Suppress(pp.Keyword("if"))
        + LPAR
        + ident("reg")
        + pp.Optional(LBR + integer("index") + RBR)
        + pp.Suppress("==")
        + integer("value")
        + RPAR
    )
    measure = pp.Keyword("measure")("op") + arg("src") + pp.Suppress("->") + arg("dst")
    reset = pp.Keyword("reset")("op") + args("args")
    barrier = pp.Keyword("barrier")("op") + args("args")
    gate = (
        ident("op")
        + pp.Optional(LPAR + pp.Group(pp.Optional(pp.DelimitedList(expr)))("params") + RPAR)
        + args("args")
    )
    statement = pp.Group(
        location("loc")
        + pp.Optional(condition("cond"))
        + (measure | reset | barrier | gate)
        + SEMI
    )

    program = pp.Optional(header) + pp.ZeroOrMore(include | decl | statement) + pp.StringEnd()
    program.ignore(pp.cpp_style_comment)
    return program


_GRAMMAR: Optional[pp.ParserElement] = None


def _grammar() -> pp.ParserElement:
    global _GRAMMAR
    if _GRAMMAR is None:
        _GRAMMAR = _build_grammar()
    return _GRAMMAR


class _QasmBuilder:
    """Resolves register operands into flat indices while walking parsed statements"""

    def __init__(self, text: str):
        self.text = text
        self.qregs: Dict[str, Tuple[int, int]] = {}
        self.cregs: Dict[str, Tuple[int, int]] = {}
        self.num_qubits = 0
        self.num_clbits = 0
        self.instructions: List[Instruction] = []

    def error(self, message: str, loc: int) -> CircuitParseError:
        return CircuitParseError(message, pp.lineno(loc, self.text), pp.col(loc, self.text))

    def declare(self, stmt) -> None:
        name, size = stmt["name"], stmt["size"]
        if name in self.qregs or name in self.cregs:
            raise self.error(f"register '{name}' declared twice", stmt["loc"])
        if stmt["decl"] == "qreg":
            self.qregs[name] = (self.num_qubits, size)
            self.num_qubits += size
        else:
            self.cregs[name] = (self.num_clbits, size)
            self.num_clbits += size

    def operand(self, arg, registers: Dict[str, Tuple[int, int]], what: str) -> List[int]:
        name = arg["reg"]
        if name not in registers:
            raise self.error(f"unknown {what} register '{name}'", arg["loc"])
        offset, size = registers[name]
        if "index" in arg:
            index = arg["index"]
            if index >= size:
                raise self.error(
                    f"index {index} out of range for {what} register '{name}' of size {size}",
                    arg["loc"],
                )
            return [offset + index]
        return list(range(offset, offset + size))

    def broadcast(self, operands: List[List[int]], loc: int) -> List[Tuple[int, ...]]:
        widths = {len(o) for o in operands if len(o) > 1}
        if len(widths) > 1:
            raise self.error("register operands of different sizes", loc)
        width = widths.pop() if widths else 1
        return [
            tuple(o[i] if len(o) > 1 else o[0] for o in operands) for i in range(width)
        ]

    def condition(self, cond) -> Tuple[int, int]:
        loc = cond["loc"]
        name = cond["reg"]
        if name not in self.cregs:
            raise self.error(f"unknown classical register '{name}'", loc)
        offset, size = self.cregs[name]
        if "index" in cond:
            index = cond["index"]
            if index >= size:
                raise self.error(f"index {index} out of range for '{name}'", loc)
        elif size == 1:
            index = 0
        else:
            raise self.error(f"condition on multi-bit register '{name}' is not supported", loc)
        if cond["value"] not in (0, 1):
            raise self.error(f"condition value must be 0 or 1, got {cond['value']}", loc)
        return (offset + index, cond["value"])

    def statement(self, stmt) -> None:
        loc = stmt["loc"]
        op = stmt["op"]
        cond = self.condition(stmt["cond"]) if "cond" in stmt else None
        try:
            if op == "measure":
                qs = self.operand(stmt["src"], self.qregs, "quantum")
                cs = self.operand(stmt["dst"], self.cregs, "classical")
                if len(qs) != len(cs):
                    raise self.error("measure operands differ in size", loc)
                if cond is not None:
                    raise self.error("measure cannot be conditioned", loc)
                for q, c in zip(qs, cs):
                    self.instructions.append(Instruction(GateKind.MEASURE, (q,), (), (c,)))
            elif cond is not None and op in ("barrier", "reset"):
                raise self.error(f"{op} cannot be conditioned", loc)
            elif op == "barrier":
                qubits: List[int] = []
                for arg in stmt["args"]:
                    qubits.extend(q for q in self.operand(arg, self.qregs, "quantum") if q not in qubits)
                self.instructions.append(Instruction(GateKind.BARRIER, tuple(qubits)))
            elif op == "reset":
                for arg in stmt["args"]:
                    for q in self.operand(arg, self.qregs, "quantum"):
                        self.instructions.append(Instruction(GateKind.RESET, (q,)))
            else:
                if op not in QASM_NAMES:
                    raise self.error(f"unknown gate '{op}'", loc)
                kind = QASM_NAMES[op]
                params = tuple(float(p) for p in stmt.get("params", []))
                operands = [self.operand(arg, self.qregs, "quantum") for arg in stmt["args"]]
                for qubits_ in self.broadcast(operands, loc):
                    self.instructions.append(Instruction(kind, qubits_, params, (), cond))
        except CircuitParseError:
            raise
        except InputError as e:
            raise self.error(e.message, loc)

    def build(self) -> Circuit:
        return Circuit(self.num_qubits, self.num_clbits, tuple(self.instructions))


def _parse_qasm(text: str) -> Circuit:
    try:
        parsed = _grammar().parse_string(text, parse_all=True)
    except pp.ParseBaseException as e:
        raise CircuitParseError(f"syntax error: {e.msg}", e.lineno, e.col)
    builder = _QasmBuilder(text)
    for stmt in parsed:
        if "decl" in stmt:
            builder.declare(stmt)
        else:
            builder.statement(stmt)
    return builder.build()


def parse_circuit(text: str, format: str = FORMAT_JSON) -> Circuit:
    if format == FORMAT_JSON:
        circuit = _parse_json(text)
    elif format == FORMAT_QASM:
        circuit = _parse_qasm(text)
    else:
        raise InputError(f"unknown circuit format '{format}', expected one of {list(FORMATS)}")
    logger.debug(
        f"Parsed {format} circuit: {circuit.num_qubits} qubits, {len(circuit)} instructions"
    )
    return circuit


def _format_param(value: float) -> str:
    return repr(float(value))


def _to_qasm(c: Circuit) -> str:
    lines = ['OPENQASM 2.0;', 'include "qelib1.inc";', f"qreg q[{c.num_qubits}];"]
    if c.num_clbits:
        lines.append(f"creg c[{c.num_clbits}];")
    for ins in c.instructions:
        if ins.tag is not None or ins.kind is GateKind.VIRTUAL:
            raise InputError("tagged or virtual instructions cannot be written as QASM")
        prefix = ""
        if ins.condition is not None:
            prefix = f"if (c[{ins.condition[0]}]=={ins.condition[1]}) "
        qubits = ",".join(f"q[{q}]" for q in ins.qubits)
        if ins.kind is GateKind.MEASURE:
            for q, b in zip(ins.qubits, ins.clbits):
                lines.append(f"measure q[{q}] -> c[{b}];")
        elif ins.kind is GateKind.RESET:
            lines.append(f"reset {qubits};")
        elif ins.kind is GateKind.BARRIER:
            lines.append(f"barrier {qubits};")
        else:
            name = _QASM_SPELLING[ins.kind]
            if ins.params:
                name += "(" + ",".join(_format_param(p) for p in ins.params) + ")"
            lines.append(f"{prefix}{name} {qubits};")
    return "\n".join(lines) + "\n"


def serialize_circuit(c: Circuit, format: str = FORMAT_JSON) -> str:
    if format == FORMAT_JSON:
        return json.dumps(circuit_to_dict(c), indent=2) + "\n"
    if format == FORMAT_QASM:
        return _to_qasm(c)
    raise InputError(f"unknown circuit format '{format}', expected one of {list(FORMATS)}")


def format_for_path(path: Union[str, Path]) -> str:
    return FORMAT_QASM if Path(path).suffix.lower() == ".qasm" else FORMAT_JSON


def load_circuit(path: Union[str, Path], format: Optional[str] = None) -> Circuit:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise InputError(f"cannot read circuit file {path}: {e.strerror}")
    return parse_circuit(text, format or format_for_path(path))


def dump_circuit(c: Circuit, path: Union[str, Path], format: Optional[str] = None) -> None:
    Path(path).write_text(serialize_circuit(c, format or format_for_path(path)))
