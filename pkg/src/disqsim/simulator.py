"""
Statevector simulator
Exact branching evolution over the active qubits, shot sampling under a NoiseSpec,
distribution helpers and fidelity metrics
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from disqsim.assembler import AssembledCircuit
from disqsim.circuit import Circuit, GateKind
from disqsim.config import Config
from disqsim.errors import InputError, InvariantError, SimulationLimitError
from disqsim.gates import PAULIS, X, instruction_matrix
from disqsim.noise import PAULI_CHANNELS, Channel, ChannelKind, NoiseSpec

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FIDELITY_METRICS = ("bhattacharyya", "top-state")
SHOT_METHODS = ("grouped", "trajectory")

# Branches lighter than this are dropped
_DROP = 1e-14
# Two normalized states are the same when |<a|b>| exceeds 1 - this
_SAME_STATE = 1e-9
# Distribution entries below this are left out of reports
_FLOOR = 1e-20
# Probabilities within this of the maximum tie for top state
_TIE = 1e-12

Executable = Union[AssembledCircuit, Circuit]
# (step position, slot within the step, value); a FRAME_SLOT value is an (x, z) Pauli frame
Fault = Tuple[int, int, Union[int, Tuple[int, int]]]
FRAME_SLOT = -1


# Tensor kernels


def _tensor(matrix: np.ndarray) -> np.ndarray:
    m = int(round(math.log2(matrix.shape[0])))
    return matrix.reshape((2,) * (2 * m))


def _apply(state: np.ndarray, tensor: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Contract a gate tensor into the given axes; the input is left untouched"""
    m = len(axes)
    out = np.tensordot(tensor, state, axes=(list(range(m, 2 * m)), list(axes)))
    return np.moveaxis(out, list(range(m)), list(axes))


def _prob_one(state: np.ndarray, axis: int) -> float:
    p = float(np.sum(np.abs(np.take(state, 1, axis=axis)) ** 2))
    return min(max(p, 0.0), 1.0)


def _project(state: np.ndarray, axis: int, outcome: int, p: float) -> np.ndarray:
    new = np.array(state, copy=True)
    index = [slice(None)] * new.ndim
    index[axis] = 1 - outcome
    new[tuple(index)] = 0
    return new / math.sqrt(p)


_X_TENSOR = _tensor(X)
_PAULI_CACHE: Dict[Tuple[int, int], np.ndarray] = {}


def _pauli_tensor(code: int, arity: int) -> np.ndarray:
    """code in [0, 4^arity); base-4 digits pick I/X/Y/Z, first qubit most significant"""
    key = (code, arity)
    if key not in _PAULI_CACHE:
        matrix = np.ones((1, 1), dtype=complex)
        for position in reversed(range(arity)):
            digit = (code >> (2 * position)) & 3
            matrix = np.kron(matrix, PAULIS[digit])
        _PAULI_CACHE[key] = _tensor(matrix)
    return _PAULI_CACHE[key]


# Pauli frames: x and z bitmasks over axes, digit 0..3 = I, X, Y, Z

_DIGIT_BITS = ((0, 0), (1, 0), (1, 1), (0, 1))
_BITS_DIGIT = {bits: digit for digit, bits in enumerate(_DIGIT_BITS)}
# |Tr(P^dagger A)| / d above 1 - this makes A a Pauli up to phase
_PAULI_IMAGE = 1e-9
_PAULI_BASIS: Dict[int, np.ndarray] = {}
_CONJUGATION_CACHE: Dict[Tuple[int, bytes], Tuple[Optional[int], ...]] = {}


def _as_pauli(operator: np.ndarray) -> Optional[int]:
    """Pauli code of an operator that is a Pauli product up to phase, else None"""
    d = operator.shape[0]
    arity = int(round(math.log2(d)))
    if arity not in _PAULI_BASIS:
        _PAULI_BASIS[arity] = np.stack(
            [_pauli_tensor(code, arity).reshape(d, d) for code in range(4**arity)]
        )
    overlaps = np.abs(np.einsum("kij,ij->k", _PAULI_BASIS[arity].conj(), operator)) / d
    best = int(np.argmax(overlaps))
    return best if overlaps[best] > 1.0 - _PAULI_IMAGE else None


def _conjugation_table(matrix: np.ndarray) -> Tuple[Optional[int], ...]:
    """Pauli code of U P U^dagger for every code P on the gate's qubits, None if not a Pauli"""
    d = matrix.shape[0]
    key = (d, np.ascontiguousarray(matrix).tobytes())
    if key not in _CONJUGATION_CACHE:
        adjoint = matrix.conj().T
        _CONJUGATION_CACHE[key] = tuple(
            _as_pauli(matrix @ _pauli_tensor(code, d.bit_length() - 1).reshape(d, d) @ adjoint)
            for code in range(d * d)
        )
    return _CONJUGATION_CACHE[key]


def _frame_code(x: int, z: int, axes: Sequence[int]) -> int:
    code = 0
    for axis in axes:
        code = (code << 2) | _BITS_DIGIT[((x >> axis) & 1, (z >> axis) & 1)]
    return code


def _code_bits(code: int, axes: Sequence[int]) -> Tuple[int, int]:
    x = z = 0
    arity = len(axes)
    for i, axis in enumerate(axes):
        xb, zb = _DIGIT_BITS[(code >> (2 * (arity - 1 - i))) & 3]
        x |= xb << axis
        z |= zb << axis
    return x, z


def _apply_frame(state: np.ndarray, x: int, z: int) -> np.ndarray:
    for axis in range(state.ndim):
        digit = _BITS_DIGIT[((x >> axis) & 1, (z >> axis) & 1)]
        if digit:
            state = _apply(state, _pauli_tensor(digit, 1), (axis,))
    return state


# Compiled program


@dataclass(frozen=True, eq=False)
class _Step:
    index: int
    kind: GateKind
    axes: Tuple[int, ...]
    tensor: Optional[np.ndarray]
    condition: Optional[Tuple[int, int]]
    measured: Tuple[Tuple[int, int, bool], ...]
    channel: Channel
    live: int
    merge: bool
    mask: int = 0
    conjugate: Optional[Tuple[Optional[int], ...]] = None
    pauli: Optional[int] = None


@dataclass(frozen=True)
class _Slot:
    step: int
    slot: int
    p: float
    arity: int = 0
    terminal_bit: Optional[int] = None


@dataclass(frozen=True, eq=False)
class _Branch:
    state: np.ndarray
    register: int
    weight: float


def _unpack(c: Executable) -> Tuple[Circuit, Tuple[int, ...], int]:
    if isinstance(c, AssembledCircuit):
        order = c.trace.order if len(c.trace) == len(c.circuit) else tuple(range(len(c.circuit)))
        return c.circuit, order, c.data_clbits
    return c, tuple(range(len(c))), c.num_clbits


class _Program:
    """An executable circuit compiled onto its active qubits"""

    def __init__(
        self,
        c: Executable,
        noise: Optional[NoiseSpec] = None,
        max_qubits: Optional[int] = None,
    ):
        circuit, order, data_clbits = _unpack(c)
        if noise is not None and len(noise) != len(circuit):
            raise InputError(
                f"noise spec has {len(noise)} channel(s) for {len(circuit)} instruction(s)"
            )
        limit = max_qubits if max_qubits is not None else Config().max_qubits

        indices = [i for i in order if circuit.instructions[i].kind is not GateKind.BARRIER]
        for i in indices:
            if circuit.instructions[i].kind is GateKind.VIRTUAL:
                raise InvariantError(f"instruction {i} is an unresolved virtual gate")
        active = sorted({q for i in indices for q in circuit.instructions[i].qubits})
        if len(active) > limit:
            raise SimulationLimitError(
                f"{len(active)} active qubits exceed the simulation limit of {limit}"
            )
        if data_clbits > limit:
            raise SimulationLimitError(
                f"{data_clbits} measured data bits exceed the simulation limit of {limit}"
            )
        axis_of = {q: a for a, q in enumerate(active)}

        self.num_axes = len(active)
        self.active = tuple(active)
        self.data_clbits = data_clbits
        self.data_mask = (1 << data_clbits) - 1
        self.steps = self._compile(circuit, indices, axis_of, noise)
        self.terminal = sorted(
            (axis, bit)
            for step in self.steps
            for axis, bit, terminal in step.measured
            if terminal and bit < data_clbits
        )
        self.slots = self._slots()
        self._reader_cache: Dict[Tuple[int, int], Tuple[Tuple[int, ...], bool]] = {}
        self.slot_probs = np.array([s.p for s in self.slots])

    def _compile(self, circuit, indices, axis_of, noise) -> List[_Step]:
        n = len(indices)
        live_after = [0] * n
        terminal_flags: List[Tuple[bool, ...]] = [()] * n
        reads = 0
        touched, read_later, written_later = set(), set(), set()
        for position in reversed(range(n)):
            ins = circuit.instructions[indices[position]]
            live_after[position] = self.data_mask | reads
            if ins.kind is GateKind.MEASURE:
                terminal_flags[position] = tuple(
                    q not in touched and b not in read_later and b not in written_later
                    for q, b in zip(ins.qubits, ins.clbits)
                )
            for b in ins.clbits:
                reads &= ~(1 << b)
            if ins.condition is not None:
                reads |= 1 << ins.condition[0]
                read_later.add(ins.condition[0])
            touched.update(ins.qubits)
            written_later.update(ins.clbits)

        steps = []
        for position, i in enumerate(indices):
            ins = circuit.instructions[i]
            axes = tuple(axis_of[q] for q in ins.qubits)
            matrix = instruction_matrix(ins) if ins.is_unitary else None
            steps.append(
                _Step(
                    index=i,
                    kind=ins.kind,
                    axes=axes,
                    tensor=_tensor(matrix) if matrix is not None else None,
                    condition=ins.condition,
                    measured=tuple(
                        (axis, bit, terminal)
                        for axis, bit, terminal in zip(axes, ins.clbits, terminal_flags[position])
                    ),
                    channel=noise[i] if noise is not None else Channel(),
                    live=live_after[position],
                    merge=ins.kind is GateKind.RESET or ins.condition is not None,
                    mask=sum(1 << axis for axis in axes),
                    conjugate=_conjugation_table(matrix) if matrix is not None else None,
                    pauli=_as_pauli(matrix) if matrix is not None else None,
                )
            )
        return steps

    def _slots(self) -> List[_Slot]:
        slots = []
        for position, step in enumerate(self.steps):
            ch = step.channel
            if not ch.is_noisy:
                continue
            if ch.kind in PAULI_CHANNELS:
                slots.append(_Slot(position, 0, ch.p, arity=len(step.axes)))
            elif ch.kind is ChannelKind.READOUT_FLIP:
                for j, (_, bit, terminal) in enumerate(step.measured):
                    slots.append(_Slot(position, j, ch.p, terminal_bit=bit if terminal else None))
            elif ch.kind is ChannelKind.RESET_FAIL:
                slots.append(_Slot(position, 0, ch.p))
        return slots

    # Branching engine

    def initial(self) -> List[_Branch]:
        state = np.zeros((2,) * self.num_axes, dtype=complex)
        state[(0,) * self.num_axes] = 1.0
        return [_Branch(state, 0, 1.0)]

    def run(self, branches: List[_Branch], start: int, stop: int) -> List[_Branch]:
        for position in range(start, stop):
            branches = self.execute(branches, position, {})
        return branches

    def execute(
        self, branches: List[_Branch], position: int, faults: Mapping[int, Any]
    ) -> List[_Branch]:
        step = self.steps[position]
        if FRAME_SLOT in faults:
            x, z = faults[FRAME_SLOT]
            branches = [
                _Branch(_apply_frame(br.state, x, z), br.register, br.weight) for br in branches
            ]
        out: List[_Branch] = []
        for br in branches:
            out.extend(self._execute_one(br, step, faults))
        if step.merge:
            out = _merge(out, step.live)
        return out

    def _execute_one(
        self, br: _Branch, step: _Step, faults: Mapping[int, Any]
    ) -> List[_Branch]:
        if step.kind is GateKind.MEASURE:
            branches = [br]
            for slot, (axis, bit, terminal) in enumerate(step.measured):
                if terminal:
                    continue
                flip = faults.get(slot, 0)
                branches = [
                    _Branch(child.state, _write(child.register, bit, outcome ^ flip), child.weight)
                    for b in branches
                    for outcome, child in _split_outcomes(b, axis)
                ]
            return branches
        if step.kind is GateKind.RESET:
            if faults.get(0):
                return [br]
            axis = step.axes[0]
            return [
                _Branch(np.flip(child.state, axis=axis), child.register, child.weight)
                if outcome
                else child
                for outcome, child in _split_outcomes(br, axis)
            ]
        if step.condition is not None:
            bit, value = step.condition
            if (br.register >> bit) & 1 != value:
                return [br]
        state = _apply(br.state, step.tensor, step.axes)
        if 0 in faults:
            state = _apply(state, _pauli_tensor(faults[0], len(step.axes)), step.axes)
        return [_Branch(state, br.register, br.weight)]

    def distribution(self, branches: Sequence[_Branch]) -> np.ndarray:
        """Marginal over data clbits; terminal measurements are read off here"""
        size = 1 << self.data_clbits
        vec = np.zeros(size)
        t_axes = [axis for axis, _ in self.terminal]
        others = tuple(a for a in range(self.num_axes) if a not in t_axes)
        t = len(self.terminal)
        j = np.arange(1 << t, dtype=np.int64)
        offsets = np.zeros_like(j)
        clear = self.data_mask
        for i, (_, bit) in enumerate(self.terminal):
            offsets |= ((j >> (t - 1 - i)) & 1) << bit
            clear &= ~(1 << bit)
        for br in branches:
            probs = np.abs(br.state) ** 2
            marginal = probs.sum(axis=others) if others else probs
            base = br.register & clear
            vec += br.weight * np.bincount(
                base | offsets, weights=np.ravel(marginal), minlength=size
            )
        return vec

    # Trajectory engine

    def trajectory(self, rng: np.random.Generator) -> int:
        state = self.initial()[0].state
        register = 0
        for step in self.steps:
            ch = step.channel
            if step.kind is GateKind.MEASURE:
                for axis, bit, _ in step.measured:
                    outcome, state = _sample(state, axis, rng)
                    if ch.kind is ChannelKind.READOUT_FLIP and rng.random() < ch.p:
                        outcome ^= 1
                    register = _write(register, bit, outcome)
                continue
            if step.kind is GateKind.RESET:
                if ch.kind is ChannelKind.RESET_FAIL and rng.random() < ch.p:
                    continue
                outcome, state = _sample(state, step.axes[0], rng)
                if outcome:
                    state = _apply(state, _X_TENSOR, step.axes)
                continue
            if step.condition is not None:
                bit, value = step.condition
                if (register >> bit) & 1 != value:
                    continue
            state = _apply(state, step.tensor, step.axes)
            if ch.kind in PAULI_CHANNELS and rng.random() < ch.p:
                code = int(rng.integers(1, 4 ** len(step.axes)))
                state = _apply(state, _pauli_tensor(code, len(step.axes)), step.axes)
        return register & self.data_mask

    def sample_faults(self, rng: np.random.Generator) -> Tuple[Tuple[Fault, ...], int]:
        """One shot's error realization plus the readout flips of terminal bits"""
        fired = np.flatnonzero(rng.random(len(self.slots)) < self.slot_probs)
        faults: List[Fault] = []
        post = 0
        for k in fired:
            slot = self.slots[k]
            if slot.arity:
                faults.append((slot.step, slot.slot, int(rng.integers(1, 4**slot.arity))))
            elif slot.terminal_bit is not None:
                if slot.terminal_bit < self.data_clbits:
                    post |= 1 << slot.terminal_bit
            else:
                faults.append((slot.step, slot.slot, 1))
        return tuple(faults), post

    def propagate(self, faults: Tuple[Fault, ...]) -> Tuple[Tuple[Fault, ...], int]:
        """Carry gate errors and flipped mid-circuit bits forward as a Pauli frame.

        The frame is conjugated through every step that maps it to another Pauli, and X
        components turn into bit flips at measurements. A flipped mid-circuit bit whose only
        readers are conditioned Paulis becomes those Paulis in the frame. The frame is applied
        to the state only in front of the first step it cannot pass. Returns the remaining
        faults plus the flips of output bits.
        """
        if not faults:
            return faults, 0
        raw: Dict[int, Dict[int, Any]] = defaultdict(dict)
        for position, slot, value in faults:
            raw[position][slot] = value
        last = faults[-1][0]
        out: List[Fault] = []
        toggles: Dict[int, int] = {}
        flips = 0
        x = z = 0
        for position in range(faults[0][0], len(self.steps)):
            here = raw.get(position, {})
            if not (x | z) and not toggles:
                if position > last:
                    break
                if not here:
                    continue
            step = self.steps[position]
            if step.kind is GateKind.MEASURE:
                x, z, flipped = self._measure(position, step, x, z, here, raw, toggles, out)
                flips ^= flipped
                continue
            if (x | z) & step.mask:
                crossed = self._cross(step, x, z, 0 in here)
                if crossed is None:
                    out.append((position, FRAME_SLOT, (x, z)))
                    x = z = 0
                else:
                    x, z = crossed
            if toggles.pop(position, 0):
                tx, tz = _code_bits(step.pauli, step.axes)
                x ^= tx
                z ^= tz
            for slot, value in sorted(here.items()):
                if step.tensor is not None and step.condition is None:
                    fx, fz = _code_bits(value, step.axes)
                    x ^= fx
                    z ^= fz
                else:
                    out.append((position, slot, value))
        return tuple(out), flips

    def _measure(
        self,
        position: int,
        step: _Step,
        x: int,
        z: int,
        here: Mapping[int, Any],
        raw: Mapping[int, Any],
        toggles: Dict[int, int],
        out: List[Fault],
    ) -> Tuple[int, int, int]:
        """Frame through a measurement; X before it flips the recorded bit and stays put"""
        flips = 0
        for slot, (axis, bit, terminal) in enumerate(step.measured):
            flipped = (x >> axis) & 1
            # Z on a measured qubit is a phase of the whole branch
            z &= ~(1 << axis)
            if terminal:
                x &= ~(1 << axis)
                if flipped and bit < self.data_clbits:
                    flips ^= 1 << bit
                continue
            if not flipped ^ here.get(slot, 0):
                continue
            readers, final = self._readers(position, bit)
            if any(r in raw or self.steps[r].pauli is None for r in readers):
                out.append((position, slot, 1))
                continue
            for r in readers:
                toggles[r] = toggles.get(r, 0) ^ 1
                if not toggles[r]:
                    del toggles[r]
            if final and bit < self.data_clbits:
                flips ^= 1 << bit
        return x, z, flips

    def _readers(self, position: int, bit: int) -> Tuple[Tuple[int, ...], bool]:
        """Steps conditioned on the bit written at position, and whether no later step rewrites it"""
        key = (position, bit)
        if key not in self._reader_cache:
            readers = []
            final = True
            for later in range(position + 1, len(self.steps)):
                step = self.steps[later]
                if step.condition is not None and step.condition[0] == bit:
                    readers.append(later)
                if any(b == bit for _, b, _ in step.measured):
                    final = False
                    break
            self._reader_cache[key] = (tuple(readers), final)
        return self._reader_cache[key]

    def _cross(self, step: _Step, x: int, z: int, reset_failed: bool) -> Optional[Tuple[int, int]]:
        """The frame after a reset or gate, or None when it must be applied before the step"""
        if step.kind is GateKind.RESET:
            if reset_failed:
                return x, z
            return x & ~step.mask, z & ~step.mask
        code = _frame_code(x, z, step.axes)
        image = step.conjugate[code]
        if image is None or (step.condition is not None and image != code):
            return None
        ix, iz = _code_bits(image, step.axes)
        return (x & ~step.mask) | ix, (z & ~step.mask) | iz


def _write(register: int, bit: int, value: int) -> int:
    return (register & ~(1 << bit)) | (value << bit)


def _split_outcomes(br: _Branch, axis: int) -> List[Tuple[int, _Branch]]:
    p1 = _prob_one(br.state, axis)
    kept = [(o, p) for o, p in ((0, 1.0 - p1), (1, p1)) if p >= _DROP]
    total = sum(p for _, p in kept)
    return [
        (o, _Branch(_project(br.state, axis, o, p), br.register, br.weight * p / total))
        for o, p in kept
    ]


def _sample(state: np.ndarray, axis: int, rng: np.random.Generator) -> Tuple[int, np.ndarray]:
    p1 = _prob_one(state, axis)
    outcome = int(rng.random() < p1)
    p = p1 if outcome else 1.0 - p1
    return outcome, _project(state, axis, outcome, p)


def _merge(branches: List[_Branch], live: int) -> List[_Branch]:
    """Fold branches that agree on live clbits and on their state up to phase"""
    groups: Dict[int, List[_Branch]] = defaultdict(list)
    for br in branches:
        key = br.register & live
        reps = groups[key]
        for k, rep in enumerate(reps):
            if abs(np.vdot(rep.state, br.state)) > 1.0 - _SAME_STATE:
                reps[k] = _Branch(rep.state, key, rep.weight + br.weight)
                break
        else:
            reps.append(_Branch(br.state, key, br.weight))
    return [br for reps in groups.values() for br in reps]


# Public operations


@dataclass(frozen=True)
class ShotResult:
    bitstring: str
    seed: int

    @property
    def value(self) -> int:
        return int(self.bitstring, 2) if self.bitstring else 0


def bitstring(value: int, width: int) -> str:
    return format(value, f"0{width}b") if width else ""


def run_exact(c: Executable, max_qubits: Optional[int] = None) -> np.ndarray:
    """Noise-free probability vector over data clbit values (index = clbit integer)"""
    program = _Program(c, max_qubits=max_qubits)
    branches = program.run(program.initial(), 0, len(program.steps))
    logger.info(
        f"Exact run over {program.num_axes} active qubit(s): "
        f"{len(program.steps)} step(s), {len(branches)} final branch(es)"
    )
    return program.distribution(branches)


def _shot_rng(seed: int, shot: int) -> Tuple[np.random.Generator, int]:
    sequence = np.random.SeedSequence([seed, shot])
    return np.random.default_rng(sequence), int(sequence.generate_state(1)[0])


def run_shots(
    c: Executable,
    noise: Optional[NoiseSpec],
    shots: int,
    seed: int,
    method: str = "grouped",
    max_qubits: Optional[int] = None,
) -> List[ShotResult]:
    """Sample shots; each shot's randomness comes from its own (seed, index) stream"""
    if shots < 1:
        raise InputError(f"shots must be >= 1, got {shots}")
    if method not in SHOT_METHODS:
        raise InputError(f"unknown shot method '{method}', expected one of {SHOT_METHODS}")
    program = _Program(c, noise, max_qubits)
    width = program.data_clbits

    if method == "trajectory":
        results = []
        for shot in range(shots):
            rng, derived = _shot_rng(seed, shot)
            results.append(ShotResult(bitstring(program.trajectory(rng), width), derived))
        logger.info(f"Sampled {shots} trajectory shot(s) over {program.num_axes} qubit(s)")
        return results

    groups: Dict[Tuple[Fault, ...], List[int]] = defaultdict(list)
    propagated: Dict[Tuple[Fault, ...], Tuple[Tuple[Fault, ...], int]] = {}
    post = np.zeros(shots, dtype=np.int64)
    uniforms = np.zeros(shots)
    derived = [0] * shots
    for shot in range(shots):
        rng, derived[shot] = _shot_rng(seed, shot)
        faults, flips = program.sample_faults(rng)
        if faults not in propagated:
            propagated[faults] = program.propagate(faults)
        faults, frame_flips = propagated[faults]
        post[shot] = flips ^ frame_flips
        uniforms[shot] = rng.random()
        groups[faults].append(shot)

    outcomes = np.zeros(shots, dtype=np.int64)

    def leaf(members: List[Tuple[Tuple[Fault, ...], int]], branches: List[_Branch]) -> None:
        vec = program.distribution(branches)
        cdf = np.cumsum(vec)
        for faults, _ in members:
            chosen = groups[faults]
            picks = np.searchsorted(cdf, uniforms[chosen] * cdf[-1], side="right")
            outcomes[chosen] = np.minimum(picks, len(vec) - 1)

    _descend(program, program.initial(), 0, [(faults, 0) for faults in groups], leaf)
    outcomes ^= post
    logger.info(
        f"Sampled {shots} shot(s) over {program.num_axes} qubit(s): "
        f"{len(propagated)} error realization(s) in {len(groups)} group(s)"
    )
    return [ShotResult(bitstring(int(v), width), derived[i]) for i, v in enumerate(outcomes)]


def _descend(
    program: _Program,
    branches: List[_Branch],
    position: int,
    members: List[Tuple[Tuple[Fault, ...], int]],
    leaf: Callable[[List[Tuple[Tuple[Fault, ...], int]], List[_Branch]], None],
) -> None:
    """Walk the trie of fault sequences, sharing every common prefix of evolution"""
    while True:
        pending = [faults[k][0] for faults, k in members if k < len(faults)]
        if not pending:
            branches = program.run(branches, position, len(program.steps))
            leaf(members, branches)
            return
        at = min(pending)
        branches = program.run(branches, position, at)

        forks: Dict[Tuple[Fault, ...], List[Tuple[Tuple[Fault, ...], int]]] = defaultdict(list)
        rest = []
        for faults, k in members:
            j = k
            while j < len(faults) and faults[j][0] == at:
                j += 1
            if j > k:
                forks[faults[k:j]].append((faults, j))
            else:
                rest.append((faults, k))
        for here, sub in forks.items():
            applied = {slot: value for _, slot, value in here}
            _descend(program, program.execute(branches, at, applied), at + 1, sub, leaf)
        if not rest:
            return
        branches = program.execute(branches, at, {})
        position = at + 1
        members = rest


def vector_to_distribution(vec: np.ndarray, width: int) -> Dict[str, float]:
    return {bitstring(i, width): float(p) for i, p in enumerate(vec) if p > _FLOOR}


def counts_to_distribution(shots: Sequence[ShotResult]) -> Dict[str, float]:
    counts: Dict[str, int] = defaultdict(int)
    for shot in shots:
        counts[shot.bitstring] += 1
    total = len(shots)
    return {s: n / total for s, n in sorted(counts.items())}


def top_state(distribution: Mapping[str, float]) -> Tuple[str, float]:
    """Most likely bitstring; near-ties go to the smallest integer value"""
    if not distribution:
        raise InputError("empty distribution has no top state")
    best = max(distribution.values())
    tied = [s for s, p in distribution.items() if p >= best - _TIE]
    state = min(tied, key=lambda s: int(s, 2) if s else 0)
    return state, distribution[state]


def total_variation(p: Mapping[str, float], q: Mapping[str, float]) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def _width(distribution: Mapping[str, float]) -> Optional[int]:
    widths = {len(s) for s in distribution}
    if len(widths) > 1:
        raise InputError(f"distribution mixes bitstring widths {sorted(widths)}")
    return widths.pop() if widths else None


def fidelity(
    noisy: Mapping[str, float], ideal: Mapping[str, float], metric: str = "bhattacharyya"
) -> float:
    a, b = _width(noisy), _width(ideal)
    if a is not None and b is not None and a != b:
        raise InputError(f"distributions are over {a}-bit and {b}-bit outcome spaces")
    if metric == "bhattacharyya":
        overlap = sum(math.sqrt(p * ideal.get(s, 0.0)) for s, p in noisy.items() if p > 0)
        return min(max(overlap**2, 0.0), 1.0)
    if metric == "top-state":
        state, p = top_state(ideal)
        return min(noisy.get(state, 0.0) / p, 1.0)
    raise InputError(f"unknown fidelity metric '{metric}', expected one of {FIDELITY_METRICS}")


def circuit_unitary(c: Circuit) -> np.ndarray:
    """Full unitary of a measurement-free circuit (qubit 0 most significant)"""
    dim = 1 << c.num_qubits
    u = np.eye(dim, dtype=complex).reshape((2,) * c.num_qubits + (dim,))
    for ins in c.instructions:
        if ins.kind is GateKind.BARRIER:
            continue
        if not ins.is_unitary or ins.condition is not None:
            raise InputError(f"{ins.kind.value} has no unitary action")
        u = _apply(u, _tensor(instruction_matrix(ins)), ins.qubits)
    return u.reshape(dim, dim)


# Reports


class ReportMetrics(BaseModel):
    """Circuit figures for a report.

    `qubits` and `igd` describe the monolithic circuit. `depth` and `two_qubit_count` are taken
    on the assembled circuit, which mixes native gates with the re-inserted communication
    payloads (H, CX and classically controlled X/Z) that are not translated to the QPU basis
    and may sit on uncoupled pairs. Compare them across runs, not against a fully native count.
    """

    qubits: int
    depth: int
    two_qubit_count: int
    igd: float
    epr_pairs_consumed: int = 0
    comm_qubits: int = 0
    average_gate_noise: float = 0.0


class SimulationReport(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: int = Field(SCHEMA_VERSION, alias="schema")
    circuit: str
    arch: str
    mode: str
    shots: Optional[int] = None
    seed: int
    distance_km: Optional[float] = None
    kappa: float
    fidelity_metric: str = "bhattacharyya"
    fidelity: float = Field(ge=0.0, le=1.0)
    infidelity: float = Field(ge=0.0, le=1.0)
    top_state: str
    top_state_int: int
    top_prob: float
    ideal_top_state: str
    ideal_top_prob: float
    metrics: ReportMetrics
    distribution: Dict[str, float]

    def to_dict(self) -> dict:
        return self.model_dump(mode="json", by_alias=True)
