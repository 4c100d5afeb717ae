"""
Brute-force density-matrix reference for small noisy circuits (tests only)

Tracks one unnormalized density matrix per classical register value, so mid-circuit
measurement, classical conditions, readout flips and reset failures are all exact.
"""

from typing import Dict, Optional

import numpy as np

from disqsim.circuit import Circuit, GateKind
from disqsim.gates import PAULIS, X, instruction_matrix
from disqsim.noise import ChannelKind, NoiseSpec


def _embed(matrix: np.ndarray, qubits, n: int) -> np.ndarray:
    """Full 2^n operator for a gate on the given qubits (qubit 0 most significant)"""
    k = len(qubits)
    tensor = matrix.reshape((2,) * (2 * k))
    full = np.eye(1 << n, dtype=complex).reshape((2,) * (2 * n))
    out = np.tensordot(tensor, full, axes=(list(range(k, 2 * k)), list(qubits)))
    out = np.moveaxis(out, list(range(k)), list(qubits))
    return out.reshape(1 << n, 1 << n)


def _projector(qubit: int, outcome: int, n: int) -> np.ndarray:
    p = np.zeros((2, 2), dtype=complex)
    p[outcome, outcome] = 1.0
    return _embed(p, (qubit,), n)


def _paulis(arity: int):
    for code in range(1, 4**arity):
        matrix = np.ones((1, 1), dtype=complex)
        for position in reversed(range(arity)):
            matrix = np.kron(matrix, PAULIS[(code >> (2 * position)) & 3])
        yield matrix


def _depolarize(rho: np.ndarray, p: float, qubits, n: int) -> np.ndarray:
    terms = [_embed(m, qubits, n) for m in _paulis(len(qubits))]
    mixed = sum(t @ rho @ t.conj().T for t in terms) / len(terms)
    return (1.0 - p) * rho + p * mixed


def _write(register: int, bit: int, value: int) -> int:
    return (register & ~(1 << bit)) | (value << bit)


def density_distribution(
    c: Circuit, noise: Optional[NoiseSpec] = None, data_clbits: Optional[int] = None
) -> Dict[int, float]:
    """Probability of each data-clbit integer after running c under noise"""
    n = c.num_qubits
    rho = np.zeros((1 << n, 1 << n), dtype=complex)
    rho[0, 0] = 1.0
    states: Dict[int, np.ndarray] = {0: rho}

    for i, ins in enumerate(c.instructions):
        channel = noise[i] if noise is not None else None
        p = channel.p if channel is not None and channel.is_noisy else 0.0
        kind = channel.kind if channel is not None else ChannelKind.NONE
        nxt: Dict[int, np.ndarray] = {}

        def add(register: int, value: np.ndarray) -> None:
            nxt[register] = nxt.get(register, 0) + value

        for register, rho in states.items():
            if ins.kind is GateKind.BARRIER:
                add(register, rho)
            elif ins.kind is GateKind.MEASURE:
                branches = {register: rho}
                for q, bit in zip(ins.qubits, ins.clbits):
                    split: Dict[int, np.ndarray] = {}
                    for reg, r in branches.items():
                        for outcome in (0, 1):
                            proj = _projector(q, outcome, n)
                            part = proj @ r @ proj
                            for seen, weight in ((outcome, 1.0 - p), (1 - outcome, p)):
                                if weight > 0:
                                    key = _write(reg, bit, seen)
                                    split[key] = split.get(key, 0) + weight * part
                    branches = split
                for reg, r in branches.items():
                    add(reg, r)
            elif ins.kind is GateKind.RESET:
                q = ins.qubits[0]
                p0, p1 = _projector(q, 0, n), _projector(q, 1, n)
                flip = _embed(X, (q,), n)
                reset = p0 @ rho @ p0 + flip @ p1 @ rho @ p1 @ flip
                add(register, (1.0 - p) * reset + p * rho)
            else:
                if ins.condition is not None:
                    bit, value = ins.condition
                    if (register >> bit) & 1 != value:
                        add(register, rho)
                        continue
                u = _embed(instruction_matrix(ins), ins.qubits, n)
                rho = u @ rho @ u.conj().T
                if p > 0 and kind is not ChannelKind.NONE:
                    rho = _depolarize(rho, p, ins.qubits, n)
                add(register, rho)
        states = nxt

    width = c.num_clbits if data_clbits is None else data_clbits
    mask = (1 << width) - 1
    out: Dict[int, float] = {}
    for register, rho in states.items():
        key = register & mask
        out[key] = out.get(key, 0.0) + float(np.real(np.trace(rho)))
    return out
