"""
Benchmark circuit families
Deterministic generators for GHZ, FullAdder, Steane QEC, TFIM, QAOA and VQE circuits
"""

import json
import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from disqsim.circuit import Circuit, CircuitBuilder
from disqsim.errors import BenchmarkError
from disqsim.simulator import run_exact, top_state, vector_to_distribution

logger = logging.getLogger(__name__)

PARAMS_PATH = Path(__file__).parent / "presets" / "benchmark_params.json"

# Hamming [7,4] parity rows and the pivot qubit that seeds each row
STEANE_ROWS: Tuple[Tuple[int, ...], ...] = ((3, 4, 5, 6), (1, 2, 5, 6), (0, 2, 4, 6))
STEANE_PIVOTS = (3, 1, 0)
STEANE_INPUT = 2


@lru_cache(maxsize=1)
def load_params() -> Dict[str, dict]:
    return json.loads(PARAMS_PATH.read_text())


class BenchmarkSpec(BaseModel):
    """A benchmark family plus its size; everything else comes from the shipped parameters"""

    model_config = ConfigDict(frozen=True)

    name: str
    size: Optional[int] = Field(None, gt=0)

    @property
    def qubits(self) -> int:
        return self.size if self.size is not None else BENCHMARKS[self.name][0]

    @property
    def label(self) -> str:
        return f"{self.name}-{self.qubits}"


def parse_benchmark(text: str) -> BenchmarkSpec:
    """Accepts NAME or NAME:SIZE"""
    name, _, size = text.partition(":")
    if name not in BENCHMARKS:
        raise BenchmarkError(f"unknown benchmark '{name}', expected one of {sorted(BENCHMARKS)}")
    if not size:
        return BenchmarkSpec(name=name)
    try:
        return BenchmarkSpec(name=name, size=int(size))
    except ValueError:
        raise BenchmarkError(f"benchmark size must be a positive integer, got {size!r}")


def _ghz(n: int) -> Circuit:
    if n < 2:
        raise BenchmarkError(f"ghz needs at least 2 qubits, got {n}")
    b = CircuitBuilder(n, n).h(0)
    for q in range(n - 1):
        b.cx(q, q + 1)
    return b.measure_all().build()


def _maj(b: CircuitBuilder, x: int, y: int, z: int) -> None:
    b.cx(z, y).cx(z, x).ccx(x, y, z)


def _uma(b: CircuitBuilder, x: int, y: int, z: int) -> None:
    b.ccx(x, y, z).cx(z, x).cx(x, y)


def _fulladder(n: int) -> Circuit:
    """Ripple-carry adder: cin on 0, a on 1..k, b on k+1..2k, cout on 2k+1; b <- a + b + cin"""
    if n < 4 or n % 2:
        raise BenchmarkError(f"fulladder needs an even size of at least 4, got {n}")
    k = (n - 2) // 2
    params = load_params()["fulladder"]
    cin, cout = 0, n - 1
    a = list(range(1, k + 1))
    bits = list(range(k + 1, 2 * k + 1))
    b = CircuitBuilder(n, n)
    if params["cin"]:
        b.x(cin)
    for i in range(k):
        if (params["a"] >> i) & 1:
            b.x(a[i])
        if (params["b"] >> i) & 1:
            b.x(bits[i])
    carries = [cin] + a[:-1]
    for i in range(k):
        _maj(b, carries[i], bits[i], a[i])
    b.cx(a[-1], cout)
    for i in reversed(range(k)):
        _uma(b, carries[i], bits[i], a[i])
    return b.measure_all().build()


def fulladder_expected(n: int) -> int:
    """Classical value the adder's register holds after the sum"""
    k = (n - 2) // 2
    params = load_params()["fulladder"]
    mask = (1 << k) - 1
    a, b, cin = params["a"] & mask, params["b"] & mask, params["cin"] & 1
    total = a + b + cin
    return cin | (a << 1) | ((total & mask) << (k + 1)) | ((total >> k) << (2 * k + 1))


def _qec_steane(n: int) -> Circuit:
    """Steane encoding of |0> on 0..6, then one round of Z and X syndrome extraction"""
    if n != 13:
        raise BenchmarkError(f"qec-steane is defined on 13 qubits, got {n}")
    b = CircuitBuilder(13, 13)
    b.cx(STEANE_INPUT, 4).cx(STEANE_INPUT, 5)
    for pivot in STEANE_PIVOTS:
        b.h(pivot)
    for pivot, row in zip(STEANE_PIVOTS, STEANE_ROWS):
        for q in row:
            if q != pivot:
                b.cx(pivot, q)
    for ancilla, row in zip((7, 8, 9), STEANE_ROWS):
        for q in row:
            b.cx(q, ancilla)
    for ancilla, row in zip((10, 11, 12), STEANE_ROWS):
        b.h(ancilla)
        for q in row:
            b.cx(ancilla, q)
        b.h(ancilla)
    return b.measure_all().build()


def _tfim(n: int) -> Circuit:
    """First-order Trotter steps of H = -J sum ZZ - h sum X on an open chain"""
    if n < 2:
        raise BenchmarkError(f"tfim needs at least 2 sites, got {n}")
    params = load_params()["tfim"]
    theta_zz = -2.0 * params["coupling"] * params["dt"]
    theta_x = -2.0 * params["field"] * params["dt"]
    b = CircuitBuilder(n, n)
    for _ in range(params["steps"]):
        for q in range(n - 1):
            b.rzz(q, q + 1, theta_zz)
        for q in range(n):
            b.rx(q, theta_x)
    return b.measure_all().build()


def _qaoa(n: int) -> Circuit:
    """MaxCut ansatz on the complete graph K_n"""
    if n < 2:
        raise BenchmarkError(f"qaoa needs at least 2 qubits, got {n}")
    params = load_params()["qaoa"]
    b = CircuitBuilder(n, n)
    for q in range(n):
        b.h(q)
    for gamma, beta in zip(params["gammas"], params["betas"]):
        for i in range(n):
            for j in range(i + 1, n):
                b.rzz(i, j, 2.0 * gamma)
        for q in range(n):
            b.rx(q, 2.0 * beta)
    return b.measure_all().build()


def _vqe(n: int) -> Circuit:
    """Hardware-efficient ansatz: RY/RZ layer, CX chain, RY/RZ layer"""
    if n < 2:
        raise BenchmarkError(f"vqe needs at least 2 qubits, got {n}")
    rng = np.random.default_rng(load_params()["vqe"]["seed"])
    angles = rng.uniform(0.0, 2.0 * math.pi, size=(2, n, 2))
    b = CircuitBuilder(n, n)
    for layer in range(2):
        if layer:
            for q in range(n - 1):
                b.cx(q, q + 1)
        for q in range(n):
            b.ry(q, float(angles[layer, q, 0])).rz(q, float(angles[layer, q, 1]))
    return b.measure_all().build()


# name -> (default size, generator, description)
BENCHMARKS: Dict[str, Tuple[int, Callable[[int], Circuit], str]] = {
    "qec-steane": (13, _qec_steane, "Steane [[7,1,3]] encoding plus one syndrome round"),
    "fulladder": (12, _fulladder, "5-bit ripple-carry adder on fixed inputs"),
    "ghz": (16, _ghz, "GHZ state preparation along a CX chain"),
    "tfim": (12, _tfim, "Trotterized transverse-field Ising chain"),
    "qaoa": (8, _qaoa, "MaxCut QAOA on the complete graph, p=2"),
    "vqe": (10, _vqe, "Hardware-efficient variational ansatz"),
}


def list_benchmarks() -> List[dict]:
    return [
        {"name": name, "default_size": size, "description": description}
        for name, (size, _, description) in BENCHMARKS.items()
    ]


def generate(b: BenchmarkSpec) -> Circuit:
    if b.name not in BENCHMARKS:
        raise BenchmarkError(f"unknown benchmark '{b.name}'")
    circuit = BENCHMARKS[b.name][1](b.qubits)
    logger.info(f"Generated {b.label}: {len(circuit)} instruction(s)")
    return circuit


def golden(b: BenchmarkSpec) -> dict:
    """Top state of the noise-free output, computed by the exact simulator"""
    circuit = generate(b)
    distribution = vector_to_distribution(run_exact(circuit), circuit.num_clbits)
    state, probability = top_state(distribution)
    return {"state": state, "state_int": int(state, 2), "probability": probability}
