"""
Shared fixtures for disqsim tests
"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pytest

from disqsim.architecture import ArchitectureSpec, parse_architecture
from disqsim.circuit import Circuit, CircuitBuilder
from disqsim.pipeline import RunOptions

FIXTURES = Path(__file__).parent / "fixtures"

SUPERCONDUCTING = ["CX", "RZ", "SX", "X"]
ION = ["RX", "RXX", "RY", "RZ"]
VIGO_EDGES = ["0-1", "1-2", "1-3", "3-4"]


def make_arch(
    sizes: Sequence[int],
    links: Sequence[Tuple[int, int]] = (),
    length_km: float = 0.2,
    basis: Optional[List[str]] = None,
    coupling: Optional[List[str]] = None,
    noise: Optional[Dict[str, float]] = None,
    strategy: str = "fill",
    name: str = "test-arch",
) -> ArchitectureSpec:
    """QPUs named q0, q1, ... with optical links between the given index pairs"""
    qpus = [
        {
            "id": f"q{i}",
            "num_qubits": size,
            "coupling_map": coupling or [],
            "basis_gates": basis or SUPERCONDUCTING,
            "noise_profile": noise or {},
        }
        for i, size in enumerate(sizes)
    ]
    edges = [{"a": f"q{a}", "b": f"q{b}", "length_km": length_km} for a, b in links]
    return parse_architecture(
        {
            "name": name,
            "qpus": qpus,
            "network": {"alpha": 0.05, "edges": edges},
            "partition": {"strategy": strategy},
        }
    )


def bell_circuit() -> Circuit:
    return CircuitBuilder(2, 2).h(0).cx(0, 1).measure_all().build()


@pytest.fixture
def bell():
    return bell_circuit()


@pytest.fixture
def two_qpu_arch():
    """Two all-to-all QPUs of 3 qubits on one 0.2 km link: one data qubit each"""
    return make_arch([3, 3], [(0, 1)])


@pytest.fixture
def line_arch():
    """Three QPUs on a line, so q0 <-> q2 needs one entanglement swap at q1"""
    return make_arch([5, 5, 5], [(0, 1), (1, 2)])


@pytest.fixture
def noise_free_options():
    return RunOptions(exact=True, noise_free=True, kappa=0.0, shots=100, seed=7)


@pytest.fixture
def golden_fixture():
    return json.loads((FIXTURES / "golden.json").read_text())


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    """Keep a developer's .env from leaking into the tests"""
    for key in (
        "DISQSIM_LOG_LEVEL",
        "DISQSIM_MAX_QUBITS",
        "DISQSIM_SHOTS",
        "DISQSIM_SEED",
        "DISQSIM_KAPPA",
        "DISQSIM_OPT_LEVEL",
        "DISQSIM_WORKERS",
        "DISQSIM_ARCH_DIR",
    ):
        monkeypatch.delenv(key, raising=False)


def assemble_circuit(c: Circuit, spec: ArchitectureSpec, pm=None):
    """Construct, isolate, transpile and assemble; returns (construction, assembled)"""
    from disqsim.assembler import assemble
    from disqsim.constructor import construct
    from disqsim.isolator import isolate
    from disqsim.transpiler import transpile_all

    construction = construct(c, spec, pm)
    isolation = isolate(construction.circuit, spec.qpu_ids)
    transpiled = transpile_all(isolation, spec)
    assembled = assemble(
        transpiled, isolation.sync_table, spec, construction.circuit.comm_qubits
    )
    return construction, assembled
