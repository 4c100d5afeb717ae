"""
Communication-integrated noise model
Optical loss on EPR links plus per-QPU device noise, assigned instruction by instruction
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from disqsim.architecture import ArchitectureSpec, DeviceNoiseProfile
from disqsim.assembler import AssembledCircuit
from disqsim.circuit import Circuit, GateKind, Instruction
from disqsim.config import Config
from disqsim.errors import ConfigError, InputError, NoiseAssignmentError
from disqsim.isolator import VgCase, case_of_tag

logger = logging.getLogger(__name__)

__all__ = [
    "Channel",
    "ChannelKind",
    "DeviceNoiseProfile",
    "LinkNoiseProfile",
    "NoiseSpec",
    "build_noise_spec",
    "device_noise_spec",
    "link_noise",
    "transmissivity",
]


def transmissivity(alpha: float, length_km: float) -> float:
    """eta = exp(-alpha * L)"""
    if alpha < 0:
        raise InputError(f"attenuation must be non-negative, got {alpha}")
    if length_km < 0:
        raise InputError(f"link length must be non-negative, got {length_km}")
    return math.exp(-alpha * length_km)


class LinkNoiseProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    length_km: float = Field(ge=0.0)
    alpha: float = Field(ge=0.0)
    eta: float = Field(gt=0.0, le=1.0)
    p_epr: float = Field(ge=0.0, le=1.0)


def link_noise(alpha: float, length_km: float, kappa: float = 1.0) -> LinkNoiseProfile:
    """Depolarizing strength of a delivered EPR pair, p_epr = kappa * (1 - eta)"""
    if not 0.0 <= kappa <= 1.0:
        raise ConfigError(f"kappa must lie in [0, 1], got {kappa}")
    eta = transmissivity(alpha, length_km)
    return LinkNoiseProfile(length_km=length_km, alpha=alpha, eta=eta, p_epr=kappa * (1.0 - eta))


class ChannelKind(str, Enum):
    NONE = "none"
    DEPOLARIZING_1Q = "depolarizing-1q"
    DEPOLARIZING_2Q = "depolarizing-2q"
    READOUT_FLIP = "readout-flip"
    EPR_DEPOLARIZING = "epr-depolarizing"
    RESET_FAIL = "reset-fail"


PAULI_CHANNELS = frozenset(
    {ChannelKind.DEPOLARIZING_1Q, ChannelKind.DEPOLARIZING_2Q, ChannelKind.EPR_DEPOLARIZING}
)


@dataclass(frozen=True)
class Channel:
    kind: ChannelKind = ChannelKind.NONE
    p: float = 0.0

    @property
    def is_noisy(self) -> bool:
        return self.kind is not ChannelKind.NONE and self.p > 0.0

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "p": self.p}

    @classmethod
    def from_dict(cls, data: dict) -> "Channel":
        return cls(ChannelKind(data["kind"]), float(data["p"]))


NOISELESS = Channel()


def _channel(kind: ChannelKind, p: float) -> Channel:
    return Channel(kind, p) if p > 0.0 else NOISELESS


@dataclass(frozen=True)
class NoiseSpec:
    """One channel per instruction, indexed like the circuit's instruction list"""

    channels: Tuple[Channel, ...]

    def __len__(self) -> int:
        return len(self.channels)

    def __getitem__(self, index: int) -> Channel:
        return self.channels[index]

    @property
    def average_gate_noise(self) -> float:
        """Mean assigned probability over the instructions that carry noise"""
        noisy = [ch.p for ch in self.channels if ch.is_noisy]
        return sum(noisy) / len(noisy) if noisy else 0.0

    @property
    def is_noiseless(self) -> bool:
        return not any(ch.is_noisy for ch in self.channels)

    def counts(self) -> Dict[str, int]:
        tally: Dict[str, int] = {}
        for ch in self.channels:
            kind = ch.kind.value if ch.is_noisy else ChannelKind.NONE.value
            tally[kind] = tally.get(kind, 0) + 1
        return tally

    def to_dict(self) -> dict:
        return {
            "average_gate_noise": self.average_gate_noise,
            "counts": self.counts(),
            "channels": [ch.to_dict() for ch in self.channels],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseSpec":
        return cls(tuple(Channel.from_dict(ch) for ch in data["channels"]))

    @classmethod
    def noiseless(cls, size: int) -> "NoiseSpec":
        return cls((NOISELESS,) * size)


def _device_channel(ins: Instruction, profile: DeviceNoiseProfile) -> Channel:
    if ins.kind in (GateKind.BARRIER, GateKind.VIRTUAL):
        return NOISELESS
    if ins.kind is GateKind.MEASURE:
        return _channel(ChannelKind.READOUT_FLIP, profile.p_ro)
    if ins.kind is GateKind.RESET:
        return _channel(ChannelKind.RESET_FAIL, profile.p_reset)
    if len(ins.qubits) == 2:
        return _channel(ChannelKind.DEPOLARIZING_2Q, profile.p2)
    return _channel(ChannelKind.DEPOLARIZING_1Q, profile.p1)


def device_noise_spec(c: Circuit, profile: DeviceNoiseProfile) -> NoiseSpec:
    """Assign one device profile to every instruction of a single-device circuit"""
    return NoiseSpec(tuple(_device_channel(ins, profile) for ins in c.instructions))


def build_noise_spec(
    a: AssembledCircuit, spec: ArchitectureSpec, kappa: Optional[float] = None
) -> NoiseSpec:
    """Device noise by owning QPU, link noise on the CX that prepares each EPR pair"""
    if kappa is None:
        kappa = Config().kappa
    profiles = {q.id: q.noise_profile for q in spec.qpus}
    links: Dict[Tuple[str, str], LinkNoiseProfile] = {}
    channels: List[Channel] = []

    for i, ins in enumerate(a.circuit.instructions):
        sync_id = a.sync_ids[i] if a.sync_ids else None
        owners = sorted({a.qpu_of_qubit[q] for q in ins.qubits})
        is_epr = sync_id is not None and case_of_tag(sync_id) is VgCase.EPR_PAIR

        if ins.kind is GateKind.VIRTUAL:
            raise NoiseAssignmentError(f"instruction {i} is an unresolved virtual gate")
        if is_epr and ins.kind is GateKind.CX and len(owners) == 2:
            key = (owners[0], owners[1])
            if key not in links:
                length = spec.network.length(*key)
                links[key] = link_noise(spec.network.alpha, length, kappa)
                logger.debug(
                    f"Link {key[0]}-{key[1]}: L={length} km, eta={links[key].eta:.9f}, "
                    f"p_epr={links[key].p_epr:.6g}"
                )
            channels.append(_channel(ChannelKind.EPR_DEPOLARIZING, links[key].p_epr))
            continue
        if is_epr and ins.kind is GateKind.H:
            channels.append(NOISELESS)
            continue
        if len(owners) > 1 and ins.kind is not GateKind.BARRIER:
            raise NoiseAssignmentError(
                f"instruction {i} ({ins.kind.value} on {list(ins.qubits)}) spans QPUs "
                f"{owners} but is not an EPR preparation"
            )
        channels.append(_device_channel(ins, profiles[owners[0]]))

    noise = NoiseSpec(tuple(channels))
    logger.info(
        f"Assigned noise to {len(noise)} instruction(s): "
        + ", ".join(f"{k}={v}" for k, v in sorted(noise.counts().items()))
        + f"; AN={noise.average_gate_noise:.6g}"
    )
    return noise

