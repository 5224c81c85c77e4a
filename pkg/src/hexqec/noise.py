"""Circuit-level noise model and channel placement.

Six parameters: depolarizing rates for 1q and 2q gates, a quantum
measurement error (X flip before readout), a classical record flip, an
idle depolarizing rate applied to data qubits while measurement or reset
operations take place, and an X flip after reset.  The quantum measurement
flip can be tied to the idle rate, modelling readout error as the measure
qubit idling for the duration of its own measurement.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from .circuit import (CX, DELAY, H, MEASURE, PAULI_X, PAULI_Z, RESET, S,
                      Circuit)

# channel kinds
DEP1 = "dep1"
DEP2 = "dep2"
X_BEFORE_MEASURE = "x_before_measure"
RECORD_FLIP = "record_flip"
X_AFTER_RESET = "x_after_reset"
IDLE = "idle_dep1"

_PARAMS = ("p_1q", "p_2q", "p_qmeas", "p_cmeas", "p_idle", "p_reset")


@dataclass(frozen=True)
class NoiseModel:
    p_1q: float = 0.0
    p_2q: float = 0.0
    p_qmeas: float = 0.0
    p_cmeas: float = 0.0
    p_idle: float = 0.0
    p_reset: float = 0.0
    tie_qmeas_to_idle: bool = False

    def __post_init__(self):
        for name in _PARAMS:
            v = getattr(self, name)
            if not 0.0 <= v <= 0.75:
                raise ValueError(f"{name}={v} outside [0, 0.75]")
        if self.tie_qmeas_to_idle and self.p_qmeas != self.p_idle:
            raise ValueError("tie flag set but p_qmeas != p_idle")

    def to_json(self) -> str:
        doc = {name: getattr(self, name) for name in _PARAMS}
        doc["tie_qmeas_to_idle"] = self.tie_qmeas_to_idle
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "NoiseModel":
        return cls(**json.loads(text))


def default_fitted_model() -> NoiseModel:
    """The baseline six-parameter model used throughout the experiments."""
    return NoiseModel(p_1q=0.0002, p_2q=0.0041, p_qmeas=0.012,
                      p_cmeas=0.042, p_idle=0.012, p_reset=0.075,
                      tie_qmeas_to_idle=True)


def scale_parameter(model: NoiseModel, which: str, factor: float) -> NoiseModel:
    """Return a copy with one parameter multiplied by ``factor``.

    When the tie flag is set, scaling either of p_qmeas/p_idle scales both.
    """
    if which not in _PARAMS:
        raise ValueError(f"unknown parameter {which!r}")
    if factor < 0:
        raise ValueError("factor must be non-negative")
    updates = {which: getattr(model, which) * factor}
    if model.tie_qmeas_to_idle and which in ("p_qmeas", "p_idle"):
        updates["p_qmeas"] = model.p_qmeas * factor
        updates["p_idle"] = model.p_idle * factor
    out = replace(model, **updates)
    return out


@dataclass(frozen=True)
class Channel:
    """One noise channel instance bound to a circuit location."""

    layer: int
    kind: str
    targets: tuple[int, ...]
    p: float
    record: int | None = None   # record index for classical flips


@dataclass
class NoisyCircuit:
    base: Circuit
    channels: list[Channel]
    model: NoiseModel


def annotate(circuit: Circuit, model: NoiseModel) -> NoisyCircuit:
    """Attach noise channels to a circuit.

    Depolarizing channels precede their gates; an X flip precedes each
    measurement; classical flips act on records only; reset errors follow
    every reset except the initial state preparation; idle depolarization
    hits every data qubit carrying a Delay in a measurement or reset layer.
    Placement is a deterministic function of the circuit, so annotating
    twice yields identical channel lists.
    """
    data_qubits = circuit.metadata.get("data_qubits")
    prep_layers = set(circuit.metadata.get("prep_layers", ()))
    channels: list[Channel] = []
    rec = 0
    for k, layer in enumerate(circuit.layers):
        has_meas = any(i.op == MEASURE for i in layer)
        has_reset = any(i.op == RESET for i in layer)
        for ins in layer:
            if ins.op in (H, S, PAULI_X, PAULI_Z):
                for q in ins.targets:
                    channels.append(Channel(k, DEP1, (q,), model.p_1q))
            elif ins.op == CX:
                channels.append(Channel(k, DEP2, ins.targets, model.p_2q))
            elif ins.op == MEASURE:
                for q in ins.targets:
                    channels.append(
                        Channel(k, X_BEFORE_MEASURE, (q,), model.p_qmeas))
                    channels.append(
                        Channel(k, RECORD_FLIP, (q,), model.p_cmeas, record=rec))
                    rec += 1
            elif ins.op == RESET:
                if k in prep_layers:
                    continue  # initial state preparation, not a mid-run reset
                for q in ins.targets:
                    channels.append(
                        Channel(k, X_AFTER_RESET, (q,), model.p_reset))
            elif ins.op == DELAY and (has_meas or has_reset):
                for q in ins.targets:
                    if data_qubits is None or q in data_qubits:
                        channels.append(Channel(k, IDLE, (q,), model.p_idle))
    return NoisyCircuit(base=circuit, channels=channels, model=model)
