"""Per-qubit density-matrix simulation with relaxation and dephasing.

Each qubit evolves independently: unitaries conjugate a 2x2 density matrix,
delays apply amplitude damping (T1) plus the pure-dephasing remainder of
T2, and measurements report exact outcome probabilities through an
asymmetric assignment-error matrix.  Mid-circuit measurements act
non-selectively (Z dephasing), which is exact for the marginals used here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class QubitParams:
    t1_us: float = 197.36
    t2_us: float = 118.43
    gate_error: float = 0.0          # depolarizing per 1q gate
    read1_given0: float = 0.0        # P(read 1 | prepared 0)
    read0_given1: float = 0.0        # P(read 0 | prepared 1)
    meas_ns: float = 2000.0

    def __post_init__(self):
        if self.t2_us > 2 * self.t1_us:
            raise ValueError("T2 must not exceed 2*T1")
        for p in (self.gate_error, self.read1_given0, self.read0_given1):
            if not 0 <= p <= 1:
                raise ValueError("probabilities must lie in [0, 1]")


@dataclass
class DeviceParams:
    """Per-qubit device description for the benchmarking simulator."""

    qubits: dict[int, QubitParams] = field(default_factory=dict)
    default: QubitParams = QubitParams()
    excitation: float = 0.0          # thermal population toward |1>, default off

    def of(self, q: int) -> QubitParams:
        return self.qubits.get(q, self.default)


# sequence operations: ("gate", 2x2 unitary) | ("delay", ns) | ("measure",)
GATE, DELAY_NS, MEASURE_NS = "gate", "delay", "measure"


def _damping(rho: np.ndarray, t_ns: float, qp: QubitParams,
             excitation: float) -> np.ndarray:
    """Amplitude damping toward |0> (or a thermal mix) plus pure dephasing."""
    if t_ns <= 0:
        return rho
    t_us = t_ns / 1000.0
    g = 1.0 - np.exp(-t_us / qp.t1_us)          # relaxation weight
    # T2 combines T1 decay and pure dephasing: 1/T2 = 1/(2 T1) + 1/Tphi
    coh = np.exp(-t_us / qp.t2_us)
    p0, p1 = rho[0, 0], rho[1, 1]
    new = np.empty_like(rho)
    new[0, 0] = p0 + g * (1 - excitation) * p1 - g * excitation * p0
    new[1, 1] = 1.0 - new[0, 0]
    new[0, 1] = rho[0, 1] * coh
    new[1, 0] = rho[1, 0] * coh
    return new


def _depolarize(rho: np.ndarray, p: float) -> np.ndarray:
    return (1 - p) * rho + p * np.eye(2, dtype=complex) / 2


def density_run(sequence: list[tuple], qubit: int,
                device: DeviceParams) -> np.ndarray:
    """Evolve one qubit's density matrix through a gate/delay sequence.

    Returns the outcome probability vector [P(read 0), P(read 1)] of the
    final measurement, assignment error included.  Mid-sequence
    measurements dephase the state and add their duration as idle time.
    """
    qp = device.of(qubit)
    rho = np.array([[1, 0], [0, 0]], dtype=complex)
    for op in sequence:
        kind = op[0]
        if kind == GATE:
            u = op[1]
            rho = u @ rho @ u.conj().T
            if qp.gate_error:
                rho = _depolarize(rho, qp.gate_error)
        elif kind == DELAY_NS:
            rho = _damping(rho, op[1], qp, device.excitation)
        elif kind == MEASURE_NS:
            rho = _damping(rho, qp.meas_ns, qp, device.excitation)
            rho = np.diag(np.diag(rho))          # non-selective collapse
        elif kind == "depol":
            rho = _depolarize(rho, op[1])
        else:
            raise ValueError(f"unknown sequence op {kind!r}")
    p0 = float(rho[0, 0].real)
    p1 = float(rho[1, 1].real)
    read0 = p0 * (1 - qp.read1_given0) + p1 * qp.read0_given1
    return np.array([read0, 1.0 - read0])


def idle_decay_factor(t_ns: float, qp: QubitParams) -> float:
    """Closed-form decay-parameter multiplier for idling t_ns.

    The depolarizing-equivalent decay constant of the idle channel,
    p = (2 e^{-t/T2} + e^{-t/T1}) / 3, multiplies the per-cycle decay of a
    randomized sequence that idles for t_ns each cycle.
    """
    t_us = t_ns / 1000.0
    return (2 * np.exp(-t_us / qp.t2_us) + np.exp(-t_us / qp.t1_us)) / 3.0
