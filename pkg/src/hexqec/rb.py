"""Randomized-benchmarking protocols against the per-qubit device simulator,
plus the mirrored-block correlation analysis against the circuit sampler.

The single-qubit Clifford group is enumerated once as 24 unitaries with a
canonical index, composition and inverse tables, and an H/S word for each
element so sequences can also be emitted as stabilizer-circuit gates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import (DELAY, H, MEASURE, PAULI_X, PAULI_Z, RESET, S,
                      Circuit, Instruction, build_improved_cycle)
from .density import (DELAY_NS, GATE, MEASURE_NS, DeviceParams, QubitParams,
                      density_run, idle_decay_factor)
from .frame import Seed, sample
from .lattice import Patch
from .noise import DEP2, Channel, NoiseModel, annotate

# ---------------------------------------------------------------------------
# single-qubit Clifford group


def _canonical(u: np.ndarray) -> tuple:
    flat = u.flatten()
    k = np.flatnonzero(np.abs(flat) > 1e-9)[0]
    u = u * (np.conj(flat[k]) / abs(flat[k]))
    return tuple((float(np.round(v.real, 9)) + 0.0,
                  float(np.round(v.imag, 9)) + 0.0) for v in u.flatten())


def _build_clifford_tables():
    h = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    s = np.array([[1, 0], [0, 1j]], dtype=complex)
    eye = np.eye(2, dtype=complex)
    elements = {_canonical(eye): (eye, "")}
    frontier = [(eye, "")]
    while frontier:
        nxt = []
        for u, word in frontier:
            for g, tag in ((h, "H"), (s, "S")):
                v = g @ u
                key = _canonical(v)
                if key not in elements:
                    elements[key] = (v, tag + word)
                    nxt.append((v, tag + word))
        frontier = nxt
    assert len(elements) == 24
    items = sorted(elements.items(), key=lambda kv: kv[0])
    unitaries = np.array([u for _, (u, _) in items])
    words = [w for _, (_, w) in items]
    index = {k: i for i, (k, _) in enumerate(items)}

    compose = np.zeros((24, 24), dtype=np.int8)
    for i in range(24):
        for j in range(24):
            compose[i, j] = index[_canonical(unitaries[i] @ unitaries[j])]
    inverse = np.zeros(24, dtype=np.int8)
    ident = index[_canonical(np.eye(2, dtype=complex))]
    for i in range(24):
        inverse[i] = int(np.flatnonzero(compose[i] == ident)[0])
    return unitaries, words, compose, inverse, ident


CLIFFORD_UNITARIES, CLIFFORD_WORDS, CLIFFORD_COMPOSE, CLIFFORD_INVERSE, \
    CLIFFORD_ID = _build_clifford_tables()
X_INDEX = int(np.flatnonzero([
    _canonical(u) == _canonical(np.array([[0, 1], [1, 0]], dtype=complex))
    for u in CLIFFORD_UNITARIES])[0])
Z_INDEX = int(np.flatnonzero([
    _canonical(u) == _canonical(np.array([[1, 0], [0, -1]], dtype=complex))
    for u in CLIFFORD_UNITARIES])[0])


def compose_sequence(indices) -> int:
    """Index of C_m ... C_2 C_1 for gates applied in list order."""
    acc = CLIFFORD_ID
    for idx in indices:
        acc = int(CLIFFORD_COMPOSE[idx, acc])
    return acc


# ---------------------------------------------------------------------------
# sequence containers


@dataclass
class RbSequence:
    """One randomized sequence across a set of qubits.

    ``ops[q]`` is the per-qubit op list consumed by the device simulator:
    ("cliff", index) | ("measure",) | ("delay", ns) | ("depol", p).
    ``expected[q]`` is the ideal final bit.
    """

    m: int
    k_index: int
    ops: dict[int, list[tuple]]
    expected: dict[int, int]
    x_flags: dict[int, bool]
    meta: dict = field(default_factory=dict)


@dataclass
class SurvivalRecord:
    qubit: int
    m: int
    sequence: int
    target_one: bool
    survival: float
    shots: int


def records_csv(records: list[SurvivalRecord]) -> str:
    lines = ["qubit,m,sequence,target_one,survival,shots"]
    for r in records:
        lines.append(f"{r.qubit},{r.m},{r.sequence},{int(r.target_one)},"
                     f"{r.survival:.8g},{r.shots}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# simultaneous RB


def gen_simultaneous_rb(qubits: list[int], m_list: list[int], k: int,
                        seed: int) -> list[RbSequence]:
    """k random sequences per length, with a random target state per qubit.

    Each qubit gets an optional initial X, m random Cliffords, and the
    inverse of the Clifford part, so it ideally returns to |0> or |1>.
    """
    if sorted(m_list) != list(m_list):
        raise ValueError("m list must be ascending")
    rng = np.random.Generator(np.random.Philox(key=[seed, 0x51B]))
    out = []
    for m in m_list:
        for kk in range(k):
            ops: dict[int, list[tuple]] = {}
            expected: dict[int, int] = {}
            flags: dict[int, bool] = {}
            for q in qubits:
                x_flag = bool(rng.integers(0, 2))
                cliffs = [int(c) for c in rng.integers(0, 24, size=m)]
                inv = int(CLIFFORD_INVERSE[compose_sequence(cliffs)])
                seq: list[tuple] = []
                if x_flag:
                    seq.append(("cliff", X_INDEX))
                seq.extend(("cliff", c) for c in cliffs)
                seq.append(("cliff", inv))
                ops[q] = seq
                expected[q] = int(x_flag)
                flags[q] = x_flag
            out.append(RbSequence(m=m, k_index=kk, ops=ops, expected=expected,
                                  x_flags=flags,
                                  meta={"protocol": "simultaneous"}))
    return out


def run_sequences(sequences: list[RbSequence], device: DeviceParams,
                  shots: int, seed: int) -> list[SurvivalRecord]:
    """Exact per-qubit outcome probabilities plus binomial shot noise."""
    rng = np.random.Generator(np.random.Philox(key=[seed, 0x5E0]))
    records = []
    for s in sequences:
        for q, ops in s.ops.items():
            dens_ops = []
            for op in ops:
                if op[0] == "cliff":
                    dens_ops.append((GATE, CLIFFORD_UNITARIES[op[1]]))
                elif op[0] == "measure":
                    dens_ops.append((MEASURE_NS,))
                elif op[0] == "delay":
                    dens_ops.append((DELAY_NS, op[1]))
                elif op[0] == "depol":
                    dens_ops.append(("depol", op[1]))
            probs = density_run(dens_ops, q, device)
            p_surv = probs[s.expected[q]]
            hits = int(rng.binomial(shots, min(max(p_surv, 0.0), 1.0)))
            records.append(SurvivalRecord(
                qubit=q, m=s.m, sequence=s.k_index,
                target_one=bool(s.expected[q]),
                survival=hits / shots, shots=shots))
    return records


def fit_rb(records: list[SurvivalRecord]):
    """Per-qubit decay fit of sequence-averaged survival to A p^m + 1/2.

    Returns {qubit: (A, p, A_err, p_err)}; a qubit whose fit fails is
    reported with NaNs without affecting the others.
    """
    from scipy.optimize import curve_fit

    by_qm: dict[tuple[int, int], list[float]] = {}
    for r in records:
        by_qm.setdefault((r.qubit, r.m), []).append(r.survival)
    fits = {}
    qubits = sorted({q for q, _ in by_qm})
    for q in qubits:
        ms = sorted(m for qq, m in by_qm if qq == q)
        if len(ms) < 3:
            raise ValueError(f"qubit {q} has fewer than 3 sequence lengths")
        mean = np.array([np.mean(by_qm[(q, m)]) for m in ms])
        try:
            popt, pcov = curve_fit(lambda m, a, p: a * p**m + 0.5,
                                   np.array(ms, dtype=float), mean,
                                   p0=[0.5, 0.99], maxfev=10000)
            perr = np.sqrt(np.diag(pcov))
            fits[q] = (popt[0], popt[1], perr[0], perr[1])
        except RuntimeError:
            fits[q] = (math.nan, math.nan, math.nan, math.nan)
    return fits


# ---------------------------------------------------------------------------
# mid-circuit measurement RB

MID_VARIANTS = ("ReturnToTarget", "AlwaysZero", "AlwaysOne", "DelayOnly",
                "RandomizePreMeasure")


def gen_midcircuit_rb(measure_qubits: list[int], spectator_qubits: list[int],
                      m_list: list[int], k: int, seed: int,
                      variant: str = "ReturnToTarget",
                      cliffords_per_segment: int = 4,
                      meas_ns: float = 2000.0,
                      spectator_scramble: float = 0.0) -> list[RbSequence]:
    """Interleave Clifford segments with mid-circuit measurements.

    Each round is ``cliffords_per_segment`` random Cliffords, a gate
    steering the qubit to the variant's pre-measurement state, the
    measurement (or an equal-duration delay), and a random Z.  Spectators
    idle for the measurement duration; ``spectator_scramble`` adds a
    depolarizing proxy for rotation echoes acting during readout.
    """
    if variant not in MID_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if set(measure_qubits) & set(spectator_qubits):
        raise ValueError("measure and spectator sets must be disjoint")
    rng = np.random.Generator(np.random.Philox(key=[seed, 0x31D]))
    out = []
    for m in m_list:
        for kk in range(k):
            ops: dict[int, list[tuple]] = {}
            expected: dict[int, int] = {}
            flags: dict[int, bool] = {}
            for q in list(measure_qubits) + list(spectator_qubits):
                is_meas = q in measure_qubits
                x_flag = bool(rng.integers(0, 2))
                target = X_INDEX if x_flag else CLIFFORD_ID
                seq: list[tuple] = []
                acc = CLIFFORD_ID
                if x_flag:
                    seq.append(("cliff", X_INDEX))
                    acc = X_INDEX
                for _ in range(m):
                    for c in rng.integers(0, 24, size=cliffords_per_segment):
                        seq.append(("cliff", int(c)))
                        acc = int(CLIFFORD_COMPOSE[int(c), acc])
                    if variant == "RandomizePreMeasure":
                        park = int(rng.integers(0, 24))
                    elif variant == "AlwaysZero":
                        park = CLIFFORD_ID
                    elif variant == "AlwaysOne":
                        park = X_INDEX
                    else:
                        park = target
                    steer = int(CLIFFORD_COMPOSE[park,
                                                 CLIFFORD_INVERSE[acc]])
                    seq.append(("cliff", steer))
                    acc = park
                    if is_meas and variant != "DelayOnly":
                        seq.append(("measure",))
                        if rng.integers(0, 2):
                            seq.append(("cliff", Z_INDEX))
                            acc = int(CLIFFORD_COMPOSE[Z_INDEX, acc])
                    else:
                        seq.append(("delay", meas_ns))
                        if not is_meas and spectator_scramble > 0:
                            seq.append(("depol", spectator_scramble))
                seq.append(("cliff",
                            int(CLIFFORD_COMPOSE[target,
                                                 CLIFFORD_INVERSE[acc]])))
                ops[q] = seq
                expected[q] = int(x_flag)
                flags[q] = x_flag
            out.append(RbSequence(m=m, k_index=kk, ops=ops, expected=expected,
                                  x_flags=flags,
                                  meta={"protocol": "midcircuit",
                                        "variant": variant}))
    return out


def midcircuit_cycle_prediction(qp: QubitParams, per_gate: float,
                                gates_per_cycle: int = 5,
                                meas_ns: float = 2000.0) -> float:
    """Closed-form per-cycle decay for a randomized pre-measurement state:
    the gate contribution times the damping-channel decay factor."""
    return (1 - per_gate) ** gates_per_cycle * idle_decay_factor(meas_ns, qp)


# ---------------------------------------------------------------------------
# temporal consistency


def gen_temporal_consistency(seed: int, qubits: list[int], m: int,
                             k: int) -> list[RbSequence]:
    """A single frozen randomization reusable across repeated runs."""
    return gen_simultaneous_rb(qubits, [m], k, seed)


def compare_runs(a: list[SurvivalRecord], b: list[SurvivalRecord],
                 n_sigma: float = 3.0):
    """Flag sequences whose survival shifted beyond shot-noise bounds.

    Returns a list of (qubit, m, sequence, delta, sigma) for flagged rows.
    """
    key = lambda r: (r.qubit, r.m, r.sequence)
    bmap = {key(r): r for r in b}
    flags = []
    for ra in a:
        rb_ = bmap.get(key(ra))
        if rb_ is None:
            continue
        pool = (ra.survival * ra.shots + rb_.survival * rb_.shots) / \
            (ra.shots + rb_.shots)
        var = max(pool * (1 - pool), 1e-9) * (1 / ra.shots + 1 / rb_.shots)
        delta = abs(ra.survival - rb_.survival)
        if delta > n_sigma * math.sqrt(var):
            flags.append((ra.qubit, ra.m, ra.sequence, delta, math.sqrt(var)))
    return flags


# ---------------------------------------------------------------------------
# mirrored-block correlation analysis


def _clifford_layer(qubits, indices, t_1q) -> list[list[Instruction]]:
    layers: list[list[Instruction]] = []
    for q, idx in zip(qubits, indices):
        word = CLIFFORD_WORDS[idx]
        for pos, ch in enumerate(reversed(word)):   # words apply right to left
            while len(layers) <= pos:
                layers.append([])
            layers[pos].append(Instruction(H if ch == "H" else S, (q,), t_1q))
    return layers


def build_mirror_circuit(patch: Patch, m: int, seed: int,
                         include_block: bool = True) -> Circuit:
    """Twirled self-inverting syndrome block.

    Each repetition resets the measure qubits, twirls every qubit with a
    fresh random Clifford, applies the check interaction block, a random
    Pauli layer, the reversed block, and reads out the measure qubits.
    Data qubits carry a running Clifford product that a final layer
    inverts, so every final data outcome is noiselessly deterministic and
    measurement flips indicate errors directly.
    """
    rng = np.random.Generator(np.random.Philox(key=[seed, 0xC033]))
    cycle = build_improved_cycle(patch, reset=False)
    unitary = [[i for i in layer if i.op != DELAY]
               for layer in cycle.layers
               if all(i.op not in (MEASURE, RESET) for i in layer)]
    measured = sorted({t for layer in cycle.layers for ins in layer
                       if ins.op == MEASURE for t in ins.targets})
    n = len(patch.qubits)
    data = patch.data_qubits
    qubits = list(range(n))
    t1q, tmeas, treset = 30.0, 2000.0, 2200.0

    layers: list[list[Instruction]] = []
    layers.append([Instruction(RESET, tuple(qubits), treset)])
    acc = {q: CLIFFORD_ID for q in data}
    for rep in range(m):
        if rep:
            layers.append([
                Instruction(RESET, tuple(measured), treset),
                Instruction(DELAY, tuple(data), treset),
            ])
        twirl = {q: int(c) for q, c in zip(data,
                                           rng.integers(0, 24, size=len(data)))}
        for q in data:
            acc[q] = int(CLIFFORD_COMPOSE[twirl[q], acc[q]])
        layers.extend(_clifford_layer(data, [twirl[q] for q in data], t1q))
        if include_block:
            layers.extend(unitary)
        pauli = rng.integers(0, 4, size=n)
        xs = [Instruction(PAULI_X, (q,), t1q)
              for q in range(n) if pauli[q] in (1, 3)]
        zs = [Instruction(PAULI_Z, (q,), t1q)
              for q in range(n) if pauli[q] in (2, 3)]
        if xs:
            layers.append(xs)
        if zs:
            layers.append(zs)
        if include_block:
            layers.extend(reversed([list(layer) for layer in unitary]))
        layers.append([
            Instruction(MEASURE, tuple(measured), tmeas),
            Instruction(DELAY, tuple(q for q in qubits if q not in measured),
                        tmeas),
        ])
    inv = {q: int(CLIFFORD_INVERSE[acc[q]]) for q in data}
    layers.extend(_clifford_layer(data, [inv[q] for q in data], t1q))
    layers.append([Instruction(MEASURE, tuple(qubits), tmeas)])

    circ = Circuit(layers=layers, rounds=m,
                   metadata={"patch": patch.kind, "variant": "mirror",
                             "reset": True,
                             "data_qubits": tuple(data),
                             "prep_layers": (0,)})
    circ.validate_layers()
    return circ


@dataclass
class CorrelationResult:
    qubits: list[int]
    marginal_fidelity: np.ndarray
    correlation: np.ndarray
    mutual_information: np.ndarray

    def edges_above(self, threshold: float):
        out = []
        n = len(self.qubits)
        for i in range(n):
            for j in range(i + 1, n):
                if self.mutual_information[i, j] > threshold:
                    out.append((self.qubits[i], self.qubits[j],
                                float(self.mutual_information[i, j])))
        return sorted(out, key=lambda e: -e[2])

    def to_json(self) -> str:
        return json.dumps({
            "qubits": self.qubits,
            "marginal_fidelity": self.marginal_fidelity.tolist(),
            "correlation": self.correlation.tolist(),
            "mutual_information": self.mutual_information.tolist(),
        }, indent=2)


def correlation_analysis(patch: Patch, m: int, shots: int,
                         model: NoiseModel, seed: int,
                         inject: list[tuple[int, int, float]] = (),
                         include_block: bool = True) -> CorrelationResult:
    """Pairwise error correlations of the twirled mirrored block.

    The per-qubit error indicator is the XOR of all measurement flips on
    that qubit (deterministically zero without noise); indicators are
    correlated across shots.  ``inject`` adds explicit two-qubit
    depolarizing channels at each readout layer to plant crosstalk.
    """
    circ = build_mirror_circuit(patch, m, seed, include_block=include_block)
    noisy = annotate(circ, model)
    if inject:
        meas_layers = [k for k, layer in enumerate(circ.layers)
                       if any(i.op == MEASURE for i in layer)]
        for (a, b, p) in inject:
            for k in meas_layers:
                noisy.channels.append(Channel(k, DEP2, (a, b), p))
        noisy.channels.sort(key=lambda c: c.layer)
    batch = sample(noisy, shots, Seed(seed, 1))

    n = len(patch.qubits)
    rows_of: dict[int, list[int]] = {q: [] for q in range(n)}
    rec = 0
    for layer in circ.layers:
        for ins in layer:
            if ins.op == MEASURE:
                for q in ins.targets:
                    rows_of[q].append(rec)
                    rec += 1
    flips = np.zeros((n, shots), dtype=np.uint8)
    for q in range(n):
        flips[q] = np.unpackbits(
            batch.xor_rows(rows_of[q]).view(np.uint8),
            bitorder="little")[:shots]

    marg = 1.0 - flips.mean(axis=1)
    corr = np.corrcoef(flips)
    corr = np.nan_to_num(corr, nan=0.0)
    np.fill_diagonal(corr, 1.0)

    mi = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            mi[i, j] = mi[j, i] = _mutual_information(flips[i], flips[j])
    return CorrelationResult(qubits=list(range(n)), marginal_fidelity=marg,
                             correlation=corr, mutual_information=mi)


def _mutual_information(a: np.ndarray, b: np.ndarray) -> float:
    n = len(a)
    mi = 0.0
    for va in (0, 1):
        pa = np.mean(a == va)
        for vb in (0, 1):
            pb = np.mean(b == vb)
            pab = np.mean((a == va) & (b == vb))
            if pab > 0 and pa > 0 and pb > 0:
                mi += pab * math.log(pab / (pa * pb))
    return max(mi, 0.0)
