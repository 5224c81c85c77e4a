"""Timed, layered stabilizer-circuit IR and syndrome-extraction builders.

A circuit is an ordered list of layers; each layer is a list of instructions
acting on disjoint qubits.  Layer duration is the maximum instruction
duration in the layer, and the circuit total is the sum over layers.

Two cycle builders are provided.  The two-step builder measures X checks
(with flag readout on the edge ancillas) and Z checks in separate
measurement steps.  The single-step builder routes all check interactions
through next-nearest-neighbour CNOT decompositions so that every measure
qubit is read out in one measurement layer; after gate cancellation the
per-brick subcircuit has ten unitary layers, twelve deep including
initialisation and readout.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .lattice import Basis, Patch, QubitRole

# instruction opcodes
RESET = "R"
H = "H"
S = "S"
CX = "CX"
PAULI_X = "X"
PAULI_Z = "Z"
MEASURE = "M"
DELAY = "DELAY"

UNITARY_OPS = frozenset({H, S, CX, PAULI_X, PAULI_Z})
TWO_QUBIT_OPS = frozenset({CX})
SELF_INVERSE_OPS = frozenset({H, CX, PAULI_X, PAULI_Z})


@dataclass(frozen=True)
class DurationTable:
    """Operation durations in nanoseconds.

    The defaults are calibrated constants: with them the two-step cycle
    totals 11 100 ns per round and the single-step cycle totals 3 200 ns
    without reset and 5 400 ns with reset.
    """

    t_1q: float = 30.0
    t_2q: float = 120.0
    t_meas: float = 2000.0
    t_reset: float = 2200.0

    def __post_init__(self):
        for name in ("t_1q", "t_2q", "t_meas", "t_reset"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def of(self, op: str) -> float:
        if op == RESET:
            return self.t_reset
        if op == MEASURE:
            return self.t_meas
        if op in TWO_QUBIT_OPS:
            return self.t_2q
        return self.t_1q


@dataclass(frozen=True)
class Instruction:
    op: str
    targets: tuple[int, ...]
    duration: float

    def __post_init__(self):
        if self.op == CX and len(self.targets) != 2:
            raise ValueError("CX takes exactly two targets")


@dataclass(frozen=True)
class MeasurementRecord:
    """Bookkeeping for one measurement outcome slot."""

    index: int
    qubit: int
    round: int            # 1..t for cycles, t+1 for the final data readout
    kind: str             # "check" | "flag" | "data"
    check_id: int | None
    reset_before: bool    # True if the qubit was reset since its previous record


@dataclass
class Circuit:
    layers: list[list[Instruction]] = field(default_factory=list)
    records: list[MeasurementRecord] = field(default_factory=list)
    rounds: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def n_qubits(self) -> int:
        m = -1
        for layer in self.layers:
            for ins in layer:
                if ins.targets:
                    m = max(m, max(ins.targets))
        return m + 1

    @property
    def measurement_index(self) -> dict[tuple[int, int], int]:
        """Map (round, measure qubit) -> record position for check records."""
        return {(r.round, r.qubit): r.index
                for r in self.records if r.kind == "check"}

    def total_duration(self) -> float:
        return sum(max(i.duration for i in layer)
                   for layer in self.layers if layer)

    def unitary_layer_count(self) -> int:
        return sum(1 for layer in self.layers
                   if layer and all(i.op in UNITARY_OPS for i in layer))

    def validate_layers(self) -> None:
        for k, layer in enumerate(self.layers):
            seen: set[int] = set()
            for ins in layer:
                for t in ins.targets:
                    if t in seen:
                        raise ValueError(
                            f"qubit {t} targeted twice in layer {k}")
                    seen.add(t)

    def instructions(self):
        for k, layer in enumerate(self.layers):
            for ins in layer:
                yield k, ins


# ---------------------------------------------------------------------------
# circuit identities


def decompose_nn_cx(control: int, via: int, target: int,
                    couplings: set[tuple[int, int]] | None = None,
                    t_2q: float = 120.0) -> list[Instruction]:
    """Express CNOT(control -> target) through an intermediate qubit.

    Returns four nearest-neighbour CX gates whose net action is the
    next-nearest-neighbour CNOT with the via qubit untouched.  The list is
    applied left to right.
    """
    if couplings is not None:
        norm = {frozenset(c) for c in couplings}
        if frozenset((control, via)) not in norm or \
           frozenset((via, target)) not in norm:
            raise ValueError(
                f"({control}, {via}, {target}) is not a coupled chain")
    return [
        Instruction(CX, (via, target), t_2q),
        Instruction(CX, (control, via), t_2q),
        Instruction(CX, (via, target), t_2q),
        Instruction(CX, (control, via), t_2q),
    ]


def cancel_adjacent_gates(circuit: Circuit) -> Circuit:
    """Remove adjacent self-inverse gate pairs on identical targets.

    Two gates cancel when they have the same opcode and targets and no
    other instruction touches any of those targets in between.  Applied to
    a fixpoint; empty layers are dropped.  The result is tableau-equivalent
    to the input.
    """
    seq: list[tuple[int, Instruction]] = list(circuit.instructions())
    changed = True
    while changed:
        changed = False
        removed: set[int] = set()
        last_touch: dict[int, int] = {}   # qubit -> seq position
        for i, (_, ins) in enumerate(seq):
            if i in removed:
                continue
            if ins.op in SELF_INVERSE_OPS and ins.targets:
                prev = {last_touch.get(t) for t in ins.targets}
                if len(prev) == 1:
                    (j,) = prev
                    if j is not None and j not in removed:
                        other = seq[j][1]
                        if other.op == ins.op and other.targets == ins.targets:
                            removed.update((i, j))
                            changed = True
                            for t in ins.targets:
                                del last_touch[t]
                            continue
            for t in ins.targets:
                last_touch[t] = i
        if removed:
            seq = [x for i, x in enumerate(seq) if i not in removed]

    layers: list[list[Instruction]] = [[] for _ in circuit.layers]
    for k, ins in seq:
        layers[k].append(ins)
    return replace(circuit, layers=[l for l in layers if l])


# ---------------------------------------------------------------------------
# single-step cycle (all checks measured in one layer)


def _fused_via_gates(measure: int, via: int, targets: list[int],
                     t_2q: float) -> list[list[Instruction]]:
    """Gate stream routing CX(measure -> each target) through one via.

    Emitted as full next-nearest-neighbour expansions with the cancelling
    pair kept in place; ``cancel_adjacent_gates`` reduces a two-target
    group from 8 gates to 6.  Returns slot groups in template order.
    """
    cx = lambda a, b: Instruction(CX, (a, b), t_2q)
    if len(targets) == 2:
        a, b = targets
        return [
            [cx(via, a)],
            [cx(measure, via)],
            [cx(via, a)],
            [cx(measure, via)],   # cancels with the next slot
            [cx(measure, via)],
            [cx(via, b)],
            [cx(measure, via)],
            [cx(via, b)],
        ]
    (a,) = targets
    return [
        [cx(via, a)],
        [cx(measure, via)],
        [cx(via, a)],
        [cx(measure, via)],
    ]


# template slot -> layer index for the 14-layer pre-cancellation plan;
# layers 4..7 hold only cancelling pairs and vanish, leaving ten layers
_TOP_SLOTS = (0, 1, 2, 4, 5, 8, 9, 10)
_BOT_SLOTS = (0, 2, 3, 6, 7, 8, 10, 11)


def _improved_memory_layers(patch: Patch, durations: DurationTable):
    """Unitary layer plan for a memory patch single-step cycle.

    Bricks follow a fixed slot template chosen so that plaquettes sharing a
    corner data qubit never address it in the same layer; the trailing two
    layers collect Z-check parities onto the edge ancillas.
    """
    t2, t1 = durations.t_2q, durations.t_1q
    cx = lambda a, b: Instruction(CX, (a, b), t2)
    had = lambda q: Instruction(H, (q,), t1)

    grid = {tuple(map(int, k.split(","))): v
            for k, v in patch.meta["data_grid"].items()}
    pos = {v: k for k, v in grid.items()}

    layers: list[list[Instruction]] = [[] for _ in range(14)]
    handled_anc: set[int] = set()

    for ch in patch.checks_of(Basis.X):
        m = ch.measure_qubit
        if ch.weight == 4:
            vt, vb = ch.via_qubits
            rows = sorted({pos[q][0] for q in ch.support})
            cols = sorted({pos[q][1] for q in ch.support})
            nw, ne = grid[(rows[0], cols[0])], grid[(rows[0], cols[1])]
            sw, se = grid[(rows[1], cols[0])], grid[(rows[1], cols[1])]
            for slot, k in zip(_fused_via_gates(m, vt, [nw, ne], t2), _TOP_SLOTS):
                layers[k].extend(slot)
            for slot, k in zip(_fused_via_gates(m, vb, [sw, se], t2), _BOT_SLOTS):
                layers[k].extend(slot)
            layers[0].append(had(m))
            layers[12].append(had(m))
            for via, (da, db) in ((vt, (nw, ne)), (vb, (sw, se))):
                layers[12].append(cx(da, via))
                layers[13].append(cx(db, via))
                handled_anc.add(via)
        else:
            da, db = sorted(ch.support, key=lambda q: pos[q])
            layers[0].append(had(m))
            layers[1].append(cx(m, da))
            layers[3].append(cx(m, db))
            layers[8].append(had(m))

    for ch in patch.checks_of(Basis.Z):
        anc = ch.measure_qubit
        if anc in handled_anc:
            continue
        da, db = sorted(ch.support, key=lambda q: pos[q])
        layers[12].append(cx(da, anc))
        layers[13].append(cx(db, anc))

    return layers


def _coupling_map(patch: Patch) -> dict[int, set[int]]:
    out: dict[int, set[int]] = {}
    for a, b in patch.couplings:
        out.setdefault(a, set()).add(b)
        out.setdefault(b, set()).add(a)
    return out


def _improved_generic_layers(patch: Patch, durations: DurationTable):
    """Greedy layer plan for patches without the brick template (stability).

    Emits one gate stream per check and packs it ASAP subject to per-qubit
    ordering; cancellation afterwards removes NN expansion overlap.
    """
    t2, t1 = durations.t_2q, durations.t_1q
    pos_of = {q.id: (q.y, q.x) for q in patch.qubits}
    coupled = _coupling_map(patch)
    stream: list[Instruction] = []

    for ch in patch.checks_of(Basis.X):
        m = ch.measure_qubit
        stream.append(Instruction(H, (m,), t1))
        remaining = set(ch.support)
        for via in ch.via_qubits:
            targets = sorted(remaining & coupled[via], key=lambda q: pos_of[q])
            remaining -= set(targets)
            for group in _fused_via_gates(m, via, targets, t2):
                stream.extend(group)
        for q in sorted(remaining, key=lambda q: pos_of[q]):
            stream.append(Instruction(CX, (m, q), t2))
        stream.append(Instruction(H, (m,), t1))

    for ch in patch.checks_of(Basis.Z):
        for q in sorted(ch.support, key=lambda q: pos_of[q]):
            stream.append(Instruction(CX, (q, ch.measure_qubit), t2))

    layers: list[list[Instruction]] = []
    busy_until: dict[int, int] = {}
    for ins in stream:
        k = max((busy_until.get(t, 0) for t in ins.targets), default=0)
        while len(layers) <= k:
            layers.append([])
        layers[k].append(ins)
        for t in ins.targets:
            busy_until[t] = k + 1
    return layers


def _measured_ancillas(patch: Patch) -> list[int]:
    anc = {c.measure_qubit for c in patch.checks}
    anc |= {q.id for q in patch.qubits if q.role is QubitRole.VIA}
    return sorted(anc)


def build_improved_cycle(patch: Patch, reset: bool,
                         durations: DurationTable | None = None) -> Circuit:
    """One syndrome-extraction round with a single measurement layer.

    All X and Z checks are measured in the same time step; via qubits that
    serve no check are read out as auxiliary flag records.  With the
    default durations a memory-patch round takes 3 200 ns without reset
    and 5 400 ns with reset.
    """
    durations = durations or DurationTable()
    if patch.kind == "memory":
        unitary = _improved_memory_layers(patch, durations)
    else:
        unitary = _improved_generic_layers(patch, durations)

    measured = _measured_ancillas(patch)
    data = patch.data_qubits
    layers: list[list[Instruction]] = []
    if reset:
        layers.append([
            Instruction(RESET, tuple(measured), durations.t_reset),
            Instruction(DELAY, tuple(data), durations.t_reset),
        ])
    layers.extend(unitary)
    layers.append([
        Instruction(MEASURE, tuple(measured), durations.t_meas),
        Instruction(DELAY, tuple(data), durations.t_meas),
    ])

    circ = Circuit(layers=layers, rounds=1,
                   metadata={"patch": patch.kind, "variant": "improved",
                             "reset": reset, "data_qubits": tuple(data)})
    circ = cancel_adjacent_gates(circ)

    check_of_anc = {c.measure_qubit: c.id for c in patch.checks}
    records = []
    for q in measured:
        cid = check_of_anc.get(q)
        records.append(MeasurementRecord(
            index=len(records), qubit=q, round=1,
            kind="check" if cid is not None else "flag",
            check_id=cid, reset_before=reset))
    circ.records = records
    circ.validate_layers()
    return circ


# ---------------------------------------------------------------------------
# two-step cycle (X checks with flags, then Z checks)


def build_original_cycle(patch: Patch, reset: bool = True,
                         durations: DurationTable | None = None) -> Circuit:
    """One two-step round: X checks (flag-assisted) then Z checks.

    Check gadgets are scheduled sequentially; with resets and the default
    durations the round takes 11 100 ns.  Only memory patches are supported.
    """
    if patch.kind != "memory":
        raise ValueError("two-step cycle is defined for memory patches only")
    if not reset:
        # dropping resets would leak stale flag state into the data qubits
        # through the flag gadget; the two-step schedule requires fresh flags
        raise ValueError("two-step cycle requires resets")
    durations = durations or DurationTable()
    t1, t2 = durations.t_1q, durations.t_2q
    cx = lambda a, b: Instruction(CX, (a, b), t2)

    grid = {tuple(map(int, k.split(","))): v
            for k, v in patch.meta["data_grid"].items()}
    pos = {v: k for k, v in grid.items()}
    data = patch.data_qubits

    x_checks = patch.checks_of(Basis.X)
    z_checks = patch.checks_of(Basis.Z)
    x_anc = sorted({c.measure_qubit for c in x_checks})
    flags = sorted({v for c in x_checks for v in c.via_qubits})
    z_anc = sorted({c.measure_qubit for c in z_checks})
    x_step_measured = sorted(set(x_anc) | set(flags))

    layers: list[list[Instruction]] = []
    if reset:
        layers.append([
            Instruction(RESET, tuple(x_step_measured), durations.t_reset),
            Instruction(DELAY, tuple(data), durations.t_reset),
        ])
    layers.append([Instruction(H, (q,), t1) for q in x_anc])

    for ch in x_checks:
        m = ch.measure_qubit
        if ch.weight == 4:
            vt, vb = ch.via_qubits
            rows = sorted({pos[q][0] for q in ch.support})
            cols = sorted({pos[q][1] for q in ch.support})
            nw, ne = grid[(rows[0], cols[0])], grid[(rows[0], cols[1])]
            sw, se = grid[(rows[1], cols[0])], grid[(rows[1], cols[1])]
            layers.extend([
                [cx(m, vt)], [cx(vt, nw)], [cx(vt, ne)], [cx(m, vt)],
                [cx(m, vb)], [cx(vb, sw)], [cx(vb, se)], [cx(m, vb)],
            ])
        else:
            da, db = sorted(ch.support, key=lambda q: pos[q])
            layers.extend([[cx(m, da)], [cx(m, db)]])

    layers.append([Instruction(H, (q,), t1) for q in x_anc])
    layers.append([
        Instruction(MEASURE, tuple(x_step_measured), durations.t_meas),
        Instruction(DELAY, tuple(data), durations.t_meas),
    ])

    if reset:
        layers.append([
            Instruction(RESET, tuple(z_anc), durations.t_reset),
            Instruction(DELAY, tuple(data), durations.t_reset),
        ])
    left, right = [], []
    for ch in z_checks:
        da, db = sorted(ch.support, key=lambda q: pos[q])
        left.append(cx(da, ch.measure_qubit))
        right.append(cx(db, ch.measure_qubit))
    layers.append(left)
    layers.append(right)
    layers.append([
        Instruction(MEASURE, tuple(z_anc), durations.t_meas),
        Instruction(DELAY, tuple(data), durations.t_meas),
    ])

    circ = Circuit(layers=layers, rounds=1,
                   metadata={"patch": patch.kind, "variant": "original",
                             "reset": reset, "data_qubits": tuple(data)})
    check_of_anc = {c.measure_qubit: c.id for c in patch.checks}
    x_check_of_anc = {c.measure_qubit: c.id for c in x_checks}
    records = []
    for q in x_step_measured:
        cid = x_check_of_anc.get(q)
        records.append(MeasurementRecord(
            index=len(records), qubit=q, round=1,
            kind="check" if cid is not None else "flag",
            check_id=cid, reset_before=reset))
    for q in z_anc:
        records.append(MeasurementRecord(
            index=len(records), qubit=q, round=1, kind="check",
            check_id=check_of_anc[q], reset_before=reset))
    circ.records = records
    circ.validate_layers()
    return circ


# ---------------------------------------------------------------------------
# full experiments


def assemble_experiment(patch: Patch, variant: str, reset: bool, basis: Basis,
                        rounds: int,
                        durations: DurationTable | None = None) -> Circuit:
    """Initialisation, ``rounds`` syndrome cycles, and transversal readout.

    Memory patches are prepared and read out in ``basis``; the stability
    patch is always run in Z.  Delay markers sit on data qubits during
    measurement and reset layers; the noise annotator keys idle channels
    off them.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if variant not in ("original", "improved"):
        raise ValueError(f"unknown variant {variant!r}")
    if variant == "original" and patch.kind != "memory":
        raise ValueError("two-step cycle is defined for memory patches only")
    if patch.kind == "stability" and basis is not Basis.Z:
        raise ValueError("stability experiments run in the Z basis")
    durations = durations or DurationTable()

    build = build_original_cycle if variant == "original" else build_improved_cycle
    cycle = build(patch, reset, durations)

    data = patch.data_qubits
    all_qubits = tuple(range(len(patch.qubits)))
    layers: list[list[Instruction]] = []
    layers.append([Instruction(RESET, all_qubits, durations.t_reset)])
    if basis is Basis.X:
        layers.append([Instruction(H, tuple(data), durations.t_1q)])

    records: list[MeasurementRecord] = []
    for r in range(1, rounds + 1):
        layers.extend(cycle.layers)
        seen_this_round: set[int] = set()
        for rec in cycle.records:
            first = rec.qubit not in seen_this_round
            seen_this_round.add(rec.qubit)
            records.append(MeasurementRecord(
                index=len(records), qubit=rec.qubit, round=r, kind=rec.kind,
                check_id=rec.check_id,
                reset_before=rec.reset_before or (r == 1 and first)))

    if basis is Basis.X:
        layers.append([Instruction(H, tuple(data), durations.t_1q)])
    anc = tuple(q.id for q in patch.qubits if q.role is not QubitRole.DATA)
    layers.append([Instruction(MEASURE, tuple(data), durations.t_meas),
                   Instruction(DELAY, anc, durations.t_meas)])
    for q in data:
        records.append(MeasurementRecord(
            index=len(records), qubit=q, round=rounds + 1, kind="data",
            check_id=None, reset_before=True))

    circ = Circuit(layers=layers, records=records, rounds=rounds,
                   metadata={"patch": patch.kind, "variant": variant,
                             "reset": reset, "basis": basis.value,
                             "data_qubits": tuple(data),
                             "prep_layers": (0,)})
    circ.validate_layers()
    return circ


# ---------------------------------------------------------------------------
# text format


def circuit_to_text(circ: Circuit) -> str:
    """Line-oriented serialization: one instruction per line, TICK between
    layers, rounds recorded in a comment header."""
    lines = [f"# rounds={circ.rounds}"]
    for k, layer in enumerate(circ.layers):
        if k:
            lines.append("TICK")
        for ins in layer:
            ids = " ".join(str(t) for t in ins.targets)
            if ins.op == DELAY:
                lines.append(f"DELAY {ins.duration:g} {ids}")
            else:
                lines.append(f"{ins.op} {ids}")
    return "\n".join(lines) + "\n"


def circuit_from_text(text: str,
                      durations: DurationTable | None = None) -> Circuit:
    durations = durations or DurationTable()
    layers: list[list[Instruction]] = [[]]
    rounds = 0
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "rounds=" in line:
                rounds = int(line.split("rounds=")[1].split()[0])
            continue
        if line == "TICK":
            layers.append([])
            continue
        parts = line.split()
        if parts[0] == "DELAY":
            targets = tuple(int(x) for x in parts[2:])
            layers[-1].append(Instruction(DELAY, targets, float(parts[1])))
        else:
            op = parts[0]
            targets = tuple(int(x) for x in parts[1:])
            if op == CX:
                for i in range(0, len(targets), 2):
                    layers[-1].append(
                        Instruction(CX, targets[i:i + 2], durations.of(op)))
            else:
                layers[-1].append(Instruction(op, targets, durations.of(op)))
    return Circuit(layers=[l for l in layers if l], rounds=rounds)
