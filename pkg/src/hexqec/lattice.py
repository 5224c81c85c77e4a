"""Heavy-hex code patches: qubit layouts, checks, stabilizers, observables.

A patch is an abstract description of a heavy-hex subsystem code region:
data qubits on a square grid of odd distance d, weight-2 Z checks on
horizontal edges (measured by the edge ancilla), and X checks that are
weight-4 "bricks" in the bulk plus weight-2 vertical checks on the side
boundaries.  Stabilizers are products of checks: every row gap's X checks
multiply to a full two-row strip, and vertically opposite Z checks multiply
to squares (with a 2-body check standing alone on the top/bottom boundary).

The stability patch is a fixed 9-data-qubit region whose X checks cover
every data qubit exactly twice, so the product of all X-check outcomes is
constrained to +1.  Its row stabilizers are 5-body products of a pentagon
check and a vertical 2-body check.

Coordinates are abstract: data qubit (r, c) sits at (2c, 2r); ancillas at
the midpoints of the edges they serve.  No physical device indices appear.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable


class QubitRole(Enum):
    DATA = "Data"
    MEASURE_X = "MeasureX"
    MEASURE_Z = "MeasureZ"
    VIA = "Via"
    FLAG = "Flag"
    UNUSED = "Unused"


class Basis(Enum):
    X = "X"
    Z = "Z"


class ObservableKind(Enum):
    LOGICAL_X = "LogicalX"
    LOGICAL_Z = "LogicalZ"
    CHECK_PRODUCT = "CheckProductConstraint"


@dataclass(frozen=True)
class Qubit:
    id: int
    x: float
    y: float
    role: QubitRole


@dataclass(frozen=True)
class Check:
    """A directly measured multi-qubit Pauli operator of the code.

    ``support`` lists data qubit ids; ``measure_qubit`` is the ancilla that
    ends up holding the parity; ``via_qubits`` are the intermediate qubits
    used to route interactions (ordered as (via, targets...) groups are
    scheduled).  Weight is 2 or 4 for memory patches and 2 or 5 for the
    stability patch.
    """

    id: int
    basis: Basis
    support: frozenset[int]
    measure_qubit: int
    via_qubits: tuple[int, ...] = ()

    @property
    def weight(self) -> int:
        return len(self.support)


@dataclass(frozen=True)
class Stabilizer:
    id: int
    basis: Basis
    comprising_checks: frozenset[int]


@dataclass(frozen=True)
class ObservableSpec:
    kind: ObservableKind
    support: frozenset[int]  # data qubit ids, or check ids for CHECK_PRODUCT


@dataclass
class Patch:
    """Immutable description of a code patch.

    ``kind`` is "memory" or "stability".  Checks, stabilizers and
    observables reference qubits by dense integer id.
    """

    kind: str
    distance: int
    qubits: list[Qubit]
    couplings: list[tuple[int, int]]
    checks: list[Check]
    stabilizers: list[Stabilizer]
    observables: list[ObservableSpec]
    meta: dict = field(default_factory=dict)

    def qubit_role(self, qid: int) -> QubitRole:
        return self.qubits[qid].role

    @property
    def data_qubits(self) -> list[int]:
        return [q.id for q in self.qubits if q.role is QubitRole.DATA]

    @property
    def measure_qubits(self) -> list[int]:
        return [q.id for q in self.qubits
                if q.role in (QubitRole.MEASURE_X, QubitRole.MEASURE_Z)]

    def checks_of(self, basis: Basis) -> list[Check]:
        return [c for c in self.checks if c.basis is basis]

    def check_by_id(self, cid: int) -> Check:
        return self.checks[cid]

    def stabilizer_support(self, stab: Stabilizer) -> frozenset[int]:
        supp: set[int] = set()
        for cid in stab.comprising_checks:
            supp ^= set(self.checks[cid].support)
        return frozenset(supp)


# ---------------------------------------------------------------------------
# construction


def build_memory_patch(d: int) -> Patch:
    """Build a distance-d memory patch (one logical qubit).

    The layout generalizes the d=3 pattern by translation: row gap g holds
    weight-4 brick checks at columns (c, c+1) with c = g (mod 2) and one
    weight-2 vertical check on the leftover boundary column.  Z checks sit
    on every horizontal edge.  Qubit counts follow (5*d*d - 2*d - 1)/2.
    """
    if d < 3 or d % 2 == 0:
        raise ValueError(f"distance must be odd and >= 3, got {d}")

    qubits: list[Qubit] = []
    couplings: list[tuple[int, int]] = []

    def add_qubit(x: float, y: float, role: QubitRole) -> int:
        qid = len(qubits)
        qubits.append(Qubit(qid, x, y, role))
        return qid

    data: dict[tuple[int, int], int] = {}
    for r in range(d):
        for c in range(d):
            data[(r, c)] = add_qubit(2 * c, 2 * r, QubitRole.DATA)

    # Z ancilla on every horizontal edge; doubles as the routing via for the
    # brick above/below it.
    hanc: dict[tuple[int, int], int] = {}
    for r in range(d):
        for c in range(d - 1):
            qid = add_qubit(2 * c + 1, 2 * r, QubitRole.MEASURE_Z)
            hanc[(r, c)] = qid
            couplings.append((data[(r, c)], qid))
            couplings.append((qid, data[(r, c + 1)]))

    checks: list[Check] = []

    def add_check(basis, support, measure, vias=()):
        cid = len(checks)
        checks.append(Check(cid, basis, frozenset(support), measure, tuple(vias)))
        return cid

    # X sector: bricks + boundary verticals, one stabilizer strip per gap
    strip_members: list[list[int]] = []
    for g in range(d - 1):
        members: list[int] = []
        brick_cols = range(g % 2, d - 1, 2)
        for c in brick_cols:
            m = add_qubit(2 * c + 1, 2 * g + 1, QubitRole.MEASURE_X)
            couplings.append((hanc[(g, c)], m))
            couplings.append((m, hanc[(g + 1, c)]))
            members.append(add_check(
                Basis.X,
                [data[(g, c)], data[(g, c + 1)],
                 data[(g + 1, c)], data[(g + 1, c + 1)]],
                m,
                vias=[hanc[(g, c)], hanc[(g + 1, c)]],
            ))
        vc = d - 1 if g % 2 == 0 else 0
        v = add_qubit(2 * vc, 2 * g + 1, QubitRole.MEASURE_X)
        couplings.append((data[(g, vc)], v))
        couplings.append((v, data[(g + 1, vc)]))
        members.append(add_check(Basis.X, [data[(g, vc)], data[(g + 1, vc)]], v))
        strip_members.append(members)

    # Z sector: one check per horizontal edge
    zcheck: dict[tuple[int, int], int] = {}
    for r in range(d):
        for c in range(d - 1):
            zcheck[(r, c)] = add_check(
                Basis.Z, [data[(r, c)], data[(r, c + 1)]], hanc[(r, c)])

    stabilizers: list[Stabilizer] = []

    def add_stab(basis, cids):
        sid = len(stabilizers)
        stabilizers.append(Stabilizer(sid, basis, frozenset(cids)))
        return sid

    for g in range(d - 1):
        add_stab(Basis.X, strip_members[g])
    # bulk Z squares: vertically opposite edge checks at non-brick columns
    for g in range(d - 1):
        for c in range(1 - g % 2, d - 1, 2):
            add_stab(Basis.Z, [zcheck[(g, c)], zcheck[(g + 1, c)]])
    # boundary Z checks standing alone over top-gap / under bottom-gap bricks
    for c in range(0, d - 1, 2):
        add_stab(Basis.Z, [zcheck[(0, c)]])
    for c in range(1, d - 1, 2):
        add_stab(Basis.Z, [zcheck[(d - 1, c)]])

    observables = [
        ObservableSpec(ObservableKind.LOGICAL_X,
                       frozenset(data[(0, c)] for c in range(d))),
        ObservableSpec(ObservableKind.LOGICAL_Z,
                       frozenset(data[(r, 0)] for r in range(d))),
    ]

    return Patch(
        kind="memory",
        distance=d,
        qubits=qubits,
        couplings=couplings,
        checks=checks,
        stabilizers=stabilizers,
        observables=observables,
        meta={"data_grid": {f"{r},{c}": q for (r, c), q in data.items()}},
    )


def build_stability_patch() -> Patch:
    """Build the fixed stability patch.

    Nine data qubits on a 3x3 grid.  X checks: a 2-body check at the top and
    bottom, and in each row gap a pentagon (weight 5) paired with a vertical
    2-body check on the right boundary.  Every data qubit sits in exactly two
    X checks, so the product of all X checks acts as identity and the product
    of their outcomes is the +1 constraint read out by the experiment.
    """
    qubits: list[Qubit] = []
    couplings: list[tuple[int, int]] = []

    def add_qubit(x, y, role):
        qid = len(qubits)
        qubits.append(Qubit(qid, x, y, role))
        return qid

    data = {(r, c): add_qubit(2 * c, 2 * r, QubitRole.DATA)
            for r in range(3) for c in range(3)}

    hanc = {}
    for (r, c) in [(0, 0), (1, 0), (1, 1), (2, 0)]:
        qid = add_qubit(2 * c + 1, 2 * r, QubitRole.MEASURE_Z)
        hanc[(r, c)] = qid
        couplings.append((data[(r, c)], qid))
        couplings.append((qid, data[(r, c + 1)]))
    # long-range Z check tying the right-column corners together
    zl = add_qubit(4.6, 2.0, QubitRole.MEASURE_Z)
    couplings.append((data[(0, 2)], zl))
    couplings.append((data[(2, 2)], zl))

    checks: list[Check] = []

    def add_check(basis, support, measure, vias=()):
        cid = len(checks)
        checks.append(Check(cid, basis, frozenset(support), measure, tuple(vias)))
        return cid

    # top/bottom 2-body X checks with direct data couplings
    mt = add_qubit(1, -1, QubitRole.MEASURE_X)
    couplings.append((data[(0, 0)], mt))
    couplings.append((mt, data[(0, 1)]))
    td = add_check(Basis.X, [data[(0, 0)], data[(0, 1)]], mt)
    mb = add_qubit(1, 5, QubitRole.MEASURE_X)
    couplings.append((data[(2, 0)], mb))
    couplings.append((mb, data[(2, 1)]))
    bd = add_check(Basis.X, [data[(2, 0)], data[(2, 1)]], mb)

    # gap 0: pentagon over row 0 plus the left pair of row 1; vertical pair right
    h01 = add_qubit(3, 0, QubitRole.VIA)
    couplings.append((data[(0, 1)], h01))
    couplings.append((h01, data[(0, 2)]))
    m0 = add_qubit(2, 1, QubitRole.MEASURE_X)
    couplings.append((m0, hanc[(0, 0)]))
    couplings.append((m0, h01))
    couplings.append((m0, hanc[(1, 0)]))
    w5a = add_check(
        Basis.X,
        [data[(0, 0)], data[(0, 1)], data[(0, 2)], data[(1, 0)], data[(1, 1)]],
        m0, vias=[hanc[(0, 0)], h01, hanc[(1, 0)]])
    v0 = add_qubit(4, 1, QubitRole.MEASURE_X)
    couplings.append((data[(0, 2)], v0))
    couplings.append((v0, data[(1, 2)]))
    va = add_check(Basis.X, [data[(0, 2)], data[(1, 2)]], v0)

    # gap 1: mirrored; the row-1 edge already serves the gap-0 pentagon, so
    # this pentagon routes through a second via on that edge
    h10b = add_qubit(1.4, 2, QubitRole.VIA)
    couplings.append((data[(1, 0)], h10b))
    couplings.append((h10b, data[(1, 1)]))
    h21 = add_qubit(3, 4, QubitRole.VIA)
    couplings.append((data[(2, 1)], h21))
    couplings.append((h21, data[(2, 2)]))
    m1 = add_qubit(2, 3, QubitRole.MEASURE_X)
    couplings.append((m1, h10b))
    couplings.append((m1, h21))
    couplings.append((m1, hanc[(2, 0)]))
    w5b = add_check(
        Basis.X,
        [data[(1, 0)], data[(1, 1)], data[(2, 0)], data[(2, 1)], data[(2, 2)]],
        m1, vias=[h10b, h21, hanc[(2, 0)]])
    v1 = add_qubit(4, 3, QubitRole.MEASURE_X)
    couplings.append((data[(1, 2)], v1))
    couplings.append((v1, data[(2, 2)]))
    vb = add_check(Basis.X, [data[(1, 2)], data[(2, 2)]], v1)

    z_h = {}
    for (r, c), anc in hanc.items():
        z_h[(r, c)] = add_check(Basis.Z, [data[(r, c)], data[(r, c + 1)]], anc)
    z_long = add_check(Basis.Z, [data[(0, 2)], data[(2, 2)]], zl)

    stabilizers: list[Stabilizer] = []

    def add_stab(basis, cids):
        sid = len(stabilizers)
        stabilizers.append(Stabilizer(sid, basis, frozenset(cids)))
        return sid

    add_stab(Basis.X, [td])
    add_stab(Basis.X, [w5a, va])     # 5-body row product
    add_stab(Basis.X, [w5b, vb])     # 5-body row product
    add_stab(Basis.X, [bd])
    add_stab(Basis.Z, [z_h[(0, 0)]])
    add_stab(Basis.Z, [z_h[(1, 0)]])
    add_stab(Basis.Z, [z_h[(2, 0)]])
    add_stab(Basis.Z, [z_h[(1, 1)], z_long])

    observables = [
        ObservableSpec(ObservableKind.CHECK_PRODUCT,
                       frozenset([td, w5a, va, w5b, vb, bd])),
    ]

    return Patch(
        kind="stability",
        distance=3,
        qubits=qubits,
        couplings=couplings,
        checks=checks,
        stabilizers=stabilizers,
        observables=observables,
        meta={"data_grid": {f"{r},{c}": q for (r, c), q in data.items()}},
    )


# ---------------------------------------------------------------------------
# validation


def _symplectic_overlap(a: Iterable[int], b: Iterable[int]) -> int:
    return len(set(a) & set(b))


def validate_patch(patch: Patch) -> list[str]:
    """Check every patch invariant; return one message per violation.

    Violations are data, not exceptions: the builders are expected to return
    clean patches, and mutated patches produce a descriptive list.
    """
    out: list[str] = []
    n = len(patch.qubits)
    for i, q in enumerate(patch.qubits):
        if q.id != i:
            out.append(f"qubit ids not dense at index {i}")

    deg: dict[int, int] = {}
    for a, b in patch.couplings:
        deg[a] = deg.get(a, 0) + 1
        deg[b] = deg.get(b, 0) + 1
        ra, rb = patch.qubits[a].role, patch.qubits[b].role
        if ra is QubitRole.DATA and rb is QubitRole.DATA:
            out.append(f"data-data coupling ({a}, {b})")
    for qid, dg in deg.items():
        if dg > 3:
            out.append(f"qubit {qid} has degree {dg} > 3")

    data_set = set(patch.data_qubits)
    for ch in patch.checks:
        if not ch.support <= data_set:
            out.append(f"check {ch.id} supported outside data qubits")
        if ch.basis is Basis.Z and ch.weight != 2:
            out.append(f"Z check {ch.id} has weight {ch.weight} != 2")
        if ch.basis is Basis.X and ch.weight not in (2, 4, 5):
            out.append(f"X check {ch.id} has weight {ch.weight}")
        if patch.kind == "memory" and ch.basis is Basis.X and ch.weight == 5:
            out.append(f"memory X check {ch.id} has weight 5")

    # every stabilizer commutes with every check (even symplectic product)
    for st in patch.stabilizers:
        supp = patch.stabilizer_support(st)
        for ch in patch.checks:
            if ch.basis is st.basis:
                continue
            if _symplectic_overlap(supp, ch.support) % 2:
                out.append(
                    f"stabilizer {st.id} anticommutes with check {ch.id}")

    if patch.kind == "memory":
        logs = {o.kind: o.support for o in patch.observables}
        lx = logs.get(ObservableKind.LOGICAL_X)
        lz = logs.get(ObservableKind.LOGICAL_Z)
        if lx is None or lz is None:
            out.append("memory patch missing logical observables")
        else:
            if _symplectic_overlap(lx, lz) % 2 == 0:
                out.append("logical X and Z do not anticommute")
            for ch in patch.checks_of(Basis.Z):
                if _symplectic_overlap(lx, ch.support) % 2:
                    out.append(f"logical X anticommutes with Z check {ch.id}")
            for ch in patch.checks_of(Basis.X):
                if _symplectic_overlap(lz, ch.support) % 2:
                    out.append(f"logical Z anticommutes with X check {ch.id}")

    if patch.kind == "stability":
        cover: dict[int, int] = {q: 0 for q in data_set}
        for ch in patch.checks_of(Basis.X):
            for q in ch.support:
                cover[q] += 1
        for q, cnt in cover.items():
            if cnt != 2:
                out.append(f"data qubit {q} lies in {cnt} X checks, want 2")
        zcover = set()
        for ch in patch.checks_of(Basis.Z):
            zcover |= ch.support
        if zcover != data_set:
            out.append("Z checks do not cover all data qubits")
        cp = [o for o in patch.observables
              if o.kind is ObservableKind.CHECK_PRODUCT]
        if not cp:
            out.append("stability patch missing check-product observable")
        else:
            supp: set[int] = set()
            for cid in cp[0].support:
                supp ^= set(patch.checks[cid].support)
            if supp:
                out.append("check-product observable is not identity on data")

    return out


# ---------------------------------------------------------------------------
# serialization


def patch_to_json(patch: Patch) -> str:
    doc = {
        "kind": patch.kind,
        "distance": patch.distance,
        "qubits": [{"id": q.id, "x": q.x, "y": q.y, "role": q.role.value}
                   for q in patch.qubits],
        "couplings": [list(c) for c in patch.couplings],
        "checks": [{
            "id": c.id,
            "basis": c.basis.value,
            "support": sorted(c.support),
            "measure_qubit": c.measure_qubit,
            "via_qubits": list(c.via_qubits),
        } for c in patch.checks],
        "stabilizers": [{
            "id": s.id,
            "basis": s.basis.value,
            "comprising_checks": sorted(s.comprising_checks),
        } for s in patch.stabilizers],
        "observables": [{
            "kind": o.kind.value,
            "support": sorted(o.support),
        } for o in patch.observables],
    }
    return json.dumps(doc, indent=2)


def patch_from_json(text: str) -> Patch:
    doc = json.loads(text)
    qubits = [Qubit(q["id"], q["x"], q["y"], QubitRole(q["role"]))
              for q in doc["qubits"]]
    checks = [Check(c["id"], Basis(c["basis"]), frozenset(c["support"]),
                    c["measure_qubit"], tuple(c["via_qubits"]))
              for c in doc["checks"]]
    stabs = [Stabilizer(s["id"], Basis(s["basis"]),
                        frozenset(s["comprising_checks"]))
             for s in doc["stabilizers"]]
    obs = [ObservableSpec(ObservableKind(o["kind"]), frozenset(o["support"]))
           for o in doc["observables"]]
    return Patch(
        kind=doc["kind"],
        distance=doc["distance"],
        qubits=qubits,
        couplings=[tuple(c) for c in doc["couplings"]],
        checks=checks,
        stabilizers=stabs,
        observables=obs,
    )
