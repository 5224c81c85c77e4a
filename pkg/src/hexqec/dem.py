"""Detector definitions and detector-error-model compilation.

Detectors are XORs of measurement records that are deterministic under zero
noise.  A check ancilla that is not reset between rounds accumulates its
parity, so the "fresh value" of a check is either one record (reset before)
or the XOR of two consecutive records of the same qubit; detector
definitions written over fresh values automatically produce the
two-rounds-prior comparisons of no-reset circuits.

Compilation enumerates every constituent single fault of every noise
channel, propagates each exactly through the noiseless circuit, aggregates
identical (detector set, observable) signatures, decomposes composite
signatures against the X/Z detector split, and emits a weighted matching
graph with one virtual boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import Circuit
from .frame import Seed, compile_program, sample, _MEAS
from .lattice import Basis, ObservableKind, Patch
from .noise import (DEP1, DEP2, IDLE, RECORD_FLIP, X_AFTER_RESET,
                    X_BEFORE_MEASURE, NoiseModel, NoisyCircuit, annotate)

BOUNDARY = -1


@dataclass(frozen=True)
class DetectorConvention:
    mode: str            # "reset" | "noreset"
    lookback: int = 1    # 2 for no-reset mid-circuit detectors

    def __post_init__(self):
        if self.mode not in ("reset", "noreset"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "noreset" and self.lookback != 2:
            raise ValueError("no-reset convention implies lookback 2")
        if self.mode == "reset" and self.lookback != 1:
            raise ValueError("reset convention implies lookback 1")


def convention_for(circuit: Circuit) -> DetectorConvention:
    if circuit.metadata.get("reset"):
        return DetectorConvention("reset", 1)
    return DetectorConvention("noreset", 2)


@dataclass(frozen=True)
class DetectorSpec:
    id: int
    records: frozenset[int]
    round: int
    stabilizer_id: int | None      # None for flag detectors
    basis: Basis                   # decomposition class
    kind: str                      # "stab" | "flag"


@dataclass(frozen=True)
class ObservableBinding:
    kind: ObservableKind
    records: frozenset[int]


@dataclass(frozen=True)
class FaultMechanism:
    id: int
    location: str
    probability: float
    detectors: frozenset[int]
    obs_flip: int


@dataclass(frozen=True)
class DemEdge:
    u: int                         # detector id or BOUNDARY
    v: int
    p: float
    obs_flip: int

    @property
    def weight(self) -> float:
        return math.log((1.0 - self.p) / self.p)


@dataclass
class DemGraph:
    n_detectors: int
    detectors: list[DetectorSpec]
    edges: list[DemEdge]
    mechanisms: list[FaultMechanism] = field(default_factory=list)
    hyper_remainder: list[tuple] = field(default_factory=list)

    def adjacency(self):
        adj: dict[int, list[tuple[int, float, int]]] = {}
        for e in self.edges:
            adj.setdefault(e.u, []).append((e.v, e.weight, e.obs_flip))
            adj.setdefault(e.v, []).append((e.u, e.weight, e.obs_flip))
        return adj


# ---------------------------------------------------------------------------
# detector definitions


def _fresh_values(circuit: Circuit):
    """Per record: the record set representing that measurement's new
    information (two records when the qubit was not reset in between)."""
    prev: dict[int, int] = {}
    fresh: dict[int, frozenset[int]] = {}
    for rec in circuit.records:
        if rec.reset_before or rec.qubit not in prev:
            fresh[rec.index] = frozenset([rec.index])
        else:
            fresh[rec.index] = frozenset([rec.index, prev[rec.qubit]])
        prev[rec.qubit] = rec.index
    return fresh


def define_detectors(circuit: Circuit, patch: Patch,
                     convention: DetectorConvention | None = None,
                     include_remnant_flags: bool = False):
    """Detector specs plus observable bindings for an assembled experiment.

    Stabilizer values are inferred as XORs of comprising-check fresh values;
    detectors compare consecutive rounds, with initialisation and final
    data-reconstruction detectors at the time boundaries.  First-round
    detectors exist only for stabilizers of the preparation basis.
    """
    expected = convention_for(circuit)
    if convention is None:
        convention = expected
    elif convention != expected:
        raise ValueError(
            f"convention {convention.mode} does not match circuit "
            f"(reset={circuit.metadata.get('reset')})")

    basis = Basis(circuit.metadata.get("basis", "Z"))
    rounds = circuit.rounds
    fresh = _fresh_values(circuit)

    check_fresh: dict[tuple[int, int], frozenset[int]] = {}
    flag_records = []
    data_record: dict[int, int] = {}
    for rec in circuit.records:
        if rec.kind == "check":
            check_fresh[(rec.check_id, rec.round)] = fresh[rec.index]
        elif rec.kind == "flag":
            flag_records.append(rec)
        elif rec.kind == "data":
            data_record[rec.qubit] = rec.index

    def stab_value(stab, r) -> frozenset[int]:
        out: frozenset[int] = frozenset()
        for cid in stab.comprising_checks:
            out ^= check_fresh[(cid, r)]
        return out

    def stab_recon(stab) -> frozenset[int]:
        return frozenset(data_record[q] for q in patch.stabilizer_support(stab))

    detectors: list[DetectorSpec] = []

    def add(records, rnd, stab_id, det_basis, kind="stab"):
        detectors.append(DetectorSpec(
            id=len(detectors), records=frozenset(records), round=rnd,
            stabilizer_id=stab_id, basis=det_basis, kind=kind))

    for stab in patch.stabilizers:
        first_round_det = stab.basis is basis
        final_det = stab.basis is basis
        if first_round_det:
            add(stab_value(stab, 1), 1, stab.id, stab.basis)
        for r in range(2, rounds + 1):
            add(stab_value(stab, r) ^ stab_value(stab, r - 1),
                r, stab.id, stab.basis)
        if final_det:
            add(stab_value(stab, rounds) ^ stab_recon(stab),
                rounds + 1, stab.id, stab.basis)

    variant = circuit.metadata.get("variant", "improved")
    if variant == "original" or include_remnant_flags:
        for rec in flag_records:
            add(fresh[rec.index], rec.round, None, Basis.Z, kind="flag")

    observables: list[ObservableBinding] = []
    if patch.kind == "memory":
        want = (ObservableKind.LOGICAL_Z if basis is Basis.Z
                else ObservableKind.LOGICAL_X)
        for obs in patch.observables:
            if obs.kind is want:
                observables.append(ObservableBinding(
                    obs.kind, frozenset(data_record[q] for q in obs.support)))
    else:
        for obs in patch.observables:
            if obs.kind is ObservableKind.CHECK_PRODUCT:
                recs: frozenset[int] = frozenset()
                for cid in obs.support:
                    recs ^= check_fresh[(cid, rounds)]
                observables.append(ObservableBinding(obs.kind, recs))
    return detectors, observables


# ---------------------------------------------------------------------------
# fault enumeration and propagation


def _enumerate_faults(noisy: NoisyCircuit):
    """Constituent single faults: (channel step position key, pauli spec, p).

    Pauli specs are tuples of (qubit, 'X'|'Z'|'Y') or ('rec', index).
    """
    faults = []
    for ci, ch in enumerate(noisy.channels):
        if ch.kind in (DEP1, IDLE):
            q = ch.targets[0]
            for pl in ("X", "Y", "Z"):
                faults.append((ci, ((q, pl),), 3.0))
        elif ch.kind == DEP2:
            a, b = ch.targets
            paulis = ["I", "X", "Y", "Z"]
            for k in range(1, 16):
                pa, pb = paulis[k // 4], paulis[k % 4]
                spec = tuple((q, pl) for q, pl in ((a, pa), (b, pb))
                             if pl != "I")
                faults.append((ci, spec, 15.0))
        elif ch.kind in (X_BEFORE_MEASURE, X_AFTER_RESET):
            faults.append((ci, ((ch.targets[0], "X"),), 1.0))
        elif ch.kind == RECORD_FLIP:
            faults.append((ci, (("rec", ch.record),), 1.0))
    return faults


def _propagate_all(noisy: NoisyCircuit, faults):
    """Vectorized single-fault propagation.

    Treats each fault as one lane of a packed frame simulation with its
    Pauli injected at the channel location; returns the record-flip matrix
    (n_records x n_faults) as booleans.
    """
    steps = compile_program(noisy)
    n_qubits = noisy.base.n_qubits
    n_records = sum(1 for s in steps if s[0] == _MEAS)
    nf = len(faults)
    from .frame import _G_CX, _G_H, _G_S, _RESET
    ordered = _ordered_channel_steps(noisy, steps)

    fx = np.zeros((n_qubits, nf), dtype=bool)
    fz = np.zeros((n_qubits, nf), dtype=bool)
    rec = np.zeros((n_records, nf), dtype=bool)

    inject_at: dict[int, list[tuple[tuple, int]]] = {}
    for fi, (ci, spec, _) in enumerate(faults):
        inject_at.setdefault(ordered[ci], []).append((spec, fi))

    for si, s in enumerate(steps):
        op = s[0]
        if op == _G_CX:
            _, c, t = s
            fx[t] ^= fx[c]
            fz[c] ^= fz[t]
        elif op == _G_H:
            q = s[1]
            tmp = fx[q].copy()
            fx[q] = fz[q]
            fz[q] = tmp
        elif op == _G_S:
            q = s[1]
            fz[q] ^= fx[q]
        elif op == _RESET:
            q = s[1]
            fx[q] = False
            fz[q] = False
        elif op == _MEAS:
            _, q, r = s
            rec[r] = fx[q]
        for spec, fi in inject_at.get(si, ()):
            for item in spec:
                if item[0] == "rec":
                    rec[item[1], fi] ^= True
                else:
                    q, pl = item
                    if pl in ("X", "Y"):
                        fx[q, fi] ^= True
                    if pl in ("Z", "Y"):
                        fz[q, fi] ^= True
    return rec


def _ordered_channel_steps(noisy: NoisyCircuit, steps) -> dict[int, int]:
    """Channel index -> step index after which its fault takes effect.

    Depolarizing and pre-measurement flips act before their instruction, so
    they bind to the preceding step boundary; record flips and post-reset
    flips bind after theirs.  Channels were compiled into the step stream in
    a deterministic order, so a single forward walk recovers the mapping.
    """
    from .frame import _C_DEP1, _C_DEP2, _C_RECFLIP, _C_XFLIP
    chan_kinds = {_C_DEP1, _C_DEP2, _C_RECFLIP, _C_XFLIP}
    order: dict[int, int] = {}
    # record flips are emitted inline with their measurement, everything
    # else per layer in channel order; mirror compile_program's walk
    chan_by_layer: dict[int, list[int]] = {}
    recflip_by_record: dict[int, list[int]] = {}
    for idx, ch in enumerate(noisy.channels):
        if ch.kind == RECORD_FLIP:
            recflip_by_record.setdefault(ch.record, []).append(idx)
        else:
            chan_by_layer.setdefault(ch.layer, []).append(idx)
    compiled_channel_steps = [si for si, s in enumerate(steps)
                              if s[0] in chan_kinds]
    emitted: list[int] = []
    rec = 0
    for k, layer in enumerate(noisy.base.layers):
        layer_chans = chan_by_layer.get(k, [])
        emitted.extend(
            i for i in layer_chans
            if noisy.channels[i].kind in (DEP1, IDLE, DEP2, X_BEFORE_MEASURE))
        from .circuit import MEASURE as _M
        for ins in layer:
            if ins.op == _M:
                for _ in ins.targets:
                    emitted.extend(recflip_by_record.get(rec, ()))
                    rec += 1
        emitted.extend(i for i in layer_chans
                       if noisy.channels[i].kind == X_AFTER_RESET)
    if len(emitted) != len(compiled_channel_steps):
        raise RuntimeError("channel/step alignment mismatch")
    for ci, si in zip(emitted, compiled_channel_steps):
        order[ci] = si
    return order


# ---------------------------------------------------------------------------
# graph assembly


@dataclass
class DemStructure:
    """Model-independent part of compilation: every constituent fault of
    every channel slot, propagated once.  Probabilities are reattached per
    noise model, so sweeps and fits recompile cheaply."""

    faults: list[tuple]               # (channel idx, pauli spec, divisor)
    signatures: list[tuple]           # (detector tuple, obs flip) per fault


def build_dem_structure(noisy: NoisyCircuit, detectors: list[DetectorSpec],
                        observables: list[ObservableBinding]) -> DemStructure:
    faults = _enumerate_faults(noisy)
    rec_flips = _propagate_all(noisy, faults)

    n_rec = rec_flips.shape[0]
    det_mat = np.zeros((len(detectors), n_rec), dtype=bool)
    for d in detectors:
        for r in d.records:
            det_mat[d.id, r] = True
    obs_mat = np.zeros((len(observables), n_rec), dtype=bool)
    for i, ob in enumerate(observables):
        for r in ob.records:
            obs_mat[i, r] = True

    det_flips = (det_mat.astype(np.uint8) @ rec_flips.astype(np.uint8)) % 2
    obs_flips = (obs_mat.astype(np.uint8) @ rec_flips.astype(np.uint8)) % 2
    signatures = []
    for fi in range(len(faults)):
        sig = tuple(int(x) for x in np.flatnonzero(det_flips[:, fi]))
        obs = int(obs_flips[:, fi].sum() % 2) if len(observables) else 0
        signatures.append((sig, obs))
    return DemStructure(faults=faults, signatures=signatures)


def compile_dem(noisy: NoisyCircuit, detectors: list[DetectorSpec],
                observables: list[ObservableBinding],
                check_determinism: bool = True,
                structure: DemStructure | None = None) -> DemGraph:
    """Build the weighted detector graph by single-fault enumeration.

    Signatures spanning more than one detector class (X, Z, flag) or more
    than two detectors are split into per-class parts; each part must
    itself be an existing at-most-two-detector edge, otherwise compilation
    fails.  Passing a prebuilt ``structure`` skips re-propagation when only
    the noise parameters changed.
    """
    if check_determinism:
        _assert_deterministic(noisy.base, detectors)
    if structure is None:
        structure = build_dem_structure(noisy, detectors, observables)

    merged: dict[tuple, float] = {}
    for (ci, _, div), key in zip(structure.faults, structure.signatures):
        p = noisy.channels[ci].p / div
        if p <= 0:
            continue
        sig, obs = key
        if not sig and not obs:
            continue
        q = merged.get(key, 0.0)
        merged[key] = q * (1 - p) + p * (1 - q)

    # decomposition classes: X stabilizers, Z stabilizers, flag detectors
    class_of = {d.id: ("flag" if d.kind == "flag" else d.basis.value)
                for d in detectors}
    graph_edges: dict[tuple, float] = {}
    composites: list[tuple[tuple, int, float]] = []
    for (sig, obs), p in sorted(merged.items()):
        mixed = len({class_of[d] for d in sig}) > 1
        if len(sig) <= 2 and not mixed:
            graph_edges[(sig, obs)] = _combine(graph_edges.get((sig, obs)), p)
        else:
            composites.append((sig, obs, p))

    hyper_remainder = []
    for sig, obs, p in composites:
        parts = {}
        for cls in ("X", "Z", "flag"):
            parts[cls] = tuple(d for d in sig if class_of[d] == cls)
        if any(len(part) > 2 for part in parts.values()):
            split = "/".join(f"{len(v)}{k}" for k, v in parts.items() if v)
            raise ValueError(
                f"undecomposable fault signature {sig} (split {split})")
        nonempty = [part for part in parts.values() if part]
        # the observable flip goes to the part that already exists as an
        # elementary edge with that flip; exact (signature, observable)
        # matches first, signature-only as a fallback
        done = False
        for exact in (True, False):
            for carrier in range(len(nonempty)):
                keys = [(part, obs if i == carrier else 0)
                        for i, part in enumerate(nonempty)]
                if all(_edge_known(graph_edges, k, exact) for k in keys):
                    for k in keys:
                        graph_edges[k] = _combine(graph_edges.get(k), p)
                    hyper_remainder.append((sig, obs, p, tuple(keys)))
                    done = True
                    break
            if done:
                break
        if not done:
            raise ValueError(
                f"composite fault {sig} has no matching graphlike parts")

    edges = []
    for (sig, obs), p in sorted(graph_edges.items()):
        if p <= 0:
            continue
        p = min(p, 0.5 - 1e-12)
        if len(sig) == 0:
            u = v = BOUNDARY
        elif len(sig) == 1:
            u, v = sig[0], BOUNDARY
        else:
            u, v = sig
        edges.append(DemEdge(u=u, v=v, p=p, obs_flip=obs))

    mechanisms = [FaultMechanism(
        id=i, location=f"fault{i}", probability=p,
        detectors=frozenset(sig), obs_flip=obs)
        for i, ((sig, obs), p) in enumerate(sorted(merged.items()))]

    return DemGraph(n_detectors=len(detectors), detectors=detectors,
                    edges=edges, mechanisms=mechanisms,
                    hyper_remainder=hyper_remainder)


def _edge_known(graph_edges, key, exact: bool = False) -> bool:
    sig, _ = key
    if len(sig) == 0:
        return True
    if exact:
        return key in graph_edges
    return any(k[0] == sig for k in graph_edges)


def _combine(q: float | None, p: float) -> float:
    if q is None:
        return p
    return q * (1 - p) + p * (1 - q)


def _assert_deterministic(circuit: Circuit, detectors,
                          shots: int = 64) -> None:
    """Zero-noise samples must produce no detection events."""
    noiseless = annotate(circuit, NoiseModel())
    batch = sample(noiseless, shots, Seed(0xDE7, 0))
    for d in detectors:
        if int(batch.xor_rows(d.records).sum()) != 0:
            raise ValueError(f"detector {d.id} fires under zero noise")


# ---------------------------------------------------------------------------
# fault distance


def fault_distance(graph: DemGraph, max_weight: int | None = None) -> float:
    """Minimum number of fault mechanisms with empty combined signature and
    an observable flip; exact, via integer programming over mechanism
    classes (even-parity slack per detector)."""
    from scipy.optimize import LinearConstraint, milp
    from scipy.sparse import lil_matrix

    classes = [(m.detectors, m.obs_flip) for m in graph.mechanisms]
    if not classes:
        return math.inf
    n = len(classes)
    dets = sorted({d for sig, _ in classes for d in sig})
    det_pos = {d: i for i, d in enumerate(dets)}
    nd = len(dets)

    a = lil_matrix((nd + 1, n + nd + 1))
    for j, (sig, obs) in enumerate(classes):
        for d in sig:
            a[det_pos[d], j] = 1
        a[nd, j] = obs
    for i in range(nd):
        a[i, n + i] = -2
    a[nd, n + nd] = -2
    lower = np.zeros(nd + 1)
    lower[nd] = 1
    upper = lower.copy()

    c = np.concatenate([np.ones(n), np.zeros(nd + 1)])
    integrality = np.ones(n + nd + 1)
    bounds_lo = np.zeros(n + nd + 1)
    bounds_hi = np.concatenate([np.ones(n), np.full(nd + 1, np.inf)])

    from scipy.optimize import Bounds
    res = milp(c=c,
               constraints=LinearConstraint(a.tocsr(), lower, upper),
               integrality=integrality,
               bounds=Bounds(bounds_lo, bounds_hi),
               options={"time_limit": 600})
    if not res.success:
        return math.inf
    return float(round(res.fun))


# ---------------------------------------------------------------------------
# text serialization


def dem_to_text(graph: DemGraph) -> str:
    lines = [f"# detectors={graph.n_detectors}"]
    for d in graph.detectors:
        stab = d.stabilizer_id if d.stabilizer_id is not None else "-"
        recs = " ".join(str(r) for r in sorted(d.records))
        lines.append(f"detector {d.id} {d.basis.value} {d.round} {stab} {recs}")
    for e in graph.edges:
        u = "B" if e.u == BOUNDARY else str(e.u)
        v = "B" if e.v == BOUNDARY else str(e.v)
        lines.append(f"edge {u} {v} {e.p:.12g} {e.obs_flip}")
    return "\n".join(lines) + "\n"


def dem_from_text(text: str) -> DemGraph:
    detectors: list[DetectorSpec] = []
    edges: list[DemEdge] = []
    n_det = 0
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            if "detectors=" in line:
                n_det = int(line.split("detectors=")[1])
            continue
        parts = line.split()
        if parts[0] == "detector":
            did = int(parts[1])
            basis = Basis(parts[2])
            rnd = int(parts[3])
            stab = None if parts[4] == "-" else int(parts[4])
            recs = frozenset(int(x) for x in parts[5:])
            detectors.append(DetectorSpec(did, recs, rnd, stab, basis,
                                          "stab" if stab is not None else "flag"))
        elif parts[0] == "edge":
            u = BOUNDARY if parts[1] == "B" else int(parts[1])
            v = BOUNDARY if parts[2] == "B" else int(parts[2])
            edges.append(DemEdge(u, v, float(parts[3]), int(parts[4])))
    return DemGraph(n_detectors=n_det, detectors=detectors, edges=edges)
