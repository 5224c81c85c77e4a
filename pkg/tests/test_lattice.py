"""Patch construction: counts, commutation, distances, validation."""

import itertools

import numpy as np
import pytest

from hexqec.lattice import (Basis, ObservableKind, QubitRole, Stabilizer,
                            build_memory_patch, build_stability_patch,
                            patch_from_json, patch_to_json, validate_patch)


def symplectic_odd(a, b):
    return len(set(a) & set(b)) % 2 == 1


def gf2_rank(rows, n):
    mat = np.zeros((len(rows), n), dtype=np.uint8)
    for i, r in enumerate(rows):
        for q in r:
            mat[i, q] = 1
    r = 0
    for c in range(n):
        piv = next((i for i in range(r, len(rows)) if mat[i, c]), None)
        if piv is None:
            continue
        mat[[r, piv]] = mat[[piv, r]]
        for i in range(len(rows)):
            if i != r and mat[i, c]:
                mat[i] ^= mat[r]
        r += 1
    return r


def in_span(rows, vec, n):
    return gf2_rank(rows + [vec], n) == gf2_rank(rows, n)


@pytest.fixture(scope="module")
def mem3():
    return build_memory_patch(3)


@pytest.fixture(scope="module")
def stab_patch():
    return build_stability_patch()


class TestMemoryPatch:
    def test_rejects_bad_distance(self):
        for d in (1, 2, 4, 0, -3):
            with pytest.raises(ValueError):
                build_memory_patch(d)

    def test_d3_inventory(self, mem3):
        x_checks = mem3.checks_of(Basis.X)
        z_checks = mem3.checks_of(Basis.Z)
        assert len(x_checks) == 4
        assert sorted(c.weight for c in x_checks) == [2, 2, 4, 4]
        assert len(z_checks) == 6
        assert all(c.weight == 2 for c in z_checks)
        # two full-gap strip stabilizers and four Z stabilizers, two of them
        # bulk squares and two standalone boundary checks
        xs = [s for s in mem3.stabilizers if s.basis is Basis.X]
        zs = [s for s in mem3.stabilizers if s.basis is Basis.Z]
        assert len(xs) == 2 and len(zs) == 4
        assert sorted(len(s.comprising_checks) for s in xs) == [2, 2]
        assert sorted(len(s.comprising_checks) for s in zs) == [1, 1, 2, 2]

    def test_d3_qubit_count_matches_closed_form(self, mem3):
        # data d^2, one Z ancilla per horizontal edge, one measure qubit
        # per X check: (5 d^2 - 2 d - 1) / 2 in total
        assert len(mem3.qubits) == 19
        assert len(build_memory_patch(5).qubits) == 57

    def test_builders_validate_clean(self, mem3, stab_patch):
        assert validate_patch(mem3) == []
        assert validate_patch(build_memory_patch(5)) == []
        assert validate_patch(stab_patch) == []

    def test_stabilizers_commute_with_all_checks_exhaustive(self):
        for d in (3, 5):
            patch = build_memory_patch(d)
            for st in patch.stabilizers:
                supp = patch.stabilizer_support(st)
                for ch in patch.checks:
                    if ch.basis is not st.basis:
                        assert not symplectic_odd(supp, ch.support), \
                            f"d={d}: stabilizer {st.id} vs check {ch.id}"

    def test_logicals_anticommute_and_commute_with_checks(self, mem3):
        obs = {o.kind: o.support for o in mem3.observables}
        lx = obs[ObservableKind.LOGICAL_X]
        lz = obs[ObservableKind.LOGICAL_Z]
        assert symplectic_odd(lx, lz)
        for ch in mem3.checks_of(Basis.Z):
            assert not symplectic_odd(lx, ch.support)
        for ch in mem3.checks_of(Basis.X):
            assert not symplectic_odd(lz, ch.support)

    def test_d3_minimum_logical_weight_exactly_three(self, mem3):
        """Exhaustive search over Pauli supports up to weight 3."""
        data = mem3.data_qubits
        n = max(data) + 1
        z_checks = [c.support for c in mem3.checks_of(Basis.Z)]
        x_checks = [c.support for c in mem3.checks_of(Basis.X)]
        lz = next(o.support for o in mem3.observables
                  if o.kind is ObservableKind.LOGICAL_Z)
        lx = next(o.support for o in mem3.observables
                  if o.kind is ObservableKind.LOGICAL_X)

        def min_weight(other_checks, own_checks, logical):
            for w in range(1, 4):
                for comb in itertools.combinations(data, w):
                    if any(symplectic_odd(comb, c) for c in other_checks):
                        continue
                    if not symplectic_odd(comb, logical):
                        continue
                    return w
            return None

        # X-type operator flipping logical Z
        assert min_weight(z_checks, x_checks, lz) == 3
        # Z-type operator flipping logical X
        assert min_weight(x_checks, z_checks, lx) == 3

def test_d5_counts_by_independent_enumeration():
    """Re-derive d=5 inventory from the construction rules directly."""
    d = 5
    patch = build_memory_patch(d)
    # bricks: per gap, alternating columns; plus one boundary vertical each
    expected_bricks = sum(len(range(g % 2, d - 1, 2)) for g in range(d - 1))
    x_checks = patch.checks_of(Basis.X)
    assert sum(1 for c in x_checks if c.weight == 4) == expected_bricks
    assert sum(1 for c in x_checks if c.weight == 2) == d - 1
    assert len(patch.checks_of(Basis.Z)) == d * (d - 1)
    # strips: one per gap; squares: complement columns; boundary: brick-top
    xs = [s for s in patch.stabilizers if s.basis is Basis.X]
    zs = [s for s in patch.stabilizers if s.basis is Basis.Z]
    assert len(xs) == d - 1
    squares = sum(len(range(1 - g % 2, d - 1, 2)) for g in range(d - 1))
    boundary = len(range(0, d - 1, 2)) + len(range(1, d - 1, 2))
    assert len(zs) == squares + boundary
    # every X strip covers its two rows completely
    grid = {tuple(map(int, k.split(","))): v
            for k, v in patch.meta["data_grid"].items()}
    for g, st in enumerate(sorted(xs, key=lambda s: s.id)):
        supp = patch.stabilizer_support(st)
        rows = {g, g + 1}
        expect = {grid[(r, c)] for r in rows for c in range(d)}
        assert supp == expect


class TestStabilityPatch:
    def test_four_x_stabilizers(self, stab_patch):
        xs = [s for s in stab_patch.stabilizers if s.basis is Basis.X]
        assert len(xs) == 4
        weights = sorted(len(stab_patch.stabilizer_support(s)) for s in xs)
        assert weights == [2, 2, 5, 5]
        five_bodies = [s for s in xs
                       if len(stab_patch.stabilizer_support(s)) == 5]
        assert all(len(s.comprising_checks) == 2 for s in five_bodies)

    def test_double_coverage_and_constraint(self, stab_patch):
        cover = {q: 0 for q in stab_patch.data_qubits}
        for ch in stab_patch.checks_of(Basis.X):
            for q in ch.support:
                cover[q] += 1
        assert all(v == 2 for v in cover.values())
        cp = next(o for o in stab_patch.observables
                  if o.kind is ObservableKind.CHECK_PRODUCT)
        supp = set()
        for cid in cp.support:
            supp ^= set(stab_patch.checks[cid].support)
        assert supp == set()

    def test_z_checks_cover_all_data(self, stab_patch):
        zcover = set()
        for ch in stab_patch.checks_of(Basis.Z):
            zcover |= ch.support
        assert zcover == set(stab_patch.data_qubits)

    def test_constraint_commutes_with_every_check(self, stab_patch):
        cp = next(o for o in stab_patch.observables
                  if o.kind is ObservableKind.CHECK_PRODUCT)
        supp = set()
        for cid in cp.support:
            supp ^= set(stab_patch.checks[cid].support)
        for ch in stab_patch.checks:
            assert len(supp & ch.support) % 2 == 0


class TestValidatePatch:
    def test_deleted_check_from_stabilizer_is_reported(self, mem3):
        import copy
        broken = copy.deepcopy(mem3)
        st = next(s for s in broken.stabilizers
                  if s.basis is Basis.X and len(s.comprising_checks) == 2)
        smaller = frozenset(list(st.comprising_checks)[:1])
        broken.stabilizers[st.id] = Stabilizer(st.id, st.basis, smaller)
        msgs = validate_patch(broken)
        assert any(f"stabilizer {st.id}" in m for m in msgs)

    def test_truncated_logical_is_reported(self, mem3):
        import copy
        from hexqec.lattice import ObservableSpec
        broken = copy.deepcopy(mem3)
        for i, o in enumerate(broken.observables):
            if o.kind is ObservableKind.LOGICAL_Z:
                cut = frozenset(list(o.support)[:-1])
                broken.observables[i] = ObservableSpec(o.kind, cut)
        msgs = validate_patch(broken)
        assert any("logical" in m for m in msgs)

    def test_data_data_coupling_reported(self, mem3):
        import copy
        broken = copy.deepcopy(mem3)
        d0, d1 = broken.data_qubits[:2]
        broken.couplings.append((d0, d1))
        assert any("data-data" in m for m in validate_patch(broken))


def test_json_round_trip(mem3=None):
    patch = build_memory_patch(3)
    doc = patch_to_json(patch)
    back = patch_from_json(doc)
    assert back.distance == patch.distance
    assert len(back.qubits) == len(patch.qubits)
    assert [c.support for c in back.checks] == [c.support for c in patch.checks]
    assert [s.comprising_checks for s in back.stabilizers] == \
        [s.comprising_checks for s in patch.stabilizers]
    assert validate_patch(back) == []
    # ids dense from zero
    assert [q.id for q in back.qubits] == list(range(len(back.qubits)))
