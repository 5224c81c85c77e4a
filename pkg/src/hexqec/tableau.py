"""Exact stabilizer-tableau simulation (reference oracle).

Standard binary-symplectic tableau with destabilizer rows; measurement of a
stabilized observable is deterministic, otherwise uniformly random.  The
reference run resolves every nondeterministic outcome to +1 (bit 0) so that
reference outcomes are reproducible; detector definitions are XORs, so the
convention cancels.
"""

from __future__ import annotations

import numpy as np

from .circuit import CX, DELAY, H, MEASURE, PAULI_X, PAULI_Z, RESET, S, Circuit


class Tableau:
    """Aaronson-Gottesman tableau for n qubits, initialised to |0...0>."""

    def __init__(self, n: int):
        self.n = n
        self.x = np.zeros((2 * n, n), dtype=bool)
        self.z = np.zeros((2 * n, n), dtype=bool)
        self.r = np.zeros(2 * n, dtype=bool)
        self.x[:n, :] = np.eye(n, dtype=bool)       # destabilizers X_i
        self.z[n:, :] = np.eye(n, dtype=bool)       # stabilizers Z_i

    # -- gates ------------------------------------------------------------

    def h(self, q: int) -> None:
        self.r ^= self.x[:, q] & self.z[:, q]
        self.x[:, q], self.z[:, q] = self.z[:, q].copy(), self.x[:, q].copy()

    def s(self, q: int) -> None:
        self.r ^= self.x[:, q] & self.z[:, q]
        self.z[:, q] ^= self.x[:, q]

    def px(self, q: int) -> None:
        self.r ^= self.z[:, q]

    def pz(self, q: int) -> None:
        self.r ^= self.x[:, q]

    def cx(self, c: int, t: int) -> None:
        self.r ^= self.x[:, c] & self.z[:, t] & (self.x[:, t] ^ self.z[:, c] ^ True)
        self.x[:, t] ^= self.x[:, c]
        self.z[:, c] ^= self.z[:, t]

    def apply_pauli(self, q: int, pauli: str) -> None:
        if pauli == "X":
            self.px(q)
        elif pauli == "Z":
            self.pz(q)
        elif pauli == "Y":
            self.px(q)
            self.pz(q)
        else:
            raise ValueError(f"unknown Pauli {pauli!r}")

    # -- row algebra --------------------------------------------------------

    def _g_sum(self, i: int, j: int) -> int:
        """Phase exponent contribution (mod 4) of multiplying row j into i."""
        x1, z1 = self.x[j], self.z[j]
        x2, z2 = self.x[i], self.z[i]
        x1i, z1i = x1.astype(np.int8), z1.astype(np.int8)
        x2i, z2i = x2.astype(np.int8), z2.astype(np.int8)
        g = np.zeros(self.n, dtype=np.int8)
        y1 = x1 & z1
        only_x = x1 & ~z1
        only_z = ~x1 & z1
        g[y1] = (z2i - x2i)[y1]
        g[only_x] = (z2i * (2 * x2i - 1))[only_x]
        g[only_z] = (x2i * (1 - 2 * z2i))[only_z]
        return int(g.sum())

    def _rowmult(self, i: int, j: int) -> None:
        """Row i <- row j * row i (Pauli product with phase tracking)."""
        phase = 2 * int(self.r[i]) + 2 * int(self.r[j]) + self._g_sum(i, j)
        self.r[i] = (phase % 4) // 2
        self.x[i] ^= self.x[j]
        self.z[i] ^= self.z[j]

    # -- measurement --------------------------------------------------------

    def measure_z(self, q: int, forced: int | None = 0,
                  rng: np.random.Generator | None = None) -> tuple[int, bool]:
        """Measure Z on qubit q.

        Returns (outcome, deterministic).  Nondeterministic outcomes take
        ``forced`` when given, else a draw from ``rng``.
        """
        n = self.n
        stab_x = self.x[n:, q]
        ps = np.flatnonzero(stab_x)
        if len(ps):
            p = n + int(ps[0])
            for i in np.flatnonzero(self.x[:, q]):
                if int(i) != p:
                    self._rowmult(int(i), p)
            # old stabilizer row becomes the destabilizer
            self.x[p - n] = self.x[p].copy()
            self.z[p - n] = self.z[p].copy()
            self.r[p - n] = self.r[p]
            self.x[p] = False
            self.z[p] = False
            self.z[p, q] = True
            if forced is not None:
                out = forced
            else:
                out = int(rng.integers(0, 2))
            self.r[p] = bool(out)
            return out, False
        # deterministic: accumulate stabilizer rows indicated by destabilizers
        sx = np.zeros(self.n, dtype=bool)
        sz = np.zeros(self.n, dtype=bool)
        sr = 0
        for i in np.flatnonzero(self.x[:n, q]):
            j = n + int(i)
            phase = 2 * sr + 2 * int(self.r[j])
            x1, z1 = self.x[j], self.z[j]
            x1i, z1i = x1.astype(np.int8), z1.astype(np.int8)
            sxi, szi = sx.astype(np.int8), sz.astype(np.int8)
            g = np.zeros(self.n, dtype=np.int8)
            y1 = x1 & z1
            only_x = x1 & ~z1
            only_z = ~x1 & z1
            g[y1] = (szi - sxi)[y1]
            g[only_x] = (szi * (2 * sxi - 1))[only_x]
            g[only_z] = (sxi * (1 - 2 * szi))[only_z]
            phase += int(g.sum())
            sr = (phase % 4) // 2
            sx ^= x1
            sz ^= z1
        return int(sr), True

    def reset_z(self, q: int) -> None:
        out, _ = self.measure_z(q, forced=0)
        if out:
            self.px(q)

    # -- inspection -----------------------------------------------------------

    def stabilizer_matrix(self) -> np.ndarray:
        """Stabilizer rows as a (n, 2n) binary matrix [X | Z]."""
        return np.hstack([self.x[self.n:], self.z[self.n:]]).astype(np.uint8)

    def equals(self, other: "Tableau") -> bool:
        """Tableau equivalence: identical stabilizer groups with signs.

        Canonicalizes both stabilizer sets by Gaussian elimination over
        GF(2) with phase tracking, then compares.
        """
        return _canonical_stabilizers(self) == _canonical_stabilizers(other)


def _canonical_stabilizers(tab: Tableau):
    n = tab.n
    rows = []
    for i in range(n, 2 * n):
        rows.append((tab.x[i].copy(), tab.z[i].copy(), bool(tab.r[i])))

    def mult(a, b):
        (x1, z1, r1), (x2, z2, r2) = a, b
        x1i, z1i = x1.astype(np.int8), z1.astype(np.int8)
        x2i, z2i = x2.astype(np.int8), z2.astype(np.int8)
        g = np.zeros(n, dtype=np.int8)
        y = x2 & z2
        ox = x2 & ~z2
        oz = ~x2 & z2
        g[y] = (z1i - x1i)[y]
        g[ox] = (z1i * (2 * x1i - 1))[ox]
        g[oz] = (x1i * (1 - 2 * z1i))[oz]
        phase = 2 * int(r1) + 2 * int(r2) + int(g.sum())
        return (x1 ^ x2, z1 ^ z2, bool((phase % 4) // 2))

    pivots = []
    for col in range(2 * n):
        def bit(row):
            x, z, _ = row
            return x[col] if col < n else z[col - n]
        piv = None
        for k, row in enumerate(rows):
            if k in [p for p, _ in pivots]:
                continue
            if bit(row):
                piv = k
                break
        if piv is None:
            continue
        for k in range(len(rows)):
            if k != piv and bit(rows[k]):
                rows[k] = mult(rows[k], rows[piv])
        pivots.append((piv, col))
    canon = sorted((tuple(x.tolist()), tuple(z.tolist()), r)
                   for x, z, r in rows)
    return canon


def reference_run(circuit: Circuit):
    """Noiseless execution of a circuit.

    Returns (reference bits, per-record determinism flags, final tableau).
    Nondeterministic outcomes resolve to 0 so the reference is reproducible.
    """
    tab = Tableau(circuit.n_qubits)
    bits: list[int] = []
    determ: list[bool] = []
    for _, ins in circuit.instructions():
        if ins.op == RESET:
            for q in ins.targets:
                tab.reset_z(q)
        elif ins.op == H:
            for q in ins.targets:
                tab.h(q)
        elif ins.op == S:
            for q in ins.targets:
                tab.s(q)
        elif ins.op == PAULI_X:
            for q in ins.targets:
                tab.px(q)
        elif ins.op == PAULI_Z:
            for q in ins.targets:
                tab.pz(q)
        elif ins.op == CX:
            tab.cx(*ins.targets)
        elif ins.op == MEASURE:
            for q in ins.targets:
                out, det = tab.measure_z(q, forced=0)
                bits.append(out)
                determ.append(det)
        elif ins.op == DELAY:
            pass
        else:
            raise ValueError(f"unsupported opcode {ins.op!r}")
    return np.array(bits, dtype=np.uint8), np.array(determ, dtype=bool), tab


class BitTableau:
    """Column-major tableau with row bitmasks packed into integers.

    Same semantics as ``Tableau`` but an order of magnitude faster for the
    Monte Carlo oracle: every gate is a handful of integer bit operations
    over all 2n rows at once.
    """

    def __init__(self, n: int):
        self.n = n
        self.x = [1 << q for q in range(n)]            # destabilizer X_q
        self.z = [1 << (n + q) for q in range(n)]      # stabilizer Z_q
        self.r = 0
        self.mask = (1 << (2 * n)) - 1

    def reset_all(self) -> None:
        n = self.n
        for q in range(n):
            self.x[q] = 1 << q
            self.z[q] = 1 << (n + q)
        self.r = 0

    def h(self, q: int) -> None:
        self.r ^= self.x[q] & self.z[q]
        self.x[q], self.z[q] = self.z[q], self.x[q]

    def s(self, q: int) -> None:
        self.r ^= self.x[q] & self.z[q]
        self.z[q] ^= self.x[q]

    def px(self, q: int) -> None:
        self.r ^= self.z[q]

    def pz(self, q: int) -> None:
        self.r ^= self.x[q]

    def cx(self, c: int, t: int) -> None:
        self.r ^= self.x[c] & self.z[t] & (~(self.x[t] ^ self.z[c]) & self.mask)
        self.x[t] ^= self.x[c]
        self.z[c] ^= self.z[t]

    def apply_pauli(self, q: int, pauli: str) -> None:
        if pauli in ("X", "Y"):
            self.px(q)
        if pauli in ("Z", "Y"):
            self.pz(q)

    def _rowmult(self, i: int, j: int) -> None:
        """Row i <- row j * row i with exact phase accounting."""
        g = 0
        bi, bj = 1 << i, 1 << j
        for q in range(self.n):
            xq, zq = self.x[q], self.z[q]
            x1 = 1 if xq & bj else 0
            z1 = 1 if zq & bj else 0
            if x1 or z1:
                x2 = 1 if xq & bi else 0
                z2 = 1 if zq & bi else 0
                if x1 and z1:
                    g += z2 - x2
                elif x1:
                    g += z2 * (2 * x2 - 1)
                else:
                    g += x2 * (1 - 2 * z2)
                if x1:
                    self.x[q] ^= bi
                if z1:
                    self.z[q] ^= bi
        ri = 1 if self.r & bi else 0
        rj = 1 if self.r & bj else 0
        phase = (2 * ri + 2 * rj + g) % 4
        if (phase // 2) != ri:
            self.r ^= bi

    def measure_z(self, q: int, forced=None, rng=None) -> tuple[int, bool]:
        n = self.n
        stab_bits = self.x[q] >> n
        if stab_bits:
            p = n + (stab_bits & -stab_bits).bit_length() - 1
            bp = 1 << p
            others = self.x[q] & ~bp
            while others:
                low = others & -others
                others ^= low
                self._rowmult(low.bit_length() - 1, p)
            dst = p - n
            bd = 1 << dst
            for qq in range(n):
                if self.x[qq] & bp:
                    self.x[qq] |= bd
                else:
                    self.x[qq] &= ~bd
                self.x[qq] &= ~bp
                if self.z[qq] & bp:
                    self.z[qq] |= bd
                else:
                    self.z[qq] &= ~bd
                self.z[qq] &= ~bp
            if self.r & bp:
                self.r |= bd
            else:
                self.r &= ~bd
            self.z[q] |= bp
            out = forced if forced is not None else int(rng.integers(0, 2))
            if out:
                self.r |= bp
            else:
                self.r &= ~bp
            return out, False
        # deterministic: accumulate indicated stabilizer rows into scratch
        sx = sz = 0
        sr = 0
        g = 0
        dest_bits = self.x[q] & ((1 << n) - 1)
        while dest_bits:
            low = dest_bits & -dest_bits
            dest_bits ^= low
            j = n + low.bit_length() - 1
            bj = 1 << j
            for qq in range(n):
                x1 = 1 if self.x[qq] & bj else 0
                z1 = 1 if self.z[qq] & bj else 0
                if x1 or z1:
                    bq = 1 << qq
                    x2 = 1 if sx & bq else 0
                    z2 = 1 if sz & bq else 0
                    if x1 and z1:
                        g += z2 - x2
                    elif x1:
                        g += z2 * (2 * x2 - 1)
                    else:
                        g += x2 * (1 - 2 * z2)
                    if x1:
                        sx ^= bq
                    if z1:
                        sz ^= bq
            rj = 1 if self.r & bj else 0
            phase = (2 * sr + 2 * rj + g) % 4
            sr = phase // 2
            g = 0
        return sr, True

    def reset_z(self, q: int) -> None:
        out, _ = self.measure_z(q, forced=0)
        if out:
            self.px(q)
