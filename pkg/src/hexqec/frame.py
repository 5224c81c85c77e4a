"""Bit-packed Pauli-frame Monte Carlo sampler.

Frames track per-qubit X and Z flips relative to the noiseless reference
execution, packed 64 shots per machine word.  Measurement records hold the
flip of each outcome relative to the reference; classical flips touch the
record only.  The RNG is counter-based (Philox) keyed by (seed, stream),
with a fixed shot-chunk size, so results are bit-identical for a given
(circuit, model, shots, seed) regardless of how work is partitioned.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .circuit import CX, DELAY, H, MEASURE, PAULI_X, PAULI_Z, RESET, S
from .noise import (DEP1, DEP2, IDLE, RECORD_FLIP, X_AFTER_RESET,
                    X_BEFORE_MEASURE, NoisyCircuit)
from .tableau import BitTableau

CHUNK_SHOTS = 4096
_MAGIC = b"HEXQFB01"


@dataclass(frozen=True)
class Seed:
    """Master seed plus a stream index for parallel substreams."""

    master: int
    stream: int = 0


# compiled step opcodes
_G_H, _G_S, _G_CX, _RESET, _MEAS = 0, 1, 2, 3, 4
_C_DEP1, _C_DEP2, _C_XFLIP, _C_RECFLIP = 5, 6, 7, 8


def compile_program(noisy: NoisyCircuit) -> list[tuple]:
    """Flatten circuit plus channels into an ordered step list.

    Within a layer: state channels first, then instructions (record flips
    ride directly after their measurement), then post-reset errors.
    """
    chan_by_layer: dict[int, list] = {}
    recflips: dict[int, list] = {}
    for ch in noisy.channels:
        if ch.kind == RECORD_FLIP:
            recflips.setdefault(ch.record, []).append(ch)
        else:
            chan_by_layer.setdefault(ch.layer, []).append(ch)

    steps: list[tuple] = []
    rec = 0
    for k, layer in enumerate(noisy.base.layers):
        chans = chan_by_layer.get(k, [])
        for c in chans:
            if c.kind in (DEP1, IDLE):
                steps.append((_C_DEP1, c.targets[0], c.p))
            elif c.kind == DEP2:
                steps.append((_C_DEP2, c.targets[0], c.targets[1], c.p))
            elif c.kind == X_BEFORE_MEASURE:
                steps.append((_C_XFLIP, c.targets[0], c.p))
        for ins in layer:
            if ins.op == H:
                for q in ins.targets:
                    steps.append((_G_H, q))
            elif ins.op == S:
                for q in ins.targets:
                    steps.append((_G_S, q))
            elif ins.op == CX:
                steps.append((_G_CX, ins.targets[0], ins.targets[1]))
            elif ins.op == RESET:
                for q in ins.targets:
                    steps.append((_RESET, q))
            elif ins.op == MEASURE:
                for q in ins.targets:
                    steps.append((_MEAS, q, rec))
                    for c in recflips.get(rec, ()):
                        steps.append((_C_RECFLIP, rec, c.p))
                    rec += 1
            elif ins.op in (PAULI_X, PAULI_Z, DELAY):
                pass  # deterministic Paulis and delays do not move the frame
        for c in chans:
            if c.kind == X_AFTER_RESET:
                steps.append((_C_XFLIP, c.targets[0], c.p))
    return steps


@dataclass
class FrameBatch:
    """Packed measurement-flip records: bit matrix (records x shots)."""

    shots: int
    flips: np.ndarray        # uint64, shape (n_records, n_words)

    @property
    def n_records(self) -> int:
        return self.flips.shape[0]

    def record_bits(self, index: int) -> np.ndarray:
        return _unpack(self.flips[index], self.shots)

    def xor_rows(self, rows) -> np.ndarray:
        """Packed XOR of a set of record rows (e.g. one detector)."""
        out = np.zeros(self.flips.shape[1], dtype=np.uint64)
        for r in rows:
            out ^= self.flips[r]
        return out

    def event_fractions(self) -> np.ndarray:
        return np.array([_popcount(self.flips[i]) / self.shots
                         for i in range(self.n_records)])

    def to_binary(self) -> bytes:
        buf = io.BytesIO()
        buf.write(_MAGIC)
        buf.write(np.uint32(self.n_records).tobytes())
        buf.write(np.uint64(self.shots).tobytes())
        buf.write(self.flips.tobytes())
        return buf.getvalue()

    @classmethod
    def from_binary(cls, blob: bytes) -> "FrameBatch":
        if blob[:8] != _MAGIC:
            raise ValueError("bad magic in packed record file")
        n_records = int(np.frombuffer(blob[8:12], dtype=np.uint32)[0])
        shots = int(np.frombuffer(blob[12:20], dtype=np.uint64)[0])
        words = (shots + 63) // 64
        flips = np.frombuffer(blob[20:], dtype=np.uint64).reshape(
            n_records, words).copy()
        return cls(shots=shots, flips=flips)

    def summary_csv(self) -> str:
        lines = ["record,events,fraction"]
        for i in range(self.n_records):
            ev = _popcount(self.flips[i])
            lines.append(f"{i},{ev},{ev / self.shots:.8g}")
        return "\n".join(lines) + "\n"


def _popcount(words: np.ndarray) -> int:
    return int(np.unpackbits(words.view(np.uint8)).sum())


def _unpack(words: np.ndarray, shots: int) -> np.ndarray:
    bits = np.unpackbits(words.view(np.uint8), bitorder="little")
    return bits[:shots].astype(bool)


def _pack(bools: np.ndarray) -> np.ndarray:
    return np.packbits(bools, bitorder="little").view(np.uint64)


def sample(noisy: NoisyCircuit, shots: int, seed: Seed) -> FrameBatch:
    """Draw ``shots`` Pauli-frame samples of a noisy circuit."""
    steps = compile_program(noisy)
    n_qubits = noisy.base.n_qubits
    n_records = sum(1 for s in steps if s[0] == _MEAS)

    n_chunks = (shots + CHUNK_SHOTS - 1) // CHUNK_SHOTS
    out_words: list[np.ndarray] = []
    for chunk in range(n_chunks):
        take = min(CHUNK_SHOTS, shots - chunk * CHUNK_SHOTS)
        rng = np.random.Generator(np.random.Philox(
            key=[seed.master, seed.stream], counter=[0, 0, chunk, 0]))
        out_words.append(_run_chunk(steps, n_qubits, n_records, rng)[:, :_w(take)])
    total_words = _w(shots)
    flips = np.zeros((n_records, total_words), dtype=np.uint64)
    col = 0
    for w in out_words:
        flips[:, col:col + w.shape[1]] = w
        col += w.shape[1]
    # mask padding bits beyond the final shot
    extra = total_words * 64 - shots
    if extra:
        mask = np.uint64((1 << (64 - extra)) - 1)
        flips[:, -1] &= mask
    return FrameBatch(shots=shots, flips=flips)


def _w(shots: int) -> int:
    return (shots + 63) // 64


def _random_words(rng, words: int) -> np.ndarray:
    hi = np.iinfo(np.uint64).max
    return rng.integers(0, hi, size=words, dtype=np.uint64, endpoint=True)


def _run_chunk(steps, n_qubits, n_records, rng) -> np.ndarray:
    words = CHUNK_SHOTS // 64
    fx = np.zeros((n_qubits, words), dtype=np.uint64)
    fz = np.zeros((n_qubits, words), dtype=np.uint64)
    rec = np.zeros((n_records, words), dtype=np.uint64)

    def bern(p) -> np.ndarray:
        if p <= 0.0:
            return np.zeros(words, dtype=np.uint64)
        return _pack(rng.random(CHUNK_SHOTS) < p)

    for s in steps:
        op = s[0]
        if op == _G_CX:
            _, c, t = s
            fx[t] ^= fx[c]
            fz[c] ^= fz[t]
        elif op == _C_DEP2:
            _, a, b, p = s
            if p > 0.0:
                u = rng.random(CHUNK_SHOTS)
                hit = u < p
                sub = np.minimum((u * (15 / p)).astype(np.int64), 14) + 1
                pa, pb = sub // 4, sub % 4
                fx[a] ^= _pack(hit & ((pa == 1) | (pa == 2)))
                fz[a] ^= _pack(hit & ((pa == 2) | (pa == 3)))
                fx[b] ^= _pack(hit & ((pb == 1) | (pb == 2)))
                fz[b] ^= _pack(hit & ((pb == 2) | (pb == 3)))
        elif op == _C_DEP1:
            _, q, p = s
            if p > 0.0:
                u = rng.random(CHUNK_SHOTS)
                hit = u < p
                sub = np.minimum((u * (3 / p)).astype(np.int64), 2)
                fx[q] ^= _pack(hit & (sub <= 1))
                fz[q] ^= _pack(hit & (sub >= 1))
        elif op == _C_XFLIP:
            _, q, p = s
            fx[q] ^= bern(p)
        elif op == _MEAS:
            _, q, r = s
            rec[r] = fx[q]
            # the collapsed state absorbs Z up to phase; a fresh random Z
            # component supplies the randomness of later anticommuting reads
            fz[q] = _random_words(rng, words)
        elif op == _C_RECFLIP:
            _, r, p = s
            rec[r] ^= bern(p)
        elif op == _RESET:
            _, q = s
            fx[q] = 0
            fz[q] = _random_words(rng, words)
        elif op == _G_H:
            q = s[1]
            fx[q], fz[q] = fz[q].copy(), fx[q].copy()
        elif op == _G_S:
            q = s[1]
            fz[q] ^= fx[q]
    return rec


def tableau_monte_carlo(noisy: NoisyCircuit, shots: int, seed: Seed,
                        reference: np.ndarray) -> FrameBatch:
    """Per-shot exact tableau sampling of the same compiled program.

    Slow path used as an independent oracle for the frame sampler: raw
    outcomes are XORed against the reference so both engines produce
    comparable flip records.
    """
    steps = compile_program(noisy)
    n_qubits = noisy.base.n_qubits
    n_records = sum(1 for s in steps if s[0] == _MEAS)
    flips = np.zeros((n_records, _w(shots)), dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=[seed.master, seed.stream]))
    tab = BitTableau(n_qubits)
    for shot in range(shots):
        tab.reset_all()
        bits = np.zeros(n_records, dtype=np.uint8)
        for s in steps:
            op = s[0]
            if op == _G_CX:
                tab.cx(s[1], s[2])
            elif op == _G_H:
                tab.h(s[1])
            elif op == _G_S:
                tab.s(s[1])
            elif op == _RESET:
                tab.reset_z(s[1])
            elif op == _MEAS:
                out, _ = tab.measure_z(s[1], forced=None, rng=rng)
                bits[s[2]] = out
            elif op == _C_DEP1:
                _, q, p = s
                u = rng.random()
                if u < p:
                    tab.apply_pauli(q, "XYZ"[int(u / p * 3) % 3])
            elif op == _C_DEP2:
                _, a, b, p = s
                u = rng.random()
                if u < p:
                    sub = min(int(u / p * 15), 14) + 1
                    pa, pb = sub // 4, sub % 4
                    if pa:
                        tab.apply_pauli(a, "_XYZ"[pa])
                    if pb:
                        tab.apply_pauli(b, "_XYZ"[pb])
            elif op == _C_XFLIP:
                _, q, p = s
                if rng.random() < p:
                    tab.px(q)
            elif op == _C_RECFLIP:
                _, r, p = s
                if rng.random() < p:
                    bits[r] ^= 1
        diff = bits ^ reference
        w, b = divmod(shot, 64)
        for r in np.flatnonzero(diff):
            flips[r, w] ^= np.uint64(1) << np.uint64(b)
    return FrameBatch(shots=shots, flips=flips)
