"""Exact minimum-weight perfect matching on the detector graph.

Shortest-path distances between detectors (and to the virtual boundary) are
precomputed on a parity-doubled graph so each pair distance carries the
observable flip of its minimizing path.  Per shot, detection events are
split into clusters that provably cannot interact in an optimal matching
(pairing across clusters is never cheaper than sending both events to the
boundary), and each cluster is solved exactly by dynamic programming over
subsets, with a branch-and-bound fallback for oversized clusters.  Ties are
broken by fixed iteration order, so decoding is deterministic.
"""

from __future__ import annotations

import heapq
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dem import BOUNDARY, DemGraph

DEFAULT_WORKERS: int | None = None   # None: one thread per CPU (capped)

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:          # pragma: no cover - exercised on bare installs
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        if args and callable(args[0]):
            return args[0]
        return wrap


@dataclass
class Matching:
    pairs: list[tuple[int, int]]        # (event, event) or (event, BOUNDARY)
    total_weight: float
    obs_flip: int


class MatchingDecoder:
    """Holds the all-pairs shortest-path tables for one detector graph."""

    def __init__(self, graph: DemGraph):
        self.graph = graph
        self.n = graph.n_detectors
        self.dist, self.obs = _all_pairs(graph)

    def boundary_distance(self, d: int) -> float:
        return self.dist[d, self.n]

    def match(self, events: list[int]) -> Matching:
        return match(events, self.dist, self.obs, self.n)

    def decode_batch(self, det_bits: np.ndarray,
                     workers: int | None = None) -> np.ndarray:
        """Per-shot observable corrections for unpacked detector bits.

        ``det_bits`` has shape (n_detectors, shots); no shots are discarded.
        Shots are independent, so slices run on a thread pool (the compiled
        kernel releases the GIL); results do not depend on ``workers``.
        """
        if det_bits.shape[0] != self.n:
            raise ValueError(
                f"detector layout mismatch: {det_bits.shape[0]} rows for "
                f"{self.n} detectors")
        shots = det_bits.shape[1]
        corr = np.zeros(shots, dtype=np.uint8)
        overflow = np.zeros(shots, dtype=np.uint8)
        det_bits = np.ascontiguousarray(det_bits, dtype=np.uint8)
        if workers is None:
            workers = DEFAULT_WORKERS or min(os.cpu_count() or 1, 8)
        if _HAVE_NUMBA and workers > 1 and shots >= 4096:
            bounds = np.linspace(0, shots, workers + 1, dtype=int)
            slices = [(np.ascontiguousarray(det_bits[:, a:b]),
                       corr[a:b], overflow[a:b])
                      for a, b in zip(bounds, bounds[1:]) if b > a]
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(
                    lambda sl: _decode_kernel(sl[0], self.dist, self.obs,
                                              sl[1], sl[2]), slices))
        else:
            _decode_kernel(det_bits, self.dist, self.obs, corr, overflow)
        for s in np.flatnonzero(overflow):
            events = [int(d) for d in np.flatnonzero(det_bits[:, s])]
            corr[s] = self.match(events).obs_flip
        return corr


def all_pairs_paths(graph: DemGraph, events: list[int] | None = None):
    """Distance matrix and path observable parities.

    Returns (dist, obs) over detector ids with one extra trailing row and
    column for the boundary.  With ``events`` given, rows and columns are
    restricted to the event set (boundary column kept last).
    """
    dist, obs = _all_pairs(graph)
    if events is None:
        return dist, obs
    idx = list(events) + [graph.n_detectors]
    sub = np.ix_(idx, idx)
    d, o = dist[sub], obs[sub]
    if not np.isfinite(d[:-1, :]).all():
        bad = [events[i] for i in range(len(events))
               if not np.isfinite(d[i]).all()]
        raise ValueError(f"events unreachable from boundary/graph: {bad}")
    return d, o


def _all_pairs(graph: DemGraph):
    """Dijkstra from every node on the parity-doubled graph."""
    n = graph.n_detectors
    b = n                                   # boundary index
    adj: list[list[tuple[int, float, int]]] = [[] for _ in range(n + 1)]
    for e in graph.edges:
        u = b if e.u == BOUNDARY else e.u
        v = b if e.v == BOUNDARY else e.v
        if u == v:
            continue
        adj[u].append((v, e.weight, e.obs_flip))
        adj[v].append((u, e.weight, e.obs_flip))

    dist = np.full((n + 1, n + 1), np.inf)
    obs = np.zeros((n + 1, n + 1), dtype=np.uint8)
    for src in range(n + 1):
        d = np.full((n + 1, 2), np.inf)
        d[src, 0] = 0.0
        heap = [(0.0, src, 0)]
        while heap:
            du, u, par = heapq.heappop(heap)
            if du > d[u, par]:
                continue
            for v, w, of in adj[u]:
                np_ = par ^ of
                nd = du + w
                if nd < d[v, np_] - 1e-15:
                    d[v, np_] = nd
                    heapq.heappush(heap, (nd, v, np_))
        best = np.argmin(d, axis=1)
        dist[src] = d[np.arange(n + 1), best]
        obs[src] = best.astype(np.uint8)
    return dist, obs


def match(events: list[int], dist: np.ndarray, obs: np.ndarray,
          boundary_index: int) -> Matching:
    """Exact minimum-weight matching of an event set against full tables."""
    k = len(events)
    if k == 0:
        return Matching([], 0.0, 0)
    b = boundary_index
    local_d = np.empty((k, k))
    local_o = np.empty((k, k), dtype=np.uint8)
    bnd = np.empty(k)
    bnd_o = np.empty(k, dtype=np.uint8)
    for i, e in enumerate(events):
        bnd[i] = dist[e, b]
        bnd_o[i] = obs[e, b]
        for j, f in enumerate(events):
            local_d[i, j] = dist[e, f]
            local_o[i, j] = obs[e, f]
    total, flips, pairs = _match_cluster_set(
        list(range(k)), local_d, local_o, bnd, bnd_o)
    named = [(events[i], events[j] if j >= 0 else BOUNDARY) for i, j in pairs]
    return Matching(named, total, flips)


def _match_cluster_set(idxs, d, o, bnd, bnd_o):
    """Cluster decomposition + exact per-cluster matching (python path)."""
    k = len(idxs)
    parent = list(range(k))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(k):
        for j in range(i + 1, k):
            if d[i, j] < bnd[i] + bnd[j] - 1e-12:
                parent[find(i)] = find(j)
    clusters: dict[int, list[int]] = {}
    for i in range(k):
        clusters.setdefault(find(i), []).append(i)

    total = 0.0
    flips = 0
    pairs: list[tuple[int, int]] = []
    for members in clusters.values():
        kc = len(members)
        if kc <= 22:
            w, fl, ps = _dp_match(members, d, o, bnd, bnd_o)
        else:
            w, fl, ps = _bb_match(members, d, o, bnd, bnd_o)
        total += w
        flips ^= fl
        pairs.extend(ps)
    return total, flips, pairs


def _dp_match(members, d, o, bnd, bnd_o):
    kc = len(members)
    full = (1 << kc) - 1
    f = np.full(1 << kc, np.inf)
    choice = np.full(1 << kc, 255, dtype=np.int16)
    f[0] = 0.0
    for mask in range(1, full + 1):
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        best = f[rest] + bnd[members[i]]
        pick = -1
        m = rest
        while m:
            j = (m & -m).bit_length() - 1
            m &= m - 1
            cand = f[rest & ~(1 << j)] + d[members[i], members[j]]
            if cand < best - 1e-15:
                best = cand
                pick = j
        f[mask] = best
        choice[mask] = pick
    # reconstruct
    flips = 0
    pairs = []
    mask = full
    while mask:
        i = (mask & -mask).bit_length() - 1
        pick = choice[mask]
        if pick < 0:
            flips ^= int(bnd_o[members[i]])
            pairs.append((members[i], -1))
            mask &= ~(1 << i)
        else:
            flips ^= int(o[members[i], members[pick]])
            pairs.append((members[i], members[pick]))
            mask &= ~((1 << i) | (1 << int(pick)))
    return float(f[full]), flips, pairs


def _bb_match(members, d, o, bnd, bnd_o):
    """Exact branch-and-bound for clusters too large for subset DP.

    Prunes with an admissible bound: each unresolved event must pay at
    least half its cheapest pairing or its full boundary cost, whichever
    is smaller.
    """
    kc = len(members)
    half_min = np.empty(kc)
    for i in range(kc):
        cheapest_pair = min((d[members[i], members[j]]
                             for j in range(kc) if j != i), default=math.inf)
        half_min[i] = 0.5 * min(2 * bnd[members[i]], cheapest_pair)

    best = [math.inf, 0, []]

    def rec(remaining, acc, flips, pairs):
        if not remaining:
            if acc < best[0]:
                best[0], best[1], best[2] = acc, flips, list(pairs)
            return
        lb = acc + sum(half_min[i] for i in remaining)
        if lb >= best[0]:
            return
        i = remaining[0]
        rest = remaining[1:]
        options = [(bnd[members[i]], -1)]
        options += [(d[members[i], members[j]], j) for j in rest]
        options.sort()
        for cost, j in options:
            if j == -1:
                rec(rest, acc + cost, flips ^ int(bnd_o[members[i]]),
                    pairs + [(members[i], -1)])
            else:
                nxt = tuple(x for x in rest if x != j)
                rec(nxt, acc + cost,
                    flips ^ int(o[members[i], members[j]]),
                    pairs + [(members[i], members[j])])

    # seed with the all-boundary matching as an upper bound
    seed_w = sum(bnd[members[i]] for i in range(kc))
    seed_f = 0
    for i in range(kc):
        seed_f ^= int(bnd_o[members[i]])
    best[0] = seed_w + 1e-12
    best[1] = seed_f
    best[2] = [(members[i], -1) for i in range(kc)]
    rec(tuple(range(kc)), 0.0, 0, [])
    return best[0], best[1], best[2]


# ---------------------------------------------------------------------------
# batched kernel


_DEBRUIJN = np.uint64(0x03F79D71B4CB0A89)
_TZ_TABLE = np.zeros(64, dtype=np.int64)
with np.errstate(over="ignore"):        # uint64 wraparound is the point
    for _i in range(64):
        _TZ_TABLE[(np.uint64(1 << _i) * _DEBRUIJN) >> np.uint64(58)] = _i


@njit(cache=True, nogil=True)
def _decode_kernel_jit(det_bits, dist, obs, corr, overflow,
                       tz_table):   # pragma: no cover
    n_det, shots = det_bits.shape
    b = dist.shape[0] - 1
    max_ev = 128
    events = np.empty(max_ev, dtype=np.int64)
    parent = np.empty(max_ev, dtype=np.int64)
    members = np.empty(max_ev, dtype=np.int64)
    f = np.empty(1 << 22, dtype=np.float64)
    choice = np.empty(1 << 22, dtype=np.int16)
    debruijn = np.uint64(0x03F79D71B4CB0A89)
    s58 = np.uint64(58)
    for s in range(shots):
        k = 0
        bad = False
        for dd in range(n_det):
            if det_bits[dd, s]:
                if k >= max_ev:
                    bad = True
                    break
                events[k] = dd
                k += 1
        if bad:
            overflow[s] = 1
            continue
        if k == 0:
            corr[s] = 0
            continue
        for i in range(k):
            parent[i] = i
        for i in range(k):
            for j in range(i + 1, k):
                if dist[events[i], events[j]] < \
                        dist[events[i], b] + dist[events[j], b] - 1e-12:
                    ri = i
                    while parent[ri] != ri:
                        ri = parent[ri]
                    rj = j
                    while parent[rj] != rj:
                        rj = parent[rj]
                    if ri != rj:
                        parent[ri] = rj
        flips = 0
        failed = False
        for root in range(k):
            r2 = root
            while parent[r2] != r2:
                r2 = parent[r2]
            if r2 != root:
                continue
            kc = 0
            for i in range(k):
                ri = i
                while parent[ri] != ri:
                    ri = parent[ri]
                if ri == root:
                    members[kc] = events[i]
                    kc += 1
            if kc > 22:
                failed = True
                break
            if kc == 1:
                flips ^= obs[members[0], b]
                continue
            if kc == 2:
                d01 = dist[members[0], members[1]]
                dbb = dist[members[0], b] + dist[members[1], b]
                if d01 < dbb - 1e-15:
                    flips ^= obs[members[0], members[1]]
                else:
                    flips ^= obs[members[0], b] ^ obs[members[1], b]
                continue
            full = (1 << kc) - 1
            f[0] = 0.0
            for mask in range(1, full + 1):
                low = np.uint64(mask & (-mask))
                i = tz_table[(low * debruijn) >> s58]
                rest = mask & ~(1 << i)
                best = f[rest] + dist[members[i], b]
                pick = -1
                m = rest
                while m:
                    lowj = np.uint64(m & (-m))
                    j = tz_table[(lowj * debruijn) >> s58]
                    m &= m - 1
                    cand = f[rest & ~(1 << j)] + dist[members[i], members[j]]
                    if cand < best - 1e-15:
                        best = cand
                        pick = j
                f[mask] = best
                choice[mask] = pick
            mask = full
            while mask:
                low = np.uint64(mask & (-mask))
                i = tz_table[(low * debruijn) >> s58]
                pick = choice[mask]
                if pick < 0:
                    flips ^= obs[members[i], b]
                    mask &= ~(1 << i)
                else:
                    flips ^= obs[members[i], members[pick]]
                    mask &= ~((1 << i) | (1 << pick))
        if failed:
            overflow[s] = 1
        else:
            corr[s] = flips & 1
    return corr


def _decode_kernel(det_bits, dist, obs, corr, overflow):
    if _HAVE_NUMBA:
        _decode_kernel_jit(det_bits, dist, obs, corr, overflow, _TZ_TABLE)
        return
    n_det, shots = det_bits.shape
    b = dist.shape[0] - 1
    for s in range(shots):
        events = [int(x) for x in np.flatnonzero(det_bits[:, s])]
        if not events:
            continue
        k = len(events)
        local_d = dist[np.ix_(events, events)]
        local_o = obs[np.ix_(events, events)]
        bnd = dist[events, b]
        bnd_o = obs[events, b]
        _, flips, _ = _match_cluster_set(list(range(k)), local_d, local_o,
                                         bnd, bnd_o)
        corr[s] = flips & 1


def decode_batch(graph: DemGraph, det_bits: np.ndarray) -> np.ndarray:
    """One-call decoding: build tables for ``graph`` and decode all shots."""
    return MatchingDecoder(graph).decode_batch(det_bits)


def decode_summary_csv(shots: int, failures: int) -> str:
    rate = failures / shots if shots else 0.0
    stderr = math.sqrt(max(rate * (1 - rate), 1e-300) / shots) if shots else 0.0
    return ("shots,failures,rate,stderr\n"
            f"{shots},{failures},{rate:.8g},{stderr:.8g}\n")
