"""Acceptance suite: every exit criterion at its stated tolerance.

Each test prints one PASS/FAIL line.  The full module is slow (tens of
minutes); run it with `pytest tests/test_acceptance.py -v -s`.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import chi2, chi2_contingency

from hexqec.circuit import (DurationTable, assemble_experiment,
                            build_improved_cycle, build_original_cycle,
                            cancel_adjacent_gates, decompose_nn_cx)
from hexqec.decoder import MatchingDecoder
from hexqec.dem import compile_dem, define_detectors, fault_distance
from hexqec.density import QubitParams, idle_decay_factor
from hexqec.experiments import (derive_seed, fit_noise_model, run_memory,
                                run_point, run_stability, run_sweep)
from hexqec.frame import Seed, sample, tableau_monte_carlo
from hexqec.lattice import Basis, build_memory_patch, build_stability_patch
from hexqec.noise import NoiseModel, annotate, default_fitted_model
from hexqec.rb import (fit_rb, gen_midcircuit_rb, gen_simultaneous_rb,
                       midcircuit_cycle_prediction, run_sequences,
                       correlation_analysis)
from hexqec.tableau import Tableau, reference_run


def report(name, ok, detail=""):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def mem3():
    return build_memory_patch(3)


@pytest.fixture(scope="module")
def fitted():
    return default_fitted_model()


def _experiment_arrays(patch, variant, reset, basis, t, model, shots, seed,
                       cache={}):
    key = (patch.kind, variant, reset, basis.value, t, model)
    if key not in cache:
        circ = assemble_experiment(patch, variant, reset, basis, t)
        dets, obs = define_detectors(circ, patch)
        noisy = annotate(circ, model)
        graph = compile_dem(noisy, dets, obs, check_determinism=False)
        cache[key] = (dets, obs, noisy, MatchingDecoder(graph))
    dets, obs, noisy, dec = cache[key]
    batch = sample(noisy, shots, Seed(seed))
    bits = np.zeros((len(dets), shots), dtype=np.uint8)
    for d in dets:
        bits[d.id] = np.unpackbits(batch.xor_rows(d.records).view(np.uint8),
                                   bitorder="little")[:shots]
    actual = np.unpackbits(batch.xor_rows(obs[0].records).view(np.uint8),
                           bitorder="little")[:shots]
    return dets, bits, actual, dec


class TestCircuitLevel:
    def test_circuit_determinism(self, mem3):
        """Every detector deterministic-0 under zero noise, t in 1..3,
        both cycle variants (tableau check)."""
        t0 = time.time()
        quiet = NoiseModel()
        worst = 0
        for variant, reset in (("improved", False), ("improved", True),
                               ("original", True)):
            for t in (1, 2, 3):
                circ = assemble_experiment(mem3, variant, reset, Basis.Z, t)
                dets, obs = define_detectors(circ, mem3)
                ref, _, _ = reference_run(circ)
                batch = tableau_monte_carlo(annotate(circ, quiet), 48,
                                            Seed(17, t), ref)
                for d in dets:
                    worst = max(worst, int(batch.xor_rows(d.records).sum()))
        report("circuit determinism", worst == 0,
               f"max detector events {worst} over 9 configs "
               f"({time.time()-t0:.1f}s)")

    def test_circuit_identities(self, mem3):
        """Routed CNOT equals ideal CX tableau action on 1000 random
        stabilizer states; the plaquette cancels to ten unitary layers."""
        t0 = time.time()
        rng = np.random.default_rng(2024)
        bad = 0
        for _ in range(1000):
            direct, routed = Tableau(3), Tableau(3)
            for _ in range(20):
                k = int(rng.integers(0, 4))
                if k == 0:
                    q = int(rng.integers(0, 3))
                    direct.h(q), routed.h(q)
                elif k == 1:
                    q = int(rng.integers(0, 3))
                    direct.s(q), routed.s(q)
                else:
                    a, b = rng.choice(3, size=2, replace=False)
                    direct.cx(int(a), int(b)), routed.cx(int(a), int(b))
            direct.cx(0, 2)
            for g in decompose_nn_cx(0, 1, 2):
                routed.cx(*g.targets)
            if not direct.equals(routed):
                bad += 1
        layers = build_improved_cycle(mem3, False).unitary_layer_count()
        report("circuit identities", bad == 0 and layers == 10,
               f"{bad}/1000 mismatches; {layers} unitary layers "
               f"({time.time()-t0:.1f}s)")

    def test_durations(self, mem3):
        dt = DurationTable()
        orig = build_original_cycle(mem3, True, dt).total_duration()
        imp_nr = build_improved_cycle(mem3, False, dt).total_duration()
        imp_r = build_improved_cycle(mem3, True, dt).total_duration()
        ok = (orig, imp_nr, imp_r) == (11100.0, 3200.0, 5400.0)
        report("durations", ok, f"{orig:g}/{imp_nr:g}/{imp_r:g} ns")

    def test_fault_distance(self, mem3, fitted):
        t0 = time.time()
        circ = assemble_experiment(mem3, "improved", False, Basis.Z, 3)
        dets, obs = define_detectors(circ, mem3)
        graph = compile_dem(annotate(circ, fitted), dets, obs,
                            check_determinism=False)
        d_mem = fault_distance(graph)

        stab = build_stability_patch()
        pairs = []
        for t in (4, 6, 8):
            dists = {}
            for reset in (True, False):
                c = assemble_experiment(stab, "improved", reset, Basis.Z, t)
                ds, ob = define_detectors(c, stab)
                g = compile_dem(annotate(c, fitted), ds, ob,
                                check_determinism=False)
                dists[reset] = fault_distance(g)
            pairs.append((t, dists[True], dists[False]))
        halved = all(nr == math.ceil(r / 2) for _, r, nr in pairs)
        report("fault distance", d_mem == 3 and halved,
               f"memory={d_mem}; stability (t, reset, noreset)={pairs} "
               f"({time.time()-t0:.0f}s)")


class TestEngines:
    def test_sampler_oracle_equivalence(self, mem3, fitted):
        """Frame vs tableau Monte Carlo detector distributions, one round,
        1e5 shots, combined chi-square p > 0.01."""
        t0 = time.time()
        shots = 10**5
        circ = assemble_experiment(mem3, "improved", False, Basis.Z, 1)
        dets, _ = define_detectors(circ, mem3)
        noisy = annotate(circ, fitted)
        ref, _, _ = reference_run(circ)
        fast = sample(noisy, shots, Seed(31))
        slow = tableau_monte_carlo(noisy, shots, Seed(32), ref)
        stat = 0.0
        dof = 0
        for d in dets:
            a = int(np.unpackbits(fast.xor_rows(d.records)
                                  .view(np.uint8)).sum())
            b = int(np.unpackbits(slow.xor_rows(d.records)
                                  .view(np.uint8)).sum())
            table = np.array([[a, shots - a], [b, shots - b]])
            if table.min() < 5:
                continue
            s, _, _, _ = chi2_contingency(table)
            stat += s
            dof += 1
        pval = 1 - chi2.cdf(stat, dof)
        report("sampler/oracle equivalence", pval > 0.01,
               f"chi2={stat:.1f} dof={dof} p={pval:.3f} "
               f"({time.time()-t0:.0f}s)")

    def test_decoder_exactness(self):
        """Matching weight equals brute-force pairing enumeration on 500
        random instances with up to 16 events."""
        from hexqec.dem import BOUNDARY, DemEdge, DemGraph, DetectorSpec
        t0 = time.time()
        rng = np.random.default_rng(88)
        mismatches = 0
        for trial in range(25):
            n = 24
            dets = [DetectorSpec(i, frozenset([i]), 1, 0, Basis.Z, "stab")
                    for i in range(n)]
            edges = []
            for i in range(1, n):
                j = int(rng.integers(0, i))
                edges.append(DemEdge(i, j, float(rng.uniform(0.01, 0.4)),
                                     int(rng.integers(0, 2))))
            for _ in range(40):
                a, b = rng.choice(n, size=2, replace=False)
                edges.append(DemEdge(int(a), int(b),
                                     float(rng.uniform(0.01, 0.4)),
                                     int(rng.integers(0, 2))))
            for _ in range(5):
                edges.append(DemEdge(int(rng.integers(0, n)), BOUNDARY,
                                     float(rng.uniform(0.01, 0.4)),
                                     int(rng.integers(0, 2))))
            dec = MatchingDecoder(DemGraph(n, dets, edges))
            for _ in range(20):
                k = int(rng.integers(1, 17))
                events = sorted(rng.choice(n, size=k,
                                           replace=False).tolist())
                got = dec.match(events)
                want_w, want_f = _brute_force(events, dec.dist, dec.obs, n)
                if abs(got.total_weight - want_w) > 1e-9 or \
                        got.obs_flip != want_f:
                    mismatches += 1
        report("decoder exactness", mismatches == 0,
               f"{mismatches}/500 mismatches ({time.time()-t0:.0f}s)")


def _brute_force(events, dist, obs, b):
    best = [math.inf, 0]

    def rec(remaining, acc, flips):
        if acc >= best[0]:
            return
        if not remaining:
            best[0], best[1] = acc, flips
            return
        i = remaining[0]
        rest = remaining[1:]
        options = [(dist[i, b], -1, obs[i, b])]
        for k, j in enumerate(rest):
            options.append((dist[i, j], k, obs[i, j]))
        options.sort(key=lambda o: o[0])
        for cost, k, of in options:
            if k < 0:
                rec(rest, acc + cost, flips ^ int(of))
            else:
                rec(rest[:k] + rest[k + 1:], acc + cost, flips ^ int(of))

    rec(tuple(events), 0.0, 0)
    return best[0], best[1]


class TestReproduction:
    def test_memory_reproduction(self, mem3, fitted):
        """Improved no-reset per-round fidelity 0.96 +/- 0.01 in Z and
        0.97 +/- 0.01 in X at 1e5 shots per t over t=1..12; the two-step
        circuit stays below 0.90."""
        t0 = time.time()
        shots = 10**5
        ts = list(range(1, 13))
        z = run_memory(mem3, "improved", False, Basis.Z, ts, fitted, shots,
                       seed=4001)
        x = run_memory(mem3, "improved", False, Basis.X, ts, fitted, shots,
                       seed=4002)
        o = run_memory(mem3, "original", True, Basis.Z, list(range(1, 9)),
                       fitted, 20000, seed=4003)
        fz, fx, fo = (z.per_round_fidelity, x.per_round_fidelity,
                      o.per_round_fidelity)
        ok = (abs(fz - 0.96) <= 0.01 and abs(fx - 0.97) <= 0.01
              and fo < 0.90)
        report("memory reproduction", ok,
               f"Z {fz:.4f} (want 0.96+/-0.01), X {fx:.4f} (want "
               f"0.97+/-0.01), two-step {fo:.4f} (<0.90) "
               f"({time.time()-t0:.0f}s)")

    def test_stability_reproduction(self, fitted):
        """Gamma < 1 with its 95% CI excluding 1; reset and no-reset agree
        within the joint CI when the reset error matches the
        measurement-equivalent rate."""
        t0 = time.time()
        equiv = replace(fitted, p_reset=fitted.p_qmeas + fitted.p_cmeas)
        ts = list(range(3, 13))
        nr = run_stability(False, ts, equiv, shots=30000, seed=4010)
        ur = run_stability(True, ts, equiv, shots=30000, seed=4010)
        _, hi = nr.gamma_ci95
        joint = 1.96 * math.hypot(nr.fit.errors["gamma"],
                                  ur.fit.errors["gamma"])
        diff = abs(nr.gamma - ur.gamma)
        ok = hi < 1.0 and diff <= joint
        report("stability reproduction", ok,
               f"gamma_nr={nr.gamma:.4f} (CI high {hi:.4f}), "
               f"gamma_ur={ur.gamma:.4f}, |diff|={diff:.4f} <= {joint:.4f} "
               f"({time.time()-t0:.0f}s)")

    def test_sweep_ordering(self, fitted):
        """At factor 1/10 the classical readout rate gives the largest
        stability improvement of the swept parameters (reset noise is dead
        in the no-reset grid and enters only through the reset circuit);
        memory gains from the two-qubit rate saturate below 1/10."""
        t0 = time.time()
        rows = run_sweep(fitted, shots=20000, seed=4020,
                         memory_ts=tuple(range(1, 9)),
                         stability_ts=tuple(range(3, 11)))

        def decay(param, factor, mode, experiment):
            return next(r.decay for r in rows
                        if r.parameter == param and r.factor == factor
                        and r.reset_mode == mode
                        and r.experiment == experiment)

        ok = True
        detail = []
        for mode in ("nr", "ur"):
            imps = {param: decay(param, 1.0, mode, "stability")
                    - decay(param, 0.1, mode, "stability")
                    for param in ("p_2q", "p_idle", "p_cmeas", "p_reset")}
            detail.append(f"{mode}: stability improvements "
                          + ", ".join(f"{k}={v:.4f}"
                                      for k, v in imps.items()))
            # readout beats gate and idle noise in both grids
            ok &= imps["p_cmeas"] > imps["p_2q"]
            ok &= imps["p_cmeas"] > imps["p_idle"]
            if mode == "nr":
                # dead parameter: no resets anywhere in the circuit
                ok &= imps["p_reset"] == 0.0
                ok &= max(imps, key=imps.get) == "p_cmeas"
            else:
                # reset noise acts only here (its baseline is the largest
                # table entry, so its own sweep is allowed to lead)
                ok &= imps["p_reset"] > 0.0
        base = decay("p_2q", 1.0, "nr", "memory")
        d10 = decay("p_2q", 0.1, "nr", "memory") - base
        d100 = decay("p_2q", 0.01, "nr", "memory") - base
        saturated = (d100 - d10) <= 0.5 * d10
        detail.append(f"memory p_2q gains: 1/10 {d10:.4f}, 1/100 {d100:.4f}")
        ok &= saturated
        report("sweep ordering", ok,
               "; ".join(detail) + f" ({time.time()-t0:.0f}s)")

    def test_noise_fit_self_consistency(self, mem3, fitted):
        """Curves from a planted model recover the free parameters within
        20% relative error."""
        t0 = time.time()
        planted = replace(fitted, p_2q=fitted.p_2q * 1.6,
                          p_idle=fitted.p_idle * 0.7,
                          p_qmeas=fitted.p_qmeas * 0.7,
                          p_cmeas=fitted.p_cmeas * 0.75)
        stab = build_stability_patch()
        targets = []
        for t in range(1, 7):
            pt = run_point(mem3, "improved", False, Basis.Z, t, planted,
                           30000, derive_seed(555, "target-mem", t))
            targets.append(("memory", False, t, pt.rate))
        for t in range(1, 7):
            pt = run_point(mem3, "original", True, Basis.Z, t, planted,
                           30000, derive_seed(555, "target-orig", t))
            targets.append(("memory-original", True, t, pt.rate))
        for t in range(3, 9):
            pt = run_point(stab, "improved", False, Basis.Z, t, planted,
                           30000, derive_seed(555, "target-stab", t))
            targets.append(("stability", False, t, pt.rate))
        res = fit_noise_model(targets, fitted, shots=5000, seed=777,
                              max_iter=250)
        rels = {name: abs(getattr(res.model, name) - getattr(planted, name))
                / getattr(planted, name)
                for name in ("p_2q", "p_idle", "p_cmeas")}
        ok = all(v <= 0.20 for v in rels.values())
        report("noise-fit self-consistency", ok,
               ", ".join(f"{k} rel err {v:.1%}" for k, v in rels.items())
               + f" ({time.time()-t0:.0f}s)")


class TestBenchmarking:
    def test_rb_analytics(self):
        """Planted per-Clifford depolarizing recovered within the 95% CI;
        assignment error moves only the prefactor."""
        from hexqec.density import DeviceParams
        t0 = time.time()
        g = 0.008
        dev = DeviceParams(default=QubitParams(t1_us=1e9, t2_us=1e9,
                                               gate_error=g))
        seqs = gen_simultaneous_rb([0], [2, 8, 16, 28, 44], k=10, seed=71)
        _, p, _, perr = fit_rb(run_sequences(seqs, dev, 8000, 72))[0]
        planted_ok = abs(p - (1 - g)) <= max(1.96 * perr, 1e-3)

        spam = DeviceParams(default=QubitParams(
            t1_us=1e9, t2_us=1e9, gate_error=g,
            read1_given0=0.08, read0_given1=0.08))
        _, p2, _, perr2 = fit_rb(run_sequences(seqs, spam, 8000, 72))[0]
        invariant_ok = abs(p - p2) <= 1.96 * (perr + perr2) + 1e-3
        report("rb analytics", planted_ok and invariant_ok,
               f"p={p:.5f} vs 1-g={1-g:.5f}; with SPAM p={p2:.5f} "
               f"({time.time()-t0:.0f}s)")

    def test_midcircuit_rb_phenomenology(self):
        """Closed-form damping factor within +/-0.005 of the simulated
        per-cycle decay for a randomized parked state; state-1 parking
        decays fastest; delays match measurements."""
        from hexqec.density import DeviceParams
        t0 = time.time()
        qp = QubitParams(t1_us=197.36, t2_us=118.43, gate_error=0.0005)
        dev = DeviceParams(default=qp)
        pred = midcircuit_cycle_prediction(qp, 0.0005, gates_per_cycle=5)
        drop_consistent = abs(0.998 * idle_decay_factor(2000.0, qp)
                              - 0.983) <= 0.005

        seqs = gen_midcircuit_rb([0], [1], [2, 6, 10, 16], k=10, seed=73,
                                 variant="RandomizePreMeasure")
        _, p_spec, _, _ = fit_rb(run_sequences(seqs, dev, 8000, 74))[1]
        closed_ok = abs(p_spec - pred) <= 0.005

        fits = {}
        for variant in ("AlwaysZero", "AlwaysOne", "ReturnToTarget",
                        "DelayOnly"):
            s2 = gen_midcircuit_rb([0], [], [2, 6, 10, 16], k=8, seed=75,
                                   variant=variant)
            fits[variant] = fit_rb(run_sequences(s2, dev, 6000, 76))[0]
        ordering_ok = fits["AlwaysOne"][1] < fits["AlwaysZero"][1]
        gap = abs(fits["DelayOnly"][1] - fits["ReturnToTarget"][1])
        sigma = fits["DelayOnly"][3] + fits["ReturnToTarget"][3]
        delay_ok = gap <= 1.96 * sigma + 1e-3
        report("mid-circuit rb phenomenology",
               drop_consistent and closed_ok and ordering_ok and delay_ok,
               f"sim {p_spec:.5f} vs closed form {pred:.5f}; "
               f"one {fits['AlwaysOne'][1]:.4f} < zero "
               f"{fits['AlwaysZero'][1]:.4f}; delay gap {gap:.4f} "
               f"({time.time()-t0:.0f}s)")

    def test_correlation_detection(self, mem3):
        """A planted two-qubit channel produces exactly its edge; twenty
        independent-noise control trials stay below threshold."""
        t0 = time.time()
        indep = NoiseModel(p_1q=0.01, p_cmeas=0.01)
        threshold = 0.003
        spurious = 0
        for trial in range(20):
            res = correlation_analysis(mem3, m=3, shots=6000, model=indep,
                                       seed=8000 + trial,
                                       include_block=False)
            spurious += len(res.edges_above(threshold))
        planted_ok = True
        for trial in range(5):
            res = correlation_analysis(mem3, m=3, shots=6000, model=indep,
                                       seed=8100 + trial,
                                       inject=[(2, 11, 0.08)],
                                       include_block=False)
            edges = res.edges_above(threshold)
            planted_ok &= len(edges) == 1 and edges[0][:2] == (2, 11)
        report("correlation detection", spurious == 0 and planted_ok,
               f"{spurious} spurious edges in 20 control trials; planted "
               f"pair found in 5/5 ({time.time()-t0:.0f}s)")
