"""Experiment drivers: fits, seeds, sweeps, noise-model fitting."""

import numpy as np
import pytest

from hexqec.experiments import (CurvePoint, derive_seed, fit_noise_model,
                                run_memory, run_point, run_stability,
                                run_sweep, curve_csv, sweep_csv)
from hexqec.frame import Seed
from hexqec.lattice import Basis, build_memory_patch, build_stability_patch
from hexqec.noise import NoiseModel, default_fitted_model, scale_parameter


@pytest.fixture(scope="module")
def mem3():
    return build_memory_patch(3)


class TestRunMemory:
    def test_zero_noise_success_one(self, mem3):
        res = run_memory(mem3, "improved", False, Basis.Z, [1, 2, 3],
                         NoiseModel(), shots=2000, seed=1)
        assert all(p.failures == 0 for p in res.points)
        assert res.fit.params["p"] == pytest.approx(1.0, abs=1e-6)

    def test_empty_t_list_rejected(self, mem3):
        with pytest.raises(ValueError):
            run_memory(mem3, "improved", False, Basis.Z, [],
                       NoiseModel(), 100, 1)

    def test_survival_rescaling(self, mem3):
        res = run_memory(mem3, "improved", False, Basis.Z, [1, 2],
                         default_fitted_model(), shots=4000, seed=2)
        for (t, surv), pt in zip(res.survival(), res.points):
            assert surv == pytest.approx(1 - 2 * pt.rate)

    def test_reproducible(self, mem3):
        a = run_memory(mem3, "improved", False, Basis.Z, [1, 3],
                       default_fitted_model(), shots=3000, seed=42)
        b = run_memory(mem3, "improved", False, Basis.Z, [1, 3],
                       default_fitted_model(), shots=3000, seed=42)
        assert [(p.t, p.failures) for p in a.points] == \
            [(p.t, p.failures) for p in b.points]
        assert curve_csv("memory", a.points) == curve_csv("memory", b.points)


class TestRunStability:
    def test_zero_noise_no_failures(self):
        res = run_stability(False, [3, 4, 5, 6], NoiseModel(), shots=1500,
                            seed=3)
        assert all(p.failures == 0 for p in res.points)

    def test_excluded_rounds_default(self):
        res = run_stability(False, [1, 2, 3, 4, 5, 6],
                            default_fitted_model(), shots=2000, seed=4)
        assert res.excluded_rounds == [1, 2]
        fit_ts = {p.t for p in res.points} - set(res.excluded_rounds)
        assert min(fit_ts) >= 3

    def test_fit_window_validation(self):
        with pytest.raises(ValueError):
            run_stability(False, [1, 2], default_fitted_model(), 100, 5)

    def test_gamma_below_one_with_ci(self):
        res = run_stability(False, list(range(3, 11)),
                            default_fitted_model(), shots=8000, seed=6)
        lo, hi = res.gamma_ci95
        assert hi < 1.0
        assert lo > 0.0


class TestSweep:
    def test_baseline_reproduces_unswept_bit_for_bit(self, mem3):
        model = default_fitted_model()
        shots, seed = 2500, 11
        mem_ts, stab_ts = [1, 2, 3], [3, 4, 5, 6]
        rows = run_sweep(model, parameters=("p_2q",), factors=(1.0, 0.5),
                         reset_modes=("nr",), shots=shots, seed=seed,
                         memory_ts=mem_ts, stability_ts=stab_ts)
        base_mem = run_memory(mem3, "improved", False, Basis.Z, mem_ts, model,
                              shots, derive_seed(seed, "sweep-mem", "nr").master)
        base_row = next(r for r in rows
                        if r.factor == 1.0 and r.experiment == "memory")
        assert base_row.decay == base_mem.fit.params["p"]

    def test_dead_parameter_no_reset(self):
        """Scaling reset noise cannot move a circuit that never resets."""
        model = default_fitted_model()
        rows = run_sweep(model, parameters=("p_reset",), factors=(1.0, 0.01),
                         reset_modes=("nr",), shots=2500, seed=12,
                         memory_ts=[1, 2, 3], stability_ts=[3, 4, 5, 6])
        mem = [r for r in rows if r.experiment == "memory"]
        assert mem[0].decay == mem[1].decay

    def test_rejects_unknown_factor(self):
        with pytest.raises(ValueError):
            run_sweep(default_fitted_model(), factors=(1.0, 0.3))

    def test_sweep_csv_schema(self):
        rows = run_sweep(default_fitted_model(), parameters=("p_cmeas",),
                         factors=(1.0,), reset_modes=("nr",), shots=1500,
                         seed=13, memory_ts=[1, 2, 3],
                         stability_ts=[3, 4, 5, 6])
        text = sweep_csv(rows)
        header = text.splitlines()[0]
        assert header == "parameter,factor,reset_mode,experiment,decay,decay_err"
        assert len(text.splitlines()) == len(rows) + 1


class TestNoiseFit:
    def test_requires_four_t_values(self):
        with pytest.raises(ValueError):
            fit_noise_model([("memory", False, 1, 0.1),
                             ("memory", False, 2, 0.1)],
                            default_fitted_model())

    def test_fixed_point_loss_near_floor(self, mem3):
        """Targets produced by the initial model itself leave the optimum
        near the starting point with small loss."""
        model = default_fitted_model()
        shots = 3000
        targets = []
        for t in (1, 2, 3, 4):
            pt = run_point(mem3, "improved", False, Basis.Z, t, model, shots,
                           derive_seed(77, "fit-mem", False, t))
            targets.append(("memory", False, t, pt.rate))
        for t in (3, 4, 5, 6):
            pt = run_point(build_stability_patch(), "improved", False,
                           Basis.Z, t, model, shots,
                           derive_seed(77, "fit-stab", False, t))
            targets.append(("stability", False, t, pt.rate))
        res = fit_noise_model(targets, model, shots=shots, seed=77,
                              max_iter=25)
        assert res.loss < 0.05
        for name in ("p_2q", "p_idle", "p_cmeas"):
            assert getattr(res.model, name) == pytest.approx(
                getattr(model, name), rel=0.5)

    def test_sensitivity_direction(self, mem3):
        """Raising the classical readout rate in the targets pulls the
        recovered parameter upward."""
        model = default_fitted_model()
        bumped = scale_parameter(model, "p_cmeas", 1.8)
        shots = 3000
        targets = []
        for t in (1, 2, 3, 4):
            pt = run_point(mem3, "improved", False, Basis.Z, t, bumped, shots,
                           derive_seed(78, "fit-mem", False, t))
            targets.append(("memory", False, t, pt.rate))
        for t in (3, 4, 5, 6):
            pt = run_point(build_stability_patch(), "improved", False,
                           Basis.Z, t, bumped, shots,
                           derive_seed(78, "fit-stab", False, t))
            targets.append(("stability", False, t, pt.rate))
        res = fit_noise_model(targets, model, shots=shots, seed=78,
                              max_iter=40)
        assert res.model.p_cmeas > model.p_cmeas


def test_derive_seed_stable():
    assert derive_seed(5, "a", 1) == derive_seed(5, "a", 1)
    assert derive_seed(5, "a", 1) != derive_seed(5, "a", 2)
    assert isinstance(derive_seed(5, "x"), Seed)
