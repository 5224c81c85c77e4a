"""Experiment orchestration: decay curves, parameter sweeps, model fitting.

Each experiment point assembles a circuit, annotates it with noise, compiles
the detector graph, samples, decodes, and counts logical failures.  Decay
fits use weighted nonlinear least squares with binomial weights; the memory
asymptote is fixed at one half.  Seeds are derived deterministically from
the master seed and the point's role, so a sweep's baseline reproduces the
unswept run bit for bit.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import curve_fit, minimize

from .circuit import DurationTable, assemble_experiment
from .decoder import MatchingDecoder
from .dem import build_dem_structure, compile_dem, define_detectors
from .frame import Seed, sample
from .lattice import Basis, Patch, build_memory_patch, build_stability_patch
from .noise import NoiseModel, annotate, scale_parameter

SWEEP_FACTORS = (1.0, 0.5, 0.1, 0.01)
SWEEP_PARAMETERS = ("p_2q", "p_idle", "p_cmeas", "p_reset")


def derive_seed(master: int, *tags) -> Seed:
    """Deterministic sub-seed from the master seed and a role tag."""
    text = ":".join(str(t) for t in tags)
    return Seed(master=(master ^ zlib.crc32(text.encode())) & 0x7FFFFFFF)


@dataclass
class CurvePoint:
    t: int
    shots: int
    failures: int

    @property
    def rate(self) -> float:
        return self.failures / self.shots

    @property
    def stderr(self) -> float:
        r = self.rate
        return math.sqrt(max(r * (1 - r), 1e-12) / self.shots)


@dataclass
class FitResult:
    params: dict[str, float]
    errors: dict[str, float]
    residuals: list[float]
    converged: bool


@dataclass
class MemoryResult:
    basis: str
    variant: str
    reset: bool
    points: list[CurvePoint]
    fit: FitResult
    seed: int

    @property
    def decay(self) -> float:
        return self.fit.params["p"]

    @property
    def per_round_fidelity(self) -> float:
        return (1 + self.decay) / 2

    def survival(self) -> list[tuple[int, float]]:
        """Rescaled memory survival 1 - 2*p_fail per round count."""
        return [(pt.t, 1 - 2 * pt.rate) for pt in self.points]


@dataclass
class StabilityResult:
    reset: bool
    points: list[CurvePoint]
    excluded_rounds: list[int]
    fit: FitResult
    seed: int

    @property
    def gamma(self) -> float:
        return self.fit.params["gamma"]

    @property
    def gamma_ci95(self) -> tuple[float, float]:
        g = self.gamma
        e = 1.96 * self.fit.errors["gamma"]
        return (g - e, g + e)


@dataclass
class SweepResult:
    parameter: str
    factor: float
    reset_mode: str            # "nr" | "ur"
    experiment: str            # "memory" | "stability"
    decay: float               # fitted p or gamma
    decay_err: float


# ---------------------------------------------------------------------------
# single experiment point


def run_point(patch: Patch, variant: str, reset: bool, basis: Basis, t: int,
              model: NoiseModel, shots: int, seed: Seed,
              durations: DurationTable | None = None,
              _cache: dict | None = None) -> CurvePoint:
    """Assemble, annotate, compile, sample, decode, count failures.

    The cache holds both fully compiled decoders (keyed with the model) and
    the model-independent propagation structure (keyed without it), so
    sweeping or fitting noise parameters over one circuit re-propagates
    nothing.
    """
    key = (patch.kind, patch.distance, variant, reset, basis.value, t, model)
    skey = (patch.kind, patch.distance, variant, reset, basis.value, t)
    if _cache is not None and key in _cache:
        dets, obs_records, decoder, noisy = _cache[key]
    else:
        if _cache is not None and skey in _cache:
            circ, dets, obs, structure = _cache[skey]
        else:
            circ = assemble_experiment(patch, variant, reset, basis, t,
                                       durations)
            dets, obs = define_detectors(circ, patch)
            structure = build_dem_structure(
                annotate(circ, model), dets, obs)
            if _cache is not None:
                _cache[skey] = (circ, dets, obs, structure)
        noisy = annotate(circ, model)
        graph = compile_dem(noisy, dets, obs, check_determinism=False,
                            structure=structure)
        decoder = MatchingDecoder(graph)
        obs_records = obs[0].records
        if _cache is not None and len(_cache) < 4096:
            _cache[key] = (dets, obs_records, decoder, noisy)

    batch = sample(noisy, shots, seed)
    det_bits = np.zeros((len(dets), shots), dtype=np.uint8)
    for d in dets:
        det_bits[d.id] = np.unpackbits(
            batch.xor_rows(d.records).view(np.uint8),
            bitorder="little")[:shots]
    actual = np.unpackbits(
        batch.xor_rows(obs_records).view(np.uint8), bitorder="little")[:shots]
    corr = decoder.decode_batch(det_bits)
    failures = int((corr ^ actual).sum())
    return CurvePoint(t=t, shots=shots, failures=failures)


# ---------------------------------------------------------------------------
# decay fits


def _fit_memory_curve(points: list[CurvePoint]) -> FitResult:
    ts = np.array([p.t for p in points], dtype=float)
    succ = np.array([1 - p.rate for p in points])
    sig = np.array([max(p.stderr, 1e-9) for p in points])
    if len(points) < 2:
        return FitResult(params={"A": math.nan, "p": math.nan}, errors={},
                         residuals=[], converged=False)
    try:
        popt, pcov = curve_fit(lambda t, a, p: a * p**t + 0.5, ts, succ,
                               p0=[0.5, 0.9], sigma=sig, absolute_sigma=True,
                               maxfev=10000)
        perr = np.sqrt(np.diag(pcov))
        resid = (succ - (popt[0] * popt[1]**ts + 0.5)) / sig
        return FitResult(params={"A": popt[0], "p": popt[1]},
                         errors={"A": perr[0], "p": perr[1]},
                         residuals=resid.tolist(), converged=True)
    except RuntimeError as exc:
        return FitResult(params={"A": math.nan, "p": math.nan},
                         errors={}, residuals=[],
                         converged=False)


def _fit_stability_curve(points: list[CurvePoint]) -> FitResult:
    ts = np.array([p.t for p in points], dtype=float)
    rate = np.array([p.rate for p in points])
    sig = np.array([max(p.stderr, 1e-9) for p in points])
    if len(points) < 2:
        return FitResult(params={"B": math.nan, "gamma": math.nan}, errors={},
                         residuals=[], converged=False)
    try:
        popt, pcov = curve_fit(lambda t, b, g: b * g**t, ts, rate,
                               p0=[0.5, 0.85], sigma=sig, absolute_sigma=True,
                               maxfev=10000)
        perr = np.sqrt(np.diag(pcov))
        resid = (rate - popt[0] * popt[1]**ts) / sig
        return FitResult(params={"B": popt[0], "gamma": popt[1]},
                         errors={"B": perr[0], "gamma": perr[1]},
                         residuals=resid.tolist(), converged=True)
    except RuntimeError:
        return FitResult(params={"B": math.nan, "gamma": math.nan},
                         errors={}, residuals=[], converged=False)


# ---------------------------------------------------------------------------
# experiment drivers


def run_memory(patch: Patch, variant: str, reset: bool, basis: Basis,
               t_list: list[int], model: NoiseModel, shots: int,
               seed: int) -> MemoryResult:
    """Memory decay curve: success fitted to A p^t + 1/2."""
    if not t_list:
        raise ValueError("t list must be nonempty")
    cache: dict = {}
    points = [run_point(patch, variant, reset, basis, t, model, shots,
                        derive_seed(seed, "memory", variant, reset,
                                    basis.value, t), _cache=cache)
              for t in t_list]
    fit = _fit_memory_curve(points)
    return MemoryResult(basis=basis.value, variant=variant, reset=reset,
                        points=points, fit=fit, seed=seed)


def run_stability(reset: bool, t_list: list[int], model: NoiseModel,
                  shots: int, seed: int,
                  excluded_rounds: tuple[int, ...] = (1, 2)) -> StabilityResult:
    """Stability decay: failure fitted to B gamma^t on the included window."""
    patch = build_stability_patch()
    fit_ts = [t for t in t_list if t not in excluded_rounds]
    if not fit_ts or min(fit_ts) < 3:
        raise ValueError("fit window must contain rounds t >= 3")
    cache: dict = {}
    points = [run_point(patch, "improved", reset, Basis.Z, t, model, shots,
                        derive_seed(seed, "stability", reset, t), _cache=cache)
              for t in t_list]
    fit = _fit_stability_curve([p for p in points if p.t not in excluded_rounds])
    return StabilityResult(reset=reset, points=points,
                           excluded_rounds=sorted(excluded_rounds), fit=fit,
                           seed=seed)


def run_sweep(model: NoiseModel,
              parameters=SWEEP_PARAMETERS,
              factors=SWEEP_FACTORS,
              reset_modes=("nr", "ur"),
              shots: int = 20000,
              seed: int = 0,
              memory_ts=tuple(range(1, 9)),
              stability_ts=tuple(range(3, 11)),
              d: int = 3) -> list[SweepResult]:
    """Factor grid over noise parameters, memory and stability together.

    Seeds depend only on (experiment, mode, t), never on the swept
    parameter, so the factor-1 entry of every parameter reproduces the
    baseline run exactly.
    """
    bad = set(factors) - set(SWEEP_FACTORS)
    if bad:
        raise ValueError(f"unsupported sweep factors {sorted(bad)}")
    patch = build_memory_patch(d)
    out: list[SweepResult] = []
    for param in parameters:
        for factor in factors:
            swept = scale_parameter(model, param, factor)
            for mode in reset_modes:
                reset = mode == "ur"
                mem = run_memory(patch, "improved", reset, Basis.Z,
                                 list(memory_ts), swept, shots,
                                 derive_seed(seed, "sweep-mem", mode).master)
                out.append(SweepResult(param, factor, mode, "memory",
                                       mem.fit.params["p"],
                                       mem.fit.errors.get("p", math.nan)))
                stab = run_stability(reset, list(stability_ts), swept, shots,
                                     derive_seed(seed, "sweep-stab",
                                                 mode).master)
                out.append(SweepResult(param, factor, mode, "stability",
                                       stab.gamma,
                                       stab.fit.errors.get("gamma", math.nan)))
    return out


# ---------------------------------------------------------------------------
# noise-model fitting


@dataclass
class NoiseFitResult:
    model: NoiseModel
    loss: float
    iterations: int
    converged: bool
    history: list[tuple[float, ...]] = field(default_factory=list)


_STAB_PATCH_CACHE: list = []


def _loss_against_targets(model, targets, shots, seed, patch, cache):
    if not _STAB_PATCH_CACHE:
        _STAB_PATCH_CACHE.append(build_stability_patch())
    stab = _STAB_PATCH_CACHE[0]
    loss = 0.0
    for kind, reset, t, target_rate in targets:
        if kind == "memory":
            pt = run_point(patch, "improved", reset, Basis.Z, t, model, shots,
                           derive_seed(seed, "fit-mem", reset, t),
                           _cache=cache)
        elif kind == "memory-original":
            pt = run_point(patch, "original", True, Basis.Z, t, model, shots,
                           derive_seed(seed, "fit-orig", t), _cache=cache)
        else:
            pt = run_point(stab, "improved", reset, Basis.Z, t, model, shots,
                           derive_seed(seed, "fit-stab", reset, t),
                           _cache=cache)
        sim = max(pt.rate, 0.5 / shots)
        tgt = max(target_rate, 0.5 / shots)
        loss += (math.log(sim) - math.log(tgt)) ** 2
    return loss


def fit_noise_model(targets: list[tuple], initial: NoiseModel,
                    free=("p_2q", "p_idle", "p_cmeas"),
                    shots: int = 4000, seed: int = 77,
                    max_iter: int = 120) -> NoiseFitResult:
    """Downhill-simplex fit of free noise parameters to target curves.

    ``targets`` rows are (kind, reset, t, failure_rate) with kind in
    {"memory", "stability"}; at least four t values per curve are expected.
    The simplex runs in log10 parameter space with common random numbers
    per evaluation (identical seeds), standard reflection/expansion/
    contraction/shrink coefficients (1, 2, 0.5, 0.5), and converges when
    the simplex size falls below 1e-4 in log space.
    """
    kinds = {}
    for kind, reset, t, _ in targets:
        kinds.setdefault((kind, reset), set()).add(t)
    for key, ts in kinds.items():
        if len(ts) < 4:
            raise ValueError(f"target curve {key} has fewer than 4 t values")

    patch = build_memory_patch(3)
    x0 = np.log10([getattr(initial, name) for name in free])
    history: list[tuple[float, ...]] = []

    def build(x):
        updates = {name: float(10.0 ** v) for name, v in zip(free, x)}
        if initial.tie_qmeas_to_idle:
            if "p_idle" in updates:
                updates["p_qmeas"] = updates["p_idle"]
            elif "p_qmeas" in updates:
                updates["p_idle"] = updates["p_qmeas"]
        return replace(initial, **updates)

    shared_cache: dict = {}

    def objective(x):
        if np.any(10.0 ** x > 0.75):
            return 1e6
        model = build(x)
        val = _loss_against_targets(model, targets, shots, seed, patch,
                                    shared_cache)
        history.append(tuple(x) + (val,))
        return val

    res = minimize(objective, x0, method="Nelder-Mead",
                   options={"xatol": 1e-4, "fatol": 1e-8,
                            "maxiter": max_iter, "adaptive": False})
    return NoiseFitResult(model=build(res.x), loss=float(res.fun),
                          iterations=int(res.nit),
                          converged=bool(res.success), history=history)


# ---------------------------------------------------------------------------
# output formats


def curve_csv(kind: str, points: list[CurvePoint]) -> str:
    lines = ["experiment,t,shots,failures,rate,stderr"]
    for p in points:
        lines.append(f"{kind},{p.t},{p.shots},{p.failures},"
                     f"{p.rate:.8g},{p.stderr:.8g}")
    return "\n".join(lines) + "\n"


def memory_fit_json(result: MemoryResult) -> str:
    return json.dumps({
        "experiment": "memory",
        "basis": result.basis,
        "variant": result.variant,
        "reset": result.reset,
        "fit": result.fit.params,
        "fit_errors": result.fit.errors,
        "per_round_fidelity": result.per_round_fidelity,
        "converged": result.fit.converged,
        "seed": result.seed,
    }, indent=2)


def stability_fit_json(result: StabilityResult) -> str:
    lo, hi = result.gamma_ci95
    return json.dumps({
        "experiment": "stability",
        "reset": result.reset,
        "excluded_rounds": result.excluded_rounds,
        "fit": result.fit.params,
        "fit_errors": result.fit.errors,
        "gamma_ci95": [lo, hi],
        "converged": result.fit.converged,
        "seed": result.seed,
    }, indent=2)


def sweep_csv(results: list[SweepResult]) -> str:
    lines = ["parameter,factor,reset_mode,experiment,decay,decay_err"]
    for r in results:
        lines.append(f"{r.parameter},{r.factor:g},{r.reset_mode},"
                     f"{r.experiment},{r.decay:.8g},{r.decay_err:.8g}")
    return "\n".join(lines) + "\n"
