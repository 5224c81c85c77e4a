"""Command-line entry point.

Every run writes a manifest echoing the fully resolved configuration so it
can be replayed exactly.  Seeds are mandatory for experiment commands.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import DurationTable, assemble_experiment, circuit_to_text
from .decoder import MatchingDecoder, decode_summary_csv
from .dem import dem_from_text
from .density import DeviceParams, QubitParams
from .frame import FrameBatch
from .lattice import (Basis, build_memory_patch, build_stability_patch,
                      patch_to_json, validate_patch)
from .noise import NoiseModel, default_fitted_model
from . import experiments as xp
from . import rb


def _odd_distance(text: str) -> int:
    v = int(text)
    if v < 3 or v % 2 == 0:
        raise argparse.ArgumentTypeError(
            f"distance must be odd and >= 3, got {v}")
    return v


def _parse_t_list(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",")]


def _load_noise(path: str | None) -> NoiseModel:
    if path is None or path == "fitted":
        return default_fitted_model()
    return NoiseModel.from_json(Path(path).read_text())


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, args, extra=None) -> None:
    doc = {"command": args.command, "version": __version__}
    doc.update({k: v for k, v in vars(args).items()
                if k not in ("func", "command") and v is not None})
    if extra:
        doc.update(extra)
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, default=str))


def _patch_for(args):
    if getattr(args, "patch", "memory") == "stability":
        return build_stability_patch()
    return build_memory_patch(args.d)


# ---------------------------------------------------------------------------
# commands


def cmd_build(args) -> int:
    out = _outdir(args)
    if args.reset is None:
        args.reset = "on" if args.variant == "original" else "off"
    patch = _patch_for(args)
    violations = validate_patch(patch)
    if violations:
        print("patch invariant violations:", violations, file=sys.stderr)
        return 1
    (out / "patch.json").write_text(patch_to_json(patch))
    durations = DurationTable()
    circ = assemble_experiment(patch, args.variant, args.reset == "on",
                               Basis(args.basis), args.t, durations)
    (out / "circuit.txt").write_text(circuit_to_text(circ))
    cycle_builder = {"improved": "build_improved_cycle",
                     "original": "build_original_cycle"}[args.variant]
    from . import circuit as circuit_mod
    cycle = getattr(circuit_mod, cycle_builder)(patch, args.reset == "on",
                                                durations)
    report = {
        "variant": args.variant,
        "reset": args.reset == "on",
        "round_duration_ns": cycle.total_duration(),
        "unitary_layers_per_round": cycle.unitary_layer_count(),
        "experiment_duration_ns": circ.total_duration(),
        "rounds": args.t,
    }
    (out / "durations.json").write_text(json.dumps(report, indent=2))
    _write_manifest(out, args)
    print(f"round duration: {cycle.total_duration():g} ns "
          f"({cycle.unitary_layer_count()} unitary layers)")
    return 0


def cmd_memory(args) -> int:
    out = _outdir(args)
    patch = build_memory_patch(args.d)
    model = _load_noise(args.noise)
    result = xp.run_memory(patch, args.variant, args.reset == "on",
                           Basis(args.basis), _parse_t_list(args.t),
                           model, args.shots, args.seed)
    (out / "memory.csv").write_text(xp.curve_csv("memory", result.points))
    (out / "memory_fit.json").write_text(xp.memory_fit_json(result))
    if args.emit_plot_data:
        _emit_memory_plot_data(out, result)
    _write_manifest(out, args, {"noise_model": json.loads(model.to_json())})
    print(f"per-round fidelity: {result.per_round_fidelity:.4f}")
    return 0


def _emit_memory_plot_data(out: Path, result) -> None:
    lines = ["t,survival,stderr,fit_survival"]
    a = result.fit.params.get("A", float("nan"))
    p = result.fit.params.get("p", float("nan"))
    for pt in result.points:
        fit_val = 2 * (a * p ** pt.t + 0.5) - 1
        lines.append(f"{pt.t},{1 - 2 * pt.rate:.8g},{2 * pt.stderr:.8g},"
                     f"{fit_val:.8g}")
    (out / "plotdata_memory.csv").write_text("\n".join(lines) + "\n")


def cmd_stability(args) -> int:
    out = _outdir(args)
    model = _load_noise(args.noise)
    result = xp.run_stability(args.reset == "on", _parse_t_list(args.t),
                              model, args.shots, args.seed)
    (out / "stability.csv").write_text(xp.curve_csv("stability", result.points))
    (out / "stability_fit.json").write_text(xp.stability_fit_json(result))
    if args.emit_plot_data:
        lines = ["t,rate,stderr,excluded,fit_rate"]
        b = result.fit.params.get("B", float("nan"))
        g = result.fit.params.get("gamma", float("nan"))
        for pt in result.points:
            lines.append(f"{pt.t},{pt.rate:.8g},{pt.stderr:.8g},"
                         f"{int(pt.t in result.excluded_rounds)},"
                         f"{b * g ** pt.t:.8g}")
        (out / "plotdata_stability.csv").write_text("\n".join(lines) + "\n")
    _write_manifest(out, args, {"noise_model": json.loads(model.to_json())})
    lo, hi = result.gamma_ci95
    print(f"gamma: {result.gamma:.4f} (95% CI {lo:.4f}..{hi:.4f})")
    return 0


def cmd_sweep(args) -> int:
    out = _outdir(args)
    model = _load_noise(args.noise)
    params = (xp.SWEEP_PARAMETERS if args.params == "all"
              else tuple(args.params.split(",")))
    factors = tuple(float(f) for f in args.factors.split(","))
    modes = tuple(args.modes.split(","))
    results = xp.run_sweep(model, params, factors, modes,
                           shots=args.shots, seed=args.seed)
    (out / "sweep.csv").write_text(xp.sweep_csv(results))
    if args.emit_plot_data:
        (out / "plotdata_sweep.csv").write_text(xp.sweep_csv(results))
    _write_manifest(out, args, {"noise_model": json.loads(model.to_json())})
    print(f"{len(results)} sweep rows written")
    return 0


def cmd_rb(args) -> int:
    out = _outdir(args)
    qubits = [int(q) for q in args.qubits.split(",")]
    m_list = _parse_t_list(args.m)
    device = DeviceParams(default=QubitParams(
        t1_us=args.t1, t2_us=args.t2, gate_error=args.gate_error,
        read1_given0=args.read_error, read0_given1=args.read_error))
    if args.protocol == "simultaneous":
        seqs = rb.gen_simultaneous_rb(qubits, m_list, args.k, args.seed)
    elif args.protocol == "midcircuit":
        spect = ([int(q) for q in args.spectators.split(",")]
                 if args.spectators else [])
        seqs = rb.gen_midcircuit_rb(qubits, spect, m_list, args.k, args.seed,
                                    variant=args.variant)
    elif args.protocol == "temporal":
        seqs = rb.gen_temporal_consistency(args.seed, qubits, m_list[-1],
                                           args.k)
    else:
        print(f"unknown protocol {args.protocol}", file=sys.stderr)
        return 2
    records = rb.run_sequences(seqs, device, args.shots, args.seed + 1)
    (out / "rb_records.csv").write_text(rb.records_csv(records))
    fits = rb.fit_rb(records)
    (out / "rb_fit.json").write_text(json.dumps(
        {str(q): {"A": f[0], "p": f[1], "A_err": f[2], "p_err": f[3]}
         for q, f in fits.items()}, indent=2))
    if args.emit_plot_data:
        lines = ["qubit,m,sequence,target_one,survival"]
        for r in records:
            lines.append(f"{r.qubit},{r.m},{r.sequence},{int(r.target_one)},"
                         f"{r.survival:.8g}")
        (out / "plotdata_rb.csv").write_text("\n".join(lines) + "\n")
    _write_manifest(out, args)
    for q, f in sorted(fits.items()):
        print(f"qubit {q}: p={f[1]:.5f}")
    return 0


def cmd_correlation(args) -> int:
    out = _outdir(args)
    patch = build_memory_patch(args.d)
    model = _load_noise(args.noise)
    inject = []
    if args.inject:
        a, b, p = args.inject.split(",")
        inject = [(int(a), int(b), float(p))]
    result = rb.correlation_analysis(patch, args.m, args.shots, model,
                                     args.seed, inject=inject,
                                     include_block=not args.no_block)
    (out / "correlation.json").write_text(result.to_json())
    edges = result.edges_above(args.threshold)
    (out / "mi_edges.csv").write_text(
        "q1,q2,mutual_information\n" +
        "".join(f"{a},{b},{v:.8g}\n" for a, b, v in edges))
    _write_manifest(out, args)
    print(f"{len(edges)} mutual-information edges above {args.threshold}")
    return 0


def cmd_fit(args) -> int:
    out = _outdir(args)
    targets = []
    for line in Path(args.targets).read_text().splitlines()[1:]:
        if not line.strip():
            continue
        kind, reset, t, rate = line.split(",")
        targets.append((kind, reset == "True" or reset == "on",
                        int(t), float(rate)))
    initial = _load_noise(args.initial)
    result = xp.fit_noise_model(targets, initial,
                                free=tuple(args.free.split(",")),
                                shots=args.shots, seed=args.seed,
                                max_iter=args.max_iter)
    (out / "fitted_model.json").write_text(result.model.to_json())
    (out / "fit_summary.json").write_text(json.dumps({
        "loss": result.loss, "iterations": result.iterations,
        "converged": result.converged}, indent=2))
    _write_manifest(out, args)
    print(f"loss {result.loss:.4f} after {result.iterations} iterations"
          + ("" if result.converged else " (not converged; best-so-far)"))
    return 0


def cmd_decode(args) -> int:
    out = _outdir(args)
    graph = dem_from_text(Path(args.dem).read_text())
    batch = FrameBatch.from_binary(Path(args.bits).read_bytes())
    shots = batch.shots
    det_bits = np.zeros((graph.n_detectors, shots), dtype=np.uint8)
    for d in graph.detectors:
        det_bits[d.id] = np.unpackbits(
            batch.xor_rows(d.records).view(np.uint8),
            bitorder="little")[:shots]
    corr = MatchingDecoder(graph).decode_batch(det_bits)
    np.packbits(corr, bitorder="little").tofile(out / "predictions.bin")
    failures = int(corr.sum())
    (out / "summary.csv").write_text(decode_summary_csv(shots, failures))
    _write_manifest(out, args)
    print(f"decoded {shots} shots")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hexqec")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed_required=True):
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, required=seed_required)
        p.add_argument("--shots", type=int, default=20000)
        p.add_argument("--noise", default="fitted")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--emit-plot-data", action="store_true")

    p = sub.add_parser("build", help="write patch, circuit and durations")
    p.add_argument("--variant", choices=["improved", "original"],
                   default="improved")
    p.add_argument("--reset", choices=["on", "off"], default=None)
    p.add_argument("--d", type=_odd_distance, default=3)
    p.add_argument("--patch", choices=["memory", "stability"],
                   default="memory")
    p.add_argument("--basis", choices=["Z", "X"], default="Z")
    p.add_argument("--t", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("memory", help="memory decay experiment")
    p.add_argument("--variant", choices=["improved", "original"],
                   default="improved")
    p.add_argument("--reset", choices=["on", "off"], default="off")
    p.add_argument("--basis", choices=["Z", "X"], default="Z")
    p.add_argument("--d", type=_odd_distance, default=3)
    p.add_argument("--t", default="1..12")
    common(p)
    p.set_defaults(func=cmd_memory)

    p = sub.add_parser("stability", help="stability decay experiment")
    p.add_argument("--reset", choices=["on", "off"], default="off")
    p.add_argument("--t", default="1..12")
    common(p)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("sweep", help="noise-parameter factor grid")
    p.add_argument("--params", default="all")
    p.add_argument("--factors", default="1,0.5,0.1,0.01")
    p.add_argument("--modes", default="nr,ur")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("rb", help="randomized benchmarking protocols")
    p.add_argument("--protocol",
                   choices=["simultaneous", "midcircuit", "temporal"],
                   default="simultaneous")
    p.add_argument("--qubits", default="0,1")
    p.add_argument("--spectators", default="")
    p.add_argument("--m", default="2,6,10,16")
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--variant", choices=list(rb.MID_VARIANTS),
                   default="ReturnToTarget")
    p.add_argument("--t1", type=float, default=197.36)
    p.add_argument("--t2", type=float, default=118.43)
    p.add_argument("--gate-error", type=float, default=0.0005)
    p.add_argument("--read-error", type=float, default=0.0)
    common(p)
    p.set_defaults(func=cmd_rb)

    p = sub.add_parser("correlation", help="mirrored-block correlation scan")
    p.add_argument("--d", type=_odd_distance, default=3)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--inject", default="")
    p.add_argument("--threshold", type=float, default=0.003)
    p.add_argument("--no-block", action="store_true")
    common(p)
    p.set_defaults(func=cmd_correlation)

    p = sub.add_parser("fit", help="fit noise parameters to target curves")
    p.add_argument("--targets", required=True)
    p.add_argument("--initial", default="fitted")
    p.add_argument("--free", default="p_2q,p_idle,p_cmeas")
    p.add_argument("--max-iter", type=int, default=120)
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("decode", help="decode packed detector bits")
    p.add_argument("--dem", required=True)
    p.add_argument("--bits", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "workers", None):
        from . import decoder as _decoder
        _decoder.DEFAULT_WORKERS = args.workers
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        out = Path(getattr(args, "out", "."))
        if out.exists():
            (out / "FAILED").write_text(str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
