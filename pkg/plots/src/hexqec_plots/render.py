"""Render figures from hexqec result files.

Plotting is presentation only: every number comes straight from the input
CSV/JSON files (the simulator already rescales survivals and evaluates fit
lines), and the renderer fails loudly when a file does not match its
schema.  Output is vector (SVG or PDF, by extension).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

FIGURE_KINDS = ("memory", "stability", "sweep", "rb", "hinton", "mi_layout")

_SCHEMAS = {
    "memory": ("t", "survival", "stderr", "fit_survival"),
    "stability": ("t", "rate", "stderr", "excluded", "fit_rate"),
    "sweep": ("parameter", "factor", "reset_mode", "experiment", "decay",
              "decay_err"),
    "rb": ("qubit", "m", "sequence", "target_one", "survival"),
}


@dataclass
class PlotSpec:
    kind: str
    inputs: dict[str, str]
    output: str
    yscale: str | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")
        suffix = Path(self.output).suffix.lower()
        if suffix not in (".svg", ".pdf"):
            raise ValueError(f"vector output required, got {suffix!r}")


class SchemaError(ValueError):
    pass


def _read_csv(path: str, kind: str) -> dict[str, np.ndarray]:
    want = _SCHEMAS[kind]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file")
        missing = set(want) - set(reader.fieldnames)
        if missing:
            raise SchemaError(f"{path}: missing columns {sorted(missing)}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    out: dict[str, np.ndarray] = {}
    for col in reader.fieldnames:
        vals = [r[col] for r in rows]
        try:
            out[col] = np.array([float(v) for v in vals])
        except ValueError:
            out[col] = np.array(vals)
    return out


# ---------------------------------------------------------------------------
# figure kinds


def _render_memory(spec: PlotSpec, ax):
    data = _read_csv(spec.inputs["curve"], "memory")
    ax.errorbar(data["t"], data["survival"], yerr=data["stderr"], fmt="o",
                color="#7a2d8c", label="survival")
    if np.isfinite(data["fit_survival"]).all():
        ax.plot(data["t"], data["fit_survival"], "-", color="#7a2d8c",
                alpha=0.7, label="fit")
    else:
        warnings.warn("fit column not finite; plotting data only")
    ax.set_yscale("log")
    ax.set_xlabel("syndrome rounds t")
    ax.set_ylabel("memory survival  1 - 2 p_fail")
    ax.legend(frameon=False)


def _render_stability(spec: PlotSpec, ax):
    data = _read_csv(spec.inputs["curve"], "stability")
    excl = data["excluded"].astype(bool)
    ax.errorbar(data["t"][~excl], data["rate"][~excl],
                yerr=data["stderr"][~excl], fmt="o", color="#1f77b4",
                label="fit window")
    if excl.any():
        ax.errorbar(data["t"][excl], data["rate"][excl],
                    yerr=data["stderr"][excl], fmt="s", ms=3,
                    color="#1f77b4", alpha=0.5, label="excluded")
    ax.plot(data["t"], data["fit_rate"], "-", color="#1f77b4", alpha=0.7)
    ax.set_yscale("log")
    ax.set_xlabel("syndrome rounds t")
    ax.set_ylabel("failure probability")
    ax.legend(frameon=False)


def _render_sweep(spec: PlotSpec, fig):
    data = _read_csv(spec.inputs["grid"], "sweep")
    params = sorted(set(data["parameter"].tolist()))
    experiments = ("memory", "stability")
    factors = sorted(set(data["factor"].tolist()), reverse=True)
    cmap = plt.get_cmap("viridis")
    # one shared color scale over the improvement factors
    color_of = {f: cmap(i / max(len(factors) - 1, 1))
                for i, f in enumerate(factors)}
    axes = fig.subplots(len(experiments), len(params), squeeze=False)
    markers = {"nr": "D", "ur": "o"}
    for i, exp in enumerate(experiments):
        for j, param in enumerate(params):
            ax = axes[i][j]
            sel = (data["parameter"] == param) & (data["experiment"] == exp)
            for mode in sorted(set(data["reset_mode"][sel].tolist())):
                ms = sel & (data["reset_mode"] == mode)
                fs = data["factor"][ms]
                dc = data["decay"][ms]
                order = np.argsort(fs)[::-1]
                ax.plot(fs[order], dc[order], "-", color="0.8", zorder=1)
                for f, d in zip(fs[order], dc[order]):
                    ax.plot([f], [d], markers.get(mode, "o"),
                            color=color_of[f], zorder=2)
            ax.set_xscale("log")
            if i == len(experiments) - 1:
                ax.set_xlabel(param)
            if j == 0:
                ax.set_ylabel(f"{exp} decay")
    fig.suptitle("noise-parameter sweep (color: improvement factor)")


def _render_rb(spec: PlotSpec, ax):
    data = _read_csv(spec.inputs["records"], "rb")
    colors = {0: "#1f5fd0", 1: "#d03a1f"}
    for target in (0, 1):
        sel = data["target_one"] == target
        label = "return to |1>" if target else "return to |0>"
        ax.plot(data["m"][sel], data["survival"][sel], "o", ms=3, alpha=0.5,
                color=colors[target], label=label)
    for m in sorted(set(data["m"].tolist())):
        sel = data["m"] == m
        ax.plot([m], [data["survival"][sel].mean()], "k_", ms=14)
    ax.axhline(0.5, color="0.6", lw=0.8, ls=":")
    ax.set_xlabel("sequence length m")
    ax.set_ylabel("survival probability")
    ax.set_ylim(0.4, 1.02)
    ax.legend(frameon=False)


def _load_correlation(path: str):
    doc = json.loads(Path(path).read_text())
    for key in ("qubits", "correlation", "mutual_information"):
        if key not in doc:
            raise SchemaError(f"{path}: missing key {key!r}")
    return doc


def _render_hinton(spec: PlotSpec, ax):
    doc = _load_correlation(spec.inputs["correlation"])
    mat = np.abs(np.array(doc["correlation"]))
    n = len(mat)
    ax.set_facecolor("#404040")
    for i in range(n):
        for j in range(n):
            size = min(np.sqrt(mat[i, j]), 1.0)
            if size <= 0:
                continue
            ax.add_patch(plt.Rectangle((j - size / 2, i - size / 2),
                                       size, size, color="white"))
    ax.set_xlim(-0.6, n - 0.4)
    ax.set_ylim(n - 0.4, -0.6)
    ax.set_aspect("equal")
    ax.set_xlabel("qubit")
    ax.set_ylabel("qubit")


def _render_mi_layout(spec: PlotSpec, ax):
    doc = _load_correlation(spec.inputs["correlation"])
    patch = json.loads(Path(spec.inputs["patch"]).read_text())
    pos = {q["id"]: (q["x"], q["y"]) for q in patch["qubits"]}
    mi = np.array(doc["mutual_information"])
    threshold = float(spec.options.get("threshold", 0.003))
    vmax = max(mi.max(), threshold)
    n = len(doc["qubits"])
    for i in range(n):
        for j in range(i + 1, n):
            if mi[i, j] > threshold and i in pos and j in pos:
                (x1, y1), (x2, y2) = pos[i], pos[j]
                w = mi[i, j] / vmax
                ax.plot([x1, x2], [y1, y2], "-", color=plt.cm.plasma(w),
                        lw=0.5 + 3 * w, zorder=1)
    roles = {"Data": "#e8b816", "MeasureX": "#2d6cd0", "MeasureZ": "#c03020",
             "Via": "#909090", "Flag": "#909090", "Unused": "#d0d0d0"}
    for q in patch["qubits"]:
        ax.plot([q["x"]], [q["y"]], "o", ms=9,
                color=roles.get(q["role"], "0.5"), zorder=2)
        ax.annotate(str(q["id"]), (q["x"], q["y"]), ha="center", va="center",
                    fontsize=5, zorder=3)
    ax.invert_yaxis()
    ax.set_aspect("equal")
    ax.axis("off")


def render(spec: PlotSpec) -> str:
    """Render one figure; returns the output path."""
    if spec.kind == "sweep":
        fig = plt.figure(figsize=(11, 5))
        _render_sweep(spec, fig)
    else:
        fig, ax = plt.subplots(figsize=(5, 4))
        {"memory": _render_memory,
         "stability": _render_stability,
         "rb": _render_rb,
         "hinton": _render_hinton,
         "mi_layout": _render_mi_layout}[spec.kind](spec, ax)
    fig.tight_layout()
    fig.savefig(spec.output)
    plt.close(fig)
    return spec.output


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="hexqec-plot")
    ap.add_argument("--kind", choices=FIGURE_KINDS, required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--curve")
    ap.add_argument("--grid")
    ap.add_argument("--records")
    ap.add_argument("--correlation")
    ap.add_argument("--patch")
    ap.add_argument("--threshold", type=float, default=0.003)
    args = ap.parse_args(argv)
    inputs = {k: v for k, v in vars(args).items()
              if k in ("curve", "grid", "records", "correlation", "patch")
              and v}
    spec = PlotSpec(kind=args.kind, inputs=inputs, output=args.out,
                    options={"threshold": args.threshold})
    try:
        render(spec)
    except (SchemaError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
