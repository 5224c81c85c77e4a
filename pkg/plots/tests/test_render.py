"""Smoke-render every figure kind from golden fixtures."""

import json

import pytest

from hexqec_plots import PlotSpec, SchemaError, render

MEMORY_CSV = """t,survival,stderr,fit_survival
1,0.8726,0.0021,0.8709
2,0.8219,0.0024,0.8211
3,0.7713,0.0027,0.7741
4,0.7287,0.0028,0.7298
6,0.6476,0.003,0.6487
8,0.5767,0.0031,0.5766
"""

STABILITY_CSV = """t,rate,stderr,excluded,fit_rate
1,0.441,0.0035,1,0.4637
2,0.3901,0.0035,1,0.4043
3,0.355,0.0034,0,0.3525
4,0.3024,0.0032,0,0.3074
6,0.2372,0.003,0,0.2337
8,0.189,0.0028,0,0.1777
10,0.1395,0.0024,0,0.1351
"""

SWEEP_CSV = """parameter,factor,reset_mode,experiment,decay,decay_err
p_2q,1,nr,memory,0.9428,0.0004
p_2q,0.1,nr,memory,0.9702,0.0003
p_2q,0.01,nr,memory,0.9733,0.0003
p_2q,1,nr,stability,0.8717,0.0013
p_2q,0.1,nr,stability,0.8345,0.0015
p_2q,0.01,nr,stability,0.8301,0.0015
p_cmeas,1,nr,memory,0.9428,0.0004
p_cmeas,0.1,nr,memory,0.9615,0.0003
p_cmeas,0.01,nr,memory,0.9633,0.0003
p_cmeas,1,nr,stability,0.8717,0.0013
p_cmeas,0.1,nr,stability,0.6071,0.0034
p_cmeas,0.01,nr,stability,0.5612,0.004
"""

RB_CSV = """qubit,m,sequence,target_one,survival
0,2,0,0,0.9912
0,2,1,1,0.9871
0,6,0,0,0.9607
0,6,1,1,0.9544
0,10,0,0,0.9266
0,10,1,1,0.9199
0,16,0,1,0.8861
0,16,1,0,0.8922
"""

CORRELATION_JSON = {
    "qubits": [0, 1, 2],
    "marginal_fidelity": [0.92, 0.93, 0.91],
    "correlation": [[1.0, 0.21, 0.02], [0.21, 1.0, 0.05],
                    [0.02, 0.05, 1.0]],
    "mutual_information": [[0.0, 0.031, 0.001], [0.031, 0.0, 0.002],
                           [0.001, 0.002, 0.0]],
}

PATCH_JSON = {
    "kind": "memory", "distance": 3,
    "qubits": [{"id": 0, "x": 0, "y": 0, "role": "Data"},
               {"id": 1, "x": 2, "y": 0, "role": "Data"},
               {"id": 2, "x": 1, "y": 0, "role": "MeasureZ"}],
    "couplings": [[0, 2], [2, 1]],
    "checks": [], "stabilizers": [], "observables": [],
}


@pytest.fixture
def fixtures(tmp_path):
    paths = {}
    for name, text in (("memory.csv", MEMORY_CSV),
                       ("stability.csv", STABILITY_CSV),
                       ("sweep.csv", SWEEP_CSV),
                       ("rb.csv", RB_CSV)):
        p = tmp_path / name
        p.write_text(text)
        paths[name] = str(p)
    corr = tmp_path / "correlation.json"
    corr.write_text(json.dumps(CORRELATION_JSON))
    paths["correlation.json"] = str(corr)
    patch = tmp_path / "patch.json"
    patch.write_text(json.dumps(PATCH_JSON))
    paths["patch.json"] = str(patch)
    return paths


def test_memory_semilog_with_rescaled_survival(fixtures, tmp_path):
    out = str(tmp_path / "memory.svg")
    spec = PlotSpec("memory", {"curve": fixtures["memory.csv"]}, out)
    assert render(spec) == out
    svg = open(out).read()
    assert "<svg" in svg

    # the memory panel is semi-log in the rescaled survival
    import matplotlib.pyplot as plt
    from hexqec_plots.render import _render_memory
    fig, ax = plt.subplots()
    _render_memory(spec, ax)
    assert ax.get_yscale() == "log"
    assert "1 - 2 p_fail" in ax.get_ylabel()
    plt.close(fig)


def test_stability_renders(fixtures, tmp_path):
    out = str(tmp_path / "stability.pdf")
    render(PlotSpec("stability", {"curve": fixtures["stability.csv"]}, out))
    assert (tmp_path / "stability.pdf").stat().st_size > 0


def test_sweep_grid_renders(fixtures, tmp_path):
    out = str(tmp_path / "sweep.svg")
    render(PlotSpec("sweep", {"grid": fixtures["sweep.csv"]}, out))
    assert (tmp_path / "sweep.svg").stat().st_size > 0


def test_rb_scatter_renders(fixtures, tmp_path):
    out = str(tmp_path / "rb.svg")
    render(PlotSpec("rb", {"records": fixtures["rb.csv"]}, out))
    assert (tmp_path / "rb.svg").stat().st_size > 0


def test_hinton_and_layout_render(fixtures, tmp_path):
    render(PlotSpec("hinton", {"correlation": fixtures["correlation.json"]},
                    str(tmp_path / "hinton.svg")))
    render(PlotSpec("mi_layout",
                    {"correlation": fixtures["correlation.json"],
                     "patch": fixtures["patch.json"]},
                    str(tmp_path / "mi.svg")))
    assert (tmp_path / "hinton.svg").stat().st_size > 0
    assert (tmp_path / "mi.svg").stat().st_size > 0


def test_schema_mismatch_fails_loudly(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(SchemaError):
        render(PlotSpec("memory", {"curve": str(bad)},
                        str(tmp_path / "x.svg")))
    empty = tmp_path / "empty.csv"
    empty.write_text("t,survival,stderr,fit_survival\n")
    with pytest.raises(SchemaError):
        render(PlotSpec("memory", {"curve": str(empty)},
                        str(tmp_path / "y.svg")))


def test_unknown_kind_and_raster_output_rejected(tmp_path):
    with pytest.raises(ValueError):
        PlotSpec("pie", {}, str(tmp_path / "x.svg"))
    with pytest.raises(ValueError):
        PlotSpec("memory", {}, str(tmp_path / "x.png"))
