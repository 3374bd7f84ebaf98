import json

import numpy as np
import pytest

from bipho import export, paths
from bipho.analysis import correlation_map, fraction_curve
from bipho.correlation import CorrelationTrace, TraceMeta, expected_trace
from bipho.density import pure_state
from bipho.errors import InvalidParameterError
from bipho.montecarlo import EnsembleConfig, run_ensemble
from bipho.shaper import random_dephaser

TAU = np.arange(-200.0, 201.0, 20.0)


def test_trace_csv_and_sidecar(tmp_path, small_spec):
    trace, stats = run_ensemble(small_spec, EnsembleConfig(n_realizations=64, sigma=0.5, master_seed=3), TAU)
    written = export.write_trace(trace, tmp_path, paths.trace_stem(0.5), stats=stats, extra={"grid": {"n_pos": 16}})
    assert [p.name for p in written] == ["trace_sigma_0.5.csv", "trace_sigma_0.5.json"]

    lines = written[0].read_text().splitlines()
    assert lines[0] == "tau_fs,value_hz,stderr_hz"
    assert len(lines) == TAU.size + 1

    side = json.loads(written[1].read_text())
    assert side["meta"] == {"sigma": 0.5, "n_realizations": 64, "seed": 3, "kind": "split", "clipped": False}
    assert side["grid"] == {"n_pos": 16}
    assert "wall_time_s" not in side["stats"]

    back, sidecar = export.read_trace(written[0])
    assert sidecar is not None
    assert back.meta == trace.meta
    assert np.array_equal(back.value, trace.value)
    assert np.array_equal(back.stderr, trace.stderr)


def test_trace_without_sidecar_is_a_measurement(tmp_path):
    p = tmp_path / "measured.csv"
    p.write_text("tau_fs,value_hz,stderr_hz\n-1,10,1\n0,20,1\n1,-3,1\n")
    trace, sidecar = export.read_trace(p)
    assert sidecar is None
    assert trace.meta.kind == "measured-sim"
    assert trace.at(0.0) == 20.0


@pytest.mark.parametrize(
    "text, where",
    [
        ("tau,value,stderr\n0,1,0\n", "line 1"),
        ("tau_fs,value_hz,stderr_hz\n0,1\n", "line 2"),
        ("tau_fs,value_hz,stderr_hz\n0,1,0\n1,x,0\n", "line 3"),
        ("tau_fs,value_hz,stderr_hz\n", "no data"),
        ("", "empty"),
    ],
)
def test_malformed_trace_csv(tmp_path, text, where):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(InvalidParameterError, match=where):
        export.read_trace(p)


def test_formats_option(tmp_path):
    tr = CorrelationTrace(tau=[0.0, 1.0], value=[1.0, 2.0], stderr=[0.0, 0.0], meta=TraceMeta(kind="split"))
    written = export.write_trace(tr, tmp_path, "only_csv", formats=("csv",))
    assert [p.suffix for p in written] == [".csv"]


def test_curve_files(tmp_path):
    entangled, _ = fraction_curve([0.0, 1.0, 2.0])
    csv_path, json_path = export.write_curve(entangled, tmp_path)
    assert csv_path.name == "fraction_entangled.csv"
    assert csv_path.read_text().splitlines()[0] == "sigma_rad,value,stderr"
    assert json.loads(json_path.read_text())["sigma_rad"] == [0.0, 1.0, 2.0]


def test_matrix_and_mask_csv(tmp_path, small_spec, small_grid):
    p = export.write_matrix_csv(pure_state(small_spec), tmp_path / "rho.csv")
    lines = p.read_text().splitlines()
    assert lines[0] == "row,col,re,im"
    assert len(lines) == small_grid.n_pos**2 + 1
    assert lines[1].startswith("0,0,")

    m = export.write_mask_csv(random_dephaser(1.0, 0, small_grid), tmp_path / "mask.csv")
    rows = m.read_text().splitlines()
    assert rows[0] == "omega_rad_per_fs,re,im"
    assert len(rows) == small_grid.size + 1


def test_list_traces_sorted_by_sigma(tmp_path, small_spec):
    tdir = paths.traces_dir(tmp_path)
    paths.ensure_dirs(tmp_path)
    for s in (2.0, 0.0, 10.0):
        tr, _ = run_ensemble(small_spec, EnsembleConfig(n_realizations=4, sigma=s), TAU)
        export.write_trace(tr, tdir, paths.trace_stem(s))
    assert [i["sigma"] for i in export.list_traces(tmp_path)] == [0.0, 2.0, 10.0]


def test_read_json_needs_object(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("[1, 2]")
    with pytest.raises(InvalidParameterError):
        export.read_json(p)


def test_map_csv_is_sigma_major(tmp_path, small_spec):
    cmap = correlation_map([expected_trace(small_spec, s, TAU) for s in (1.0, 0.0)])
    csv_path, json_path = export.write_map(cmap, tmp_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "sigma_rad,tau_fs,value_hz,stderr_hz"
    assert len(lines) == 1 + 2 * TAU.size
    first = [float(c) for c in lines[1].split(",")]
    assert first == [0.0, float(TAU[0]), float(cmap.value[0, 0]), 0.0]
    last = [float(c) for c in lines[-1].split(",")]
    assert last[:2] == [1.0, float(TAU[-1])]
    assert last[2] == float(cmap.value[1, -1])
    meta = json.loads(json_path.read_text())
    assert meta["shape"] == [2, TAU.size]
    assert meta["sigma_rad"] == [0.0, 1.0]
