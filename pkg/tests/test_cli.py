import csv
import io
import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from bagbw.cli import IngestConfig, ingest, jitter_ties, load_schema, main
from bagbw.errors import DataError
from bagbw.estimator import Dataset


def _write(path, rows, header=("x", "y"), delim=","):
    with open(path, "w") as fh:
        if header:
            fh.write(delim.join(header) + "\n")
        for r in rows:
            fh.write(delim.join(repr(float(v)) if not isinstance(v, str) else v for v in r) + "\n")
    return str(path)


@pytest.fixture
def m1_file(tmp_path, m1):
    d = m1.sample(1200, seed=3)
    g = np.arange(d.n) % 2
    return _write(tmp_path / "m1.csv", zip(d.x.tolist(), d.y.tolist(), g.astype(str)), header=("age", "days", "sex"))


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_ingest_simple(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("x,y\n1,2\n3,4\n5,6\n")
    d = ingest(IngestConfig(str(p), "x", "y"))
    np.testing.assert_array_equal(d.x, [1, 3, 5])
    np.testing.assert_array_equal(d.y, [2, 4, 6])


def test_ingest_names_bad_line(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("x,y\n1,2\n3,4\na,b\n5,6\n")
    with pytest.raises(DataError, match="line 4"):
        ingest(IngestConfig(str(p), "x", "y"))


def test_ingest_semicolon_twin(tmp_path):
    (tmp_path / "c.csv").write_text("x,y\n1,2\n3,4\n5,6\n")
    (tmp_path / "s.csv").write_text("x;y\n1;2\n3;4\n5;6\n")
    a = ingest(IngestConfig(str(tmp_path / "c.csv"), "x", "y"))
    b = ingest(IngestConfig(str(tmp_path / "s.csv"), "x", "y", delimiter=";"))
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.y, b.y)


def test_ingest_errors(tmp_path):
    with pytest.raises(DataError):
        ingest(IngestConfig(str(tmp_path / "missing.csv")))
    p = tmp_path / "a.csv"
    p.write_text("x,y\n1,2\n")
    with pytest.raises(DataError):
        ingest(IngestConfig(str(p), "x", "y"))
    p.write_text("x,y\n1,2\n3,4\n")
    with pytest.raises(DataError):
        ingest(IngestConfig(str(p), "x", "nope"))
    with pytest.raises(DataError):
        ingest(IngestConfig(str(p), "x", "y", filter=("g", "1")))


def test_ingest_by_index_without_header(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("9,1,2\n9,3,4\n")
    d = ingest(IngestConfig(str(p), "1", "2", header=False))
    np.testing.assert_array_equal(d.x, [1, 3])


def test_jitter_properties():
    x = np.repeat(np.arange(100.0), 100)
    y = np.zeros_like(x)
    j = jitter_ties(Dataset(x, y), 5)
    gap = j.x - x
    assert np.all((gap > 0) & (gap < 1))
    assert np.all(np.abs(j.y - y) < 1)
    assert np.unique(j.x).size == x.size
    np.testing.assert_array_equal(jitter_ties(Dataset(x, y), 5).x, j.x)


def test_select_cv_json_validates(capsys, m1_file):
    code, out, _ = run(capsys, "select", "cv", m1_file, "--x", "age", "--y", "days")
    assert code == 0
    res = json.loads(out)
    jsonschema.validate(res, load_schema("select_result"))
    assert res["method"] == "cv" and res["bins"] == 120 and res["h"] > 0


def test_bagged_single_full_subsample_equals_cv(capsys, m1_file):
    _, out_cv, _ = run(capsys, "select", "cv", m1_file, "--x", "age", "--y", "days", "--bins", "100")
    _, out_bag, _ = run(capsys, "select", "bagged", m1_file, "--x", "age", "--y", "days", "--N", "1", "--r", "1200", "--bins", "100", "--workers", "1")
    a, b = json.loads(out_cv), json.loads(out_bag)
    jsonschema.validate(b, load_schema("select_result"))
    assert abs(a["h"] - b["h"]) <= 1e-10 * a["h"]
    assert b["per_subsample"] == [b["h"]]


def test_seed_flag_and_env(capsys, m1_file, monkeypatch):
    args = ("select", "bagged", m1_file, "--x", "age", "--y", "days", "--r", "200", "--N", "4")
    monkeypatch.setenv("BAGBW_SEED", "11")
    _, env_out, _ = run(capsys, *args)
    _, flag_out, _ = run(capsys, *args, "--seed", "11")
    _, other, _ = run(capsys, *args, "--seed", "12")
    e, f, o = json.loads(env_out), json.loads(flag_out), json.loads(other)
    assert e["seed"] == 11 and e["h"] == f["h"] and e["per_subsample"] == f["per_subsample"]
    assert o["h"] != f["h"]
    monkeypatch.setenv("BAGBW_SEED", "nonsense")
    assert run(capsys, *args)[0] == 2
    _, win, _ = run(capsys, *args, "--seed", "12")
    assert json.loads(win)["h"] == o["h"]


def test_usage_errors(capsys, m1_file):
    assert run(capsys, "select", "bagged", m1_file, "--r", "100", "--auto-r0")[0] == 2
    assert run(capsys, "select", "bagged", m1_file)[0] == 2
    assert run(capsys, "fit", m1_file)[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "no-such-experiment"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "sn-dist", "--model", "M9"])
    assert exc.value.code == 2


def test_data_and_numeric_exit_codes(capsys, tmp_path, m1_file):
    assert run(capsys, "select", "cv", str(tmp_path / "none.csv"))[0] == 3
    assert run(capsys, "fit", m1_file, "--x", "age", "--y", "days", "--h", "-1")[0] == 3
    assert run(capsys, "fit", m1_file, "--x", "age", "--y", "days", "--h", "0.1", "--filter", "nope=1")[0] == 3
    flat = _write(tmp_path / "flat.csv", [(1.0, float(i)) for i in range(30)])
    code, _, err = run(capsys, "select", "bagged", flat, "--r", "10", "--N", "3")
    assert code == 4 and "numerical" in err


def test_fit_constant_response(capsys, tmp_path):
    p = _write(tmp_path / "c.csv", [(float(i) / 7, 2.5) for i in range(40)])
    code, out, _ = run(capsys, "fit", p, "--h", "0.1", "--grid-points", "11")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["grid", "value"] and len(rows) == 12
    assert all(float(v) == 2.5 for _, v in rows[1:])


def test_fit_ecdf_grid_spans_data(capsys, m1_file, m1):
    code, out, _ = run(capsys, "fit", m1_file, "--x", "age", "--y", "days", "--h", "0.05", "--ecdf", "--grid-points", "21")
    assert code == 0
    grid = np.array([float(r[0]) for r in list(csv.reader(io.StringIO(out)))[1:]])
    d = m1.sample(1200, seed=3)
    assert grid[0] == d.x.min() and grid[-1] == d.x.max()
    assert np.all(np.diff(grid) >= 0)


def test_fit_filter_subgroup(capsys, m1_file):
    code, out, err = run(capsys, "fit", m1_file, "--x", "age", "--y", "days", "--method", "cv", "--filter", "sex=1", "--grid-points", "5")
    assert code == 0 and json.loads(err.strip().splitlines()[-1])["h"] > 0


def test_fit_selected_curve_covers_truth(capsys, tmp_path, m2):
    d = m2.sample(2000, seed=21)
    p = _write(tmp_path / "m2.csv", zip(d.x.tolist(), d.y.tolist()))
    code, out, _ = run(capsys, "fit", p, "--method", "cv")
    assert code == 0
    rows = np.array([[float(a), float(b)] for a, b in list(csv.reader(io.StringIO(out)))[1:]])
    g, v = rows[:, 0], rows[:, 1]
    lo, hi = np.quantile(d.x, [0.05, 0.95])
    inner = (g >= lo) & (g <= hi)
    within = np.abs(v[inner] - m2.model.m(g[inner])) <= 3 * m2.noise_sd
    assert within.mean() >= 0.9


def test_simulate_byte_identical(tmp_path, capsys):
    args = ["simulate", "mse-ratio", "--model", "M1", "--n", "400", "--r", "50,100", "--N", "5", "--reps", "5", "--oracle-reps", "5", "--seed", "7"]
    assert run(capsys, *args, "--out-dir", str(tmp_path / "a"))[0] == 0
    assert run(capsys, *args, "--out-dir", str(tmp_path / "b"))[0] == 0
    ja = (tmp_path / "a" / "mse-ratio_M1_seed7.json").read_bytes()
    assert ja == (tmp_path / "b" / "mse-ratio_M1_seed7.json").read_bytes()
    assert (tmp_path / "a" / "mse-ratio_M1_seed7.csv").read_bytes() == (tmp_path / "b" / "mse-ratio_M1_seed7.csv").read_bytes()
    report = json.loads(ja)
    jsonschema.validate(report, load_schema("report"))
    rows = list(csv.reader(open(tmp_path / "a" / "mse-ratio_M1_seed7.csv", newline="")))
    assert rows[0] == ["replicate", "parameter", "value"] and len(rows) == 1 + 5 * 3


def test_simulate_timing_csv(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "timing", "--n", "500,1000,2000", "--N", "3", "--out-dir", str(tmp_path))
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "timing_M1_seed0.csv", newline="")))
    assert rows[0] == ["method", "n", "r", "seconds", "alpha", "beta"]
    assert len(rows) == 1 + 3 * 4
    assert {r[0] for r in rows[1:]} == {"cv", "bagged_r=n^0.7", "bagged_r=n^0.8", "bagged_r=n^0.9"}
    jsonschema.validate(json.loads((tmp_path / "timing_M1_seed0.json").read_text()), load_schema("report"))
    code, _, _ = run(capsys, "simulate", "timing", "--n", "500,1000", "--out-dir", str(tmp_path))
    assert code == 4


def test_console_script(m1_file):
    out = subprocess.run(
        [sys.executable, "-m", "bagbw.cli", "select", "cv", m1_file, "--x", "age", "--y", "days"],
        capture_output=True, text=True, check=True,
    )
    assert json.loads(out.stdout)["method"] == "cv"
