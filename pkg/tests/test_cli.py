import json

import numpy as np
import pytest

import holireg.cli as cli
from holireg.cli import main
from holireg.exceptions import ParseError, SingularMatrixError
from holireg.io import SCHEMA_VERSION, dump_report, read_csv, write_csv


def write(path, names, data):
    write_csv(path, names, data)
    return str(path)


def load(path):
    with open(path) as fh:
        return json.load(fh)


@pytest.mark.parametrize("body, fragment", [
    ("a,b\n1,2\n3,x\n", "line 3, column 'b'"),
    ("a,b\n1,2\n3\n", "line 3 has 1 fields"),
    ("a,b\n1,nan\n", "line 2, column 'b': non-finite"),
    ("a,b\n1,\n", "line 2, column 'b'"),
    ("a,a\n1,2\n", "duplicated"),
    ("a,\n1,2\n", "empty column name"),
    ("a,b\n", "no data rows"),
    ("", "empty"),
])
def test_csv_errors_name_location(tmp_path, body, fragment):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(ParseError, match=fragment):
        read_csv(path)


def test_csv_round_trip(tmp_path, rng):
    data = rng.normal(size=(7, 3))
    names, back = read_csv(write(tmp_path / "x.csv", ["a", "b", "c"], data))
    assert names == ["a", "b", "c"]
    assert np.array_equal(back, data)


def test_report_nulls_non_finite(tmp_path):
    text = dump_report(dict(a=np.nan, b=np.array([1.0, np.inf]), c=np.int64(2)),
                       tmp_path / "r.json")
    body = json.loads(text)
    assert body == dict(schema_version=SCHEMA_VERSION, a=None, b=[1.0, None], c=2)


def test_missing_target_is_parse_error(tmp_path, rng, capsys):
    path = write(tmp_path / "x.csv", ["a", "b"], rng.normal(size=(20, 2)))
    assert main(["fit", "--input", path, "--target", "nope"]) == 2
    assert "nope" in capsys.readouterr().err


def test_bad_cell_exit_code(tmp_path, capsys):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n1,2\n3,oops\n")
    assert main(["detect-mc", "--input", str(path)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_detect_duplicated_column(tmp_path, rng):
    X = rng.normal(size=(100, 4))
    X[:, 3] = X[:, 1]
    out = tmp_path / "r.json"
    path = write(tmp_path / "x.csv", ["a", "b", "c", "d"], X)
    assert main(["detect-mc", "--input", path, "--out", str(out)]) == 0
    rep = load(out)
    assert [r["support"] for r in rep["relations"]] == [["b", "d"]]
    assert rep["cuts"] == ["z1 + z3 <= 1"]


def test_detect_two_relations(tmp_path, rng):
    X = rng.normal(size=(200, 6))
    X[:, 2] = X[:, 0] + X[:, 1]
    X[:, 5] = X[:, 3] - 2 * X[:, 4]
    out = tmp_path / "r.json"
    path = write(tmp_path / "x.csv", [f"v{j}" for j in range(6)], X)
    assert main(["detect-mc", "--input", path, "--out", str(out)]) == 0
    found = sorted(r["indices"] for r in load(out)["relations"])
    assert found == [[0, 1, 2], [3, 4, 5]]


def test_detect_independent_columns(tmp_path, rng):
    out = tmp_path / "r.json"
    path = write(tmp_path / "x.csv", ["a", "b", "c"], rng.normal(size=(100, 3)))
    assert main(["detect-mc", "--input", path, "--out", str(out)]) == 0
    rep = load(out)
    assert rep["eigen"]["dim"] == 0 and rep["relations"] == []


def test_detect_leaves_target_out(tmp_path, rng):
    X = rng.normal(size=(100, 3))
    X[:, 2] = X[:, 0] + X[:, 1]
    out = tmp_path / "r.json"
    path = write(tmp_path / "x.csv", ["a", "b", "y"], X)
    assert main(["detect-mc", "--input", path, "--target", "y", "--out", str(out)]) == 0
    assert load(out)["relations"] == []


def test_synth_detect_round_trip(tmp_path):
    csv_path, rel = tmp_path / "x.csv", tmp_path / "planted.json"
    out = tmp_path / "r.json"
    assert main(["synth", "--n", "200", "--p", "20", "--noise", "0", "--seed", "3",
                 "--out", str(csv_path), "--relations", str(rel)]) == 0
    assert main(["detect-mc", "--input", str(csv_path), "--epsilon", "1",
                 "--out", str(out)]) == 0
    planted = sorted(r["indices"] for r in load(rel)["planted"])
    found = sorted(r["indices"] for r in load(out)["relations"])
    assert found == planted


def test_synth_requires_out():
    assert main(["synth"]) == 2


def test_bench_zero_instances(tmp_path):
    out = tmp_path / "b.json"
    assert main(["bench", "--instances", "0", "--out", str(out)]) == 0
    rep = load(out)
    assert rep["summary"] == dict(instances=0, status="complete")
    assert rep["runs"] == []


def test_bench_noiseless_is_exact(tmp_path):
    out = tmp_path / "b.json"
    assert main(["bench", "--instances", "3", "--noise", "0", "--out", str(out)]) == 0
    s = load(out)["summary"]
    assert (s["mean_acc"], s["mean_fpr"]) == (100.0, 0.0)


def test_bench_reports_are_reproducible(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        main(["bench", "--instances", "2", "--seed", "9", "--omit-timing", "--out", str(path)])
    ta, tb = a.read_text(), b.read_text()
    assert ta.replace(str(a), "") == tb.replace(str(b), "")
    assert "\"time\"" not in ta and "mean_time" not in ta


def test_bench_time_budget(tmp_path):
    out = tmp_path / "b.json"
    assert main(["bench", "--instances", "5", "--time-limit", "1e-9", "--out", str(out)]) == 4
    assert load(out)["summary"]["status"] == "budget_exhausted"


def sparse_design(seed, n=1500):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, 5))
    y = 2 * X[:, 0] - 1.5 * X[:, 2] + X[:, 4] + r.normal(size=n)
    return np.column_stack([X, y])


def test_fit_recovers_sparse_model(tmp_path):
    out = tmp_path / "fit.json"
    path = write(tmp_path / "x.csv", ["a", "b", "c", "d", "e", "y"], sparse_design(0))
    assert main(["fit", "--input", path, "--target", "y", "--gamma-grid", "0",
                 "--bootstrap", "200", "--out", str(out)]) == 0
    rep = load(out)
    res = rep["result"]
    assert res["support"] == ["a", "c", "e"]
    assert res["significance"] == 100.0
    assert rep["config"]["k_grid"] == [1, 2, 3, 4, 5]
    assert len(rep["coefficients"]) == 5


def test_fit_null_model(tmp_path):
    out = tmp_path / "fit.json"
    path = write(tmp_path / "x.csv", ["a", "b", "c", "d", "e", "y"], sparse_design(1, 200))
    assert main(["fit", "--input", path, "--target", "y", "--k-grid", "0",
                 "--gamma-grid", "0", "--out", str(out)]) == 0
    res = load(out)["result"]
    assert res["support"] == [] and res["significance"] is None


def test_fit_reports_are_reproducible(tmp_path):
    path = write(tmp_path / "x.csv", ["a", "b", "c", "d", "e", "y"], sparse_design(2, 300))
    texts = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        main(["fit", "--input", path, "--target", "y", "--k-grid", "1,2,3",
              "--gamma-grid", "0", "--bootstrap", "200", "--node-limit", "10000",
              "--omit-timing", "--out", str(out)])
        texts.append(out.read_text().replace(str(out), ""))
    assert texts[0] == texts[1]


@pytest.mark.parametrize("status, code", [("infeasible", 5), ("no_solution", 4)])
def test_fit_status_exit_codes(tmp_path, monkeypatch, status, code):
    real = cli.tune

    def fake(prob, setup):
        res = real(prob, setup)
        res.status = status
        return res

    monkeypatch.setattr(cli, "tune", fake)
    path = write(tmp_path / "x.csv", ["a", "b", "c", "d", "e", "y"], sparse_design(3, 100))
    assert main(["fit", "--input", path, "--target", "y", "--k-grid", "1",
                 "--gamma-grid", "0", "--out", str(tmp_path / "r.json")]) == code


def test_numeric_failure_exit_code(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise SingularMatrixError("singular")

    monkeypatch.setattr(cli, "small_eigenvectors", boom)
    path = write(tmp_path / "x.csv", ["a", "b"], np.eye(4)[:, :2] + 1.0)
    assert main(["detect-mc", "--input", path]) == 3
