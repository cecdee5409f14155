import io
import json
import subprocess
import sys

import pytest

from stepset.cli import EXIT_DATA, EXIT_FAILED, EXIT_OK, EXIT_USAGE, main


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def pfile(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("p\n0.034\n0.06\n1\n")
    return str(path)


@pytest.fixture
def csvfile(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("gene,pval\na,0.034\nb,0.06\nc,1\n")
    return str(path)


def test_eval_table(pfile):
    code, out, err = run("eval", "--expr", "bh(0.1)", "--input", pfile)
    assert code == EXIT_OK
    assert "rejected: 1, 2\n" in out
    assert out.splitlines()[-1].split() == ["3", "1", "3", "0.1", "no"]
    assert err == ""


def test_eval_json(pfile):
    code, out, _ = run("eval", "--expr", "intersect(bh(alpha), sidak_sd(alpha))", "--alpha", "0.1",
                       "--input", pfile, "--format", "json")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["schema"] == "stepset.eval/1"
    assert doc["rejected"] == [1]
    assert doc["strategy"] == "output-level"
    assert doc["claims"] == {"monotonic": "guaranteed", "well_behaved": "not-guaranteed"}
    assert doc["warnings"]
    assert [r["threshold"] for r in doc["ranks"]] == [None, None, None]


def test_eval_json_is_byte_identical(pfile):
    args = ("eval", "--expr", "bh(0.1)", "--input", pfile, "--format", "json")
    assert run(*args)[1] == run(*args)[1]


def test_eval_csv_column(csvfile):
    code, out, _ = run("eval", "--expr", "bh(0.1)", "--input", csvfile, "--column", "pval", "--format", "json")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["rejected"] == [1, 2]
    assert doc["ranks"][0]["threshold"] == pytest.approx(0.1 / 3, rel=1e-5)


def test_eval_warns_in_table_mode(pfile):
    _code, _out, err = run("eval", "--expr", "topk(1)", "--input", pfile)
    assert "not guaranteed" in err


@pytest.mark.parametrize(
    "content, message",
    [("0.1\nabc\n", ":2: not a number"), ("0.1\n1.2\n", ":2: p-value 1.2 outside"), ("", "no p-values")],
)
def test_data_errors(tmp_path, content, message):
    path = tmp_path / "bad.txt"
    path.write_text(content)
    code, _out, err = run("eval", "--expr", "bh(0.1)", "--input", str(path))
    assert code == EXIT_DATA
    assert message in err


def test_missing_file(tmp_path):
    code, _out, _err = run("eval", "--expr", "bh(0.1)", "--input", str(tmp_path / "none.txt"))
    assert code == EXIT_DATA


def test_missing_column(csvfile):
    code, _out, err = run("eval", "--expr", "bh(0.1)", "--input", csvfile, "--column", "q")
    assert code == EXIT_DATA and "no column" in err


@pytest.mark.parametrize(
    "expr",
    ["bh(0.1", "fdr(0.1)", "bh(2)", "complement(bh(alpha), alpha)", "topk(5)", "bh(alpha)"],
)
def test_usage_errors(pfile, expr):
    code, _out, err = run("eval", "--expr", expr, "--input", pfile)
    assert code == EXIT_USAGE
    assert err.startswith("error:")


def test_parse_error_points_at_span(pfile):
    _code, _out, err = run("eval", "--expr", "fdr(0.1)", "--input", pfile)
    assert "  fdr(0.1)\n  ^^^" in err


def test_bad_arguments():
    assert run("eval", "--expr", "bh(0.1)")[0] == EXIT_USAGE
    assert run("check", "--expr", "bh(0.1)", "--m-range", "5:2")[0] == EXIT_USAGE
    assert run("check", "--expr", "bh(0.1)", "--trials", "0")[0] == EXIT_USAGE


def test_check_guaranteed_passes():
    code, out, _ = run("check", "--expr", "union(bh(alpha), hochberg(alpha))", "--trials", "200", "--format", "json")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["schema"] == "stepset.check/1"
    assert doc["ok"] is True
    names = [p["property"] for p in doc["properties"]]
    assert names == ["monotonicity", "condition1-part1", "condition1-part2", "condition2", "oracle-equivalence"]


def test_check_not_guaranteed_violations_are_reported_not_failed():
    code, out, _ = run("check", "--expr", "complement(bh(0.05), 0.05)", "--trials", "200", "--format", "json")
    assert code == EXIT_OK
    mono = json.loads(out)["properties"][0]
    assert mono["claim"] == "not-guaranteed"
    assert not mono["passed"] and mono["first_witness"]["p"]


def test_check_guaranteed_violation_fails():
    # the min-threshold fusion of crossing step-up thresholds is not the intersection
    code, out, _ = run("check", "--expr", "intersect(sidak_su(alpha), bh(alpha))", "--trials", "3000")
    assert code == EXIT_FAILED
    assert "oracle-equivalence" in out and "claimed guaranteed" in out


def test_check_json_is_deterministic():
    args = ("check", "--expr", "holm(alpha)", "--trials", "100", "--seed", "5", "--format", "json")
    assert run(*args)[1] == run(*args)[1]


def test_plot_data(pfile):
    code, out, _ = run("plot-data", "--expr", "bh(0.1)", "--input", pfile)
    assert code == EXIT_OK
    assert out.splitlines() == [
        "rank,sorted_pvalue,threshold,rejected",
        "1,0.034,0.0333333,1",
        "2,0.06,0.0666667,1",
        "3,1,0.1,0",
    ]


def test_plot_data_complement_on_p_scale(pfile):
    code, out, _ = run("plot-data", "--expr", "complement(bh(0.1), 0.1)", "--input", pfile)
    assert code == EXIT_OK
    rows = [line.split(",") for line in out.splitlines()[1:]]
    assert [r[2] for r in rows] == ["0.0333333", "0.0666667", "0.1"]
    assert [r[3] for r in rows] == ["0", "0", "1"]


def test_plot_data_output_level(pfile):
    code, _out, err = run("plot-data", "--expr", "union(bh(0.1), holm(0.1))", "--input", pfile)
    assert code == EXIT_USAGE and "no closed-form threshold" in err


def test_module_entry_point(pfile):
    proc = subprocess.run(
        [sys.executable, "-m", "stepset", "eval", "--expr", "bh(0.1)", "--input", pfile, "--format", "json"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["rejected"] == [1, 2]
