import csv
import io
import json

import pytest

from varest.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_no_command(capsys):
    code, _, err = run_cli(capsys)
    assert code == 1 and "usage" in err


def test_compare_without_args(capsys):
    code, _, err = run_cli(capsys, "compare")
    assert code == 1 and "usage" in err


def test_params_json(capsys, apple_file):
    code, out, _ = run_cli(capsys, "params", "--params", str(apple_file))
    doc = json.loads(out)
    assert code == 0 and doc["N"] == 104
    assert doc["beta2_y_star"] == pytest.approx(15.523)


def test_params_csv(capsys, tiny_file):
    code, out, _ = run_cli(capsys, "params", "--data", str(tiny_file), "--out", "csv")
    rows = dict(csv.reader(io.StringIO(out)))
    assert code == 0 and float(rows["S_y2"]) == 1.0


def test_compare_markdown(capsys, apple_file):
    code, out, _ = run_cli(capsys, "compare", "--params", str(apple_file), "--n", "20")
    assert code == 0
    assert "S_KC^2" in out and "(breakdown)" in out and "3927.178" in out


def test_compare_extra_t_row(capsys, apple_file):
    code, out, _ = run_cli(capsys, "compare", "--params", str(apple_file), "--specs", "usual",
                           "--t", "2,1,3,1", "--out", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 2
    assert rows[1]["estimator"].startswith("t:m=2,w=1,c=3,d=1,w1=")


def test_compare_strict(capsys, apple_file):
    code, _, err = run_cli(capsys, "compare", "--params", str(apple_file),
                           "--specs", "t:m=-1,w=1,c=2,d=1,opt", "--strict")
    assert code == 3 and "breakdown" in err
    code, _, _ = run_cli(capsys, "compare", "--params", str(apple_file), "--specs", "usual", "--strict")
    assert code == 0


def test_enumerate_tiny(capsys, tiny_file):
    code, out, _ = run_cli(capsys, "enumerate", "--data", str(tiny_file), "--n", "2",
                           "--specs", "usual", "ratio", "--out", "json")
    doc = json.loads(out)
    assert code == 0
    assert doc[0]["mse"] == 0.5 and doc[1]["mse"] == 0.0


def test_simulate_small_sample_warning(capsys, tiny_file):
    code, out, _ = run_cli(capsys, "simulate", "--data", str(tiny_file), "--n", "2", "--reps", "5000",
                           "--seed", "1", "--specs", "usual")
    assert code == 0 and "small sample" in out


def test_bad_spec_is_a_data_error(capsys, tiny_file):
    code, _, err = run_cli(capsys, "enumerate", "--data", str(tiny_file), "--n", "2", "--specs", "kc:7")
    assert code == 2 and "InvalidSpec" in err


def test_missing_file(capsys, tmp_path):
    code, _, err = run_cli(capsys, "params", "--data", str(tmp_path / "none.csv"))
    assert code == 2


def test_search(capsys, apple_file):
    code, out, _ = run_cli(capsys, "search", "--params", str(apple_file), "--m=-1:1:1", "--w", "1",
                           "--cd", "2,1", "--no-refine", "--out", "json")
    doc = json.loads(out)
    assert code == 0 and len(doc) == 3
    assert doc[-1]["error"] is not None


def test_search_target(capsys, apple_file):
    code, out, _ = run_cli(capsys, "search", "--params", str(apple_file), "--target", "347.6189")
    assert code == 0 and "grid point(s) within" in out


def test_variant_choice(capsys, apple_file):
    code, _, _ = run_cli(capsys, "compare", "--params", str(apple_file), "--variant", "other")
    assert code == 1
