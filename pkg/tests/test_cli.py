import csv
import io
import json
import subprocess
import sys

import pytest

from amap.cli import REPORT_COLUMNS, main
from amap.mapping_core import Mapping, validate_acyclic


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_sample_lines(capsys):
    code, out, err = run(["sample", "--n", "7", "--count", "3", "--seed", "5"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 3
    for line in lines:
        assert validate_acyclic(Mapping.from_json(line))
    assert "sampled 3" in err


def test_sample_is_reproducible(capsys):
    _, a, _ = run(["sample", "--n", "50", "--count", "4", "--seed", "11"], capsys)
    _, b, _ = run(["sample", "--n", "50", "--count", "4", "--seed", "11"], capsys)
    _, c, _ = run(["sample", "--n", "50", "--count", "4", "--seed", "12"], capsys)
    assert a == b and a != c


def test_encode_decode_files(tmp_path, capsys):
    src = tmp_path / "m.json"
    src.write_text(Mapping(3, (1, 1, 2)).to_json())
    path_file = tmp_path / "p.json"
    assert run(["encode", "--in", str(src), "--out", str(path_file)], capsys)[0] == 0
    assert json.loads(path_file.read_text()) == {"n": 3, "values": [0, 1, 2, 3, 2, 1, 0]}
    code, out, _ = run(["decode", "--in", str(path_file)], capsys)
    assert code == 0 and Mapping.from_json(out) == Mapping(3, (1, 1, 2))


def test_encode_cyclic_input_fails(tmp_path, capsys):
    src = tmp_path / "m.json"
    src.write_text(Mapping(2, (2, 1)).to_json())
    code, out, err = run(["encode", "--in", str(src)], capsys)
    assert code == 1 and out == ""
    assert "cycle" in err


def test_decode_bad_path_fails(tmp_path, capsys):
    src = tmp_path / "p.json"
    src.write_text('{"n": 1, "values": [0, 2, 0]}')
    assert run(["decode", "--in", str(src)], capsys)[0] == 1


def test_missing_file_fails(capsys):
    code, _, err = run(["encode", "--in", "/nonexistent/m.json"], capsys)
    assert code == 1 and "cannot read" in err


def test_chain_csv(capsys):
    code, out, _ = run(["chain", "--n", "30", "--steps", "100", "--stride", "10", "--seed", "3"], capsys)
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["step", "fixed-points", "height"]
    assert len(rows) == 11
    assert [int(r[0]) for r in rows[1:]] == list(range(10, 101, 10))


def test_chain_from_file_and_zero_steps(tmp_path, capsys):
    src = tmp_path / "m.json"
    src.write_text(Mapping(3, (1, 1, 2)).to_json())
    code, out, _ = run(["chain", "--in", str(src), "--steps", "0", "--observe", "fixed-points"], capsys)
    assert code == 0
    assert out.splitlines() == ["step,fixed-points", "0,1"]


def test_chain_errors(capsys):
    assert run(["chain", "--steps", "5"], capsys)[0] == 1
    assert run(["chain", "--n", "5", "--steps", "5", "--observe", "nope"], capsys)[0] == 1


@pytest.mark.parametrize("argv", [
    ["sample", "--n", "0"],
    ["sample", "--n", "x"],
    ["chain", "--n", "3", "--steps", "-1"],
    ["verify", "--suite", "nope"],
    ["tree-dist", "--a", "x.json"],
    [],
])
def test_argument_errors_exit_two(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2


def _tree(tmp_path, name, parent, lengths, mass):
    p = tmp_path / name
    p.write_text(json.dumps({"parent": parent, "edge_length": lengths, "mass": mass}))
    return str(p)


def test_tree_dist_exact_and_bracket(tmp_path, capsys):
    a = _tree(tmp_path, "a.json", [-1, 0], [0, 0.3], [0, 1])
    b = _tree(tmp_path, "b.json", [-1, 0], [0, 0.5], [0, 1])
    code, out, _ = run(["tree-dist", "--a", a, "--b", b], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["mode"] == "exact" and payload["delta"] == pytest.approx(0.2)
    code, out, _ = run(["tree-dist", "--a", a, "--b", b, "--mode", "bracket"], capsys)
    payload = json.loads(out)
    assert payload["lower"] <= 0.2 + 1e-12 <= payload["upper"] + 2e-12


def test_tree_dist_exact_too_large(tmp_path, capsys):
    big = _tree(tmp_path, "big.json", [-1] + [0] * 9, [0] + [1.0] * 9, [0.1] * 10)
    code, _, err = run(["tree-dist", "--a", big, "--b", big], capsys)
    assert code == 1 and "bracket" in err


def test_tree_dist_invalid_tree(tmp_path, capsys):
    bad = _tree(tmp_path, "bad.json", [-1, 0], [0, 1.0], [0.5, 0.1])
    assert run(["tree-dist", "--a", bad, "--b", bad], capsys)[0] == 1


def test_verify_csv_columns(capsys):
    code, out, err = run(["verify", "--suite", "disintegration", "--reps", "40", "--grid", "128"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert [r["name"] for r in rows] == ["disintegration", "disintegration_uniform_mark"]
    assert rows[0]["cutoff"] == "0.2" and rows[0]["reps"] == "40"
    assert "largest |z|" in err


def test_verify_convergence_reports_both_references(capsys):
    code, out, _ = run(["verify", "--suite", "convergence", "--reps", "20", "--n", "50"], capsys)
    assert code == 0
    names = [r["name"] for r in csv.DictReader(io.StringIO(out))]
    assert names == ["ks_midpoint_halfnorm(n=50)", "ks_midpoint_maxwell(n=50)"]


def test_verify_bad_grid_is_runtime_error(capsys):
    assert run(["verify", "--suite", "jump-square", "--reps", "10", "--grid", "1"], capsys)[0] == 1


def test_console_script_byte_identical(tmp_path):
    cmd = [sys.executable, "-m", "amap.cli", "verify", "--suite", "shifted-excursion",
           "--reps", "30", "--grid", "64", "--seed", "9"]
    a = subprocess.run(cmd, capture_output=True, check=True)
    b = subprocess.run(cmd, capture_output=True, check=True, env={"AMAP_THREADS": "2", "PATH": ""})
    assert a.stdout == b.stdout and len(a.stdout.splitlines()) == 8
    bad = subprocess.run([sys.executable, "-m", "amap.cli", "sample"], capture_output=True)
    assert bad.returncode == 2
