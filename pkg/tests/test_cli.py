import csv
import json

import pytest

from symlab.cli import build_parser, main
from symlab.field import read_fld

COLS = ["eps", "delta_f", "osc", "kappa0", "kappa1", "linf_asym", "d12_asym", "rad_deriv_max", "lam1", "lam2",
        "lam3", "status"]


@pytest.fixture(scope="module")
def bubble_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("cli") / "u.fld"
    assert main(["bubble", "--h", "0.25", "--center", "0.5,0,0", "--out", str(p)]) == 0
    return p


def test_bubble_writes_fld(bubble_file, capsys):
    u = read_fld(bubble_file)
    assert u.shape == (33, 33, 33) and u.tail is not None
    main(["bubble", "--h", "0.25"])
    out = json.loads(capsys.readouterr().out)
    assert out["residual_max"] > 0 and out["shape"] == [33, 33, 33]


def test_deficit_keys(bubble_file, capsys):
    assert main(["deficit", str(bubble_file), "--kappa", "constant"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert set(rep) == {"delta_f", "kappa1", "kappa0", "delta_tilde", "osc", "f_norm"}
    assert abs(rep["delta_f"]) < 1e-9


def test_scan_one_direction(bubble_file, tmp_path, capsys):
    c = tmp_path / "scan.csv"
    assert main(["scan", str(bubble_file), "--omega", "1,0,0", "--tolerance", "1e-3", "--csv", str(c)]) == 0
    res = json.loads(capsys.readouterr().out)
    assert abs(res["lambda_star"] - 0.5) <= 0.5
    assert next(csv.reader(open(c))) == ["lambda", "sup_excess", "l2star_excess"]


def test_scan_center(bubble_file, capsys):
    assert main(["scan", str(bubble_file), "--tolerance", "3e-3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["center"]["center"][0] - 0.5) <= 0.5


def test_bad_file_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.fld"
    p.write_bytes(b"FLD1\ndim 3\nshape 2 2 2\norigin 0 0 0\nspacing 1\n\n" + b"\0" * 8)
    assert main(["deficit", str(p)]) == 2
    assert "FormatError" in capsys.readouterr().err


def test_small_sweep_and_report(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grid_points": 17, "rotations": 2, "sphere_samples": 64, "radii": 6,
                               "eps_count": 4, "continuation_steps": 1}))
    out = tmp_path / "o"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    capsys.readouterr()
    rows = list(csv.reader(open(out / "report.csv")))
    assert rows[0] == COLS and len(rows) == 5
    rep = json.loads((out / "report.json").read_text())
    assert {"fits", "verdicts", "floors", "rows", "stamp"} <= set(rep)
    # rows at the discretization floor are excluded, so verdicts are SKIPPED rather than invented
    for v in rep["verdicts"].values():
        assert v["verdict"] in ("PASS", "FAIL", "SKIPPED")
    assert main(["report", str(out / "report.csv"), "--out", str(tmp_path / "r.json")]) == 0
    assert "verdicts" in json.loads((tmp_path / "r.json").read_text())


def test_parser_subcommands():
    p = build_parser()
    for cmd in ("bubble", "solve", "deficit", "scan", "sweep", "report"):
        assert p.parse_args([cmd] + (["x"] if cmd in ("deficit", "scan", "report") else [])).cmd == cmd
