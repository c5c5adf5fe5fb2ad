import json

import pytest

from pdnfem.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_dim_audit_mismatch_exit_1(capsys):
    code, out = run(capsys, "dim-audit", "--space", "W2", "--p", "2", "--mesh", "single-tet")
    assert code == 1
    assert "MISMATCH" in out.out and ",24,30,30," in out.out


def test_dim_audit_match(capsys):
    code, out = run(capsys, "dim-audit", "--space", "V0,W1", "--p", "4", "--mesh", "single-tet")
    rows = out.out.strip().splitlines()[1:]
    assert code == 0 and len(rows) == 2 and all(r.endswith(",match") for r in rows)


def test_exactness_v(capsys):
    code, out = run(capsys, "exactness", "--complex", "V", "--p", "3", "--mesh", "single-tet")
    assert code == 0
    assert "V,alternating sum,0,true" in out.out


def test_maxwell2d_table(capsys):
    code, out = run(capsys, "maxwell2d", "--element", "hrot", "--p", "2", "--n", "2",
                    "--format", "json")
    rows = json.loads(out.out)
    assert code == 0
    assert [r["exact"] for r in rows[:4]] == [1, 1, 2, 4]


def test_mesh_info(capsys):
    code, out = run(capsys, "mesh-info", "--mesh", "structured", "--dim", "3", "--n", "1")
    assert code == 0 and "8,19,18,6,1,12" in out.out


def test_mesh_file(capsys, tmp_path):
    from pdnfem.mesh import build_structured_2d, write_mesh
    p = tmp_path / "m.txt"
    write_mesh(build_structured_2d(2), p)
    code, out = run(capsys, "mesh-info", "--mesh-file", str(p), "--split", "ct")
    assert code == 0 and ",2,17,40,24,1,8," in out.out


def test_tabulate(capsys):
    code, out = run(capsys, "tabulate-basis", "--element", "hrot_tri", "--p", "2",
                    "--points", "1,0,0")
    lines = out.out.strip().splitlines()
    assert code == 0 and lines[1] == "0,vertex,shared,e0,0,0,1.000000e+00"


def test_output_file(capsys, tmp_path):
    path = tmp_path / "out.csv"
    code, _ = run(capsys, "mesh-info", "--output", str(path))
    assert code == 0 and path.read_text().startswith("mesh,")


@pytest.mark.parametrize("argv", [
    ["dim-audit", "--p", "2"],
    ["bogus"],
    ["dim-audit", "--space", "V0", "--p", "1"],
    ["mesh-info", "--mesh", "nope"],
    ["exactness", "--complex", "V", "--p", "3", "--mesh", "two-tri"],
    ["mesh-info", "--threads", "0"],
    ["maxwell2d", "--unknown-flag"],
])
def test_usage_errors(capsys, argv):
    try:
        code = main(argv)
    except SystemExit as e:
        code = e.code
    assert code == 2


def test_threads_do_not_change_output(capsys):
    outs = []
    for t in ("1", "2"):
        code, out = run(capsys, "condition", "--p-min", "2", "--p-max", "3", "--threads", t)
        assert code == 0
        outs.append(out.out)
    assert outs[0] == outs[1]
