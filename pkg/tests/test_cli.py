import json
import random
from fractions import Fraction

import pytest

from givental.cli import EXIT_FAIL, EXIT_PASS, EXIT_UNDECIDABLE, EXIT_USAGE, main
from givental.jets import random_r_jet
from givental.loop import LaurentMatrix, Metric
from givental.series import Poly, TruncatedPotential, TruncationSpec
from givental.tau import Theory, builtin_theory


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def tampered(tmp_path):
    th = builtin_theory("point", TruncationSpec(1, 3, 6, 2, 0))
    f0 = th.potentials.genus(0)
    f0 = f0 + Poly.from_monomial([(0, 0), (0, 0), (0, 0)], Fraction(1, 30), f0.spec)
    bad = Theory(th.metric, TruncatedPotential((f0,) + th.potentials.by_genus[1:], th.spec))
    path = tmp_path / "tampered.json"
    path.write_text(json.dumps(bad.to_json()))
    return path


def test_intersect_genus_one(capsys):
    code, out, _ = run(capsys, "intersect", "--g", "1", "--max-n", "1")
    assert code == EXIT_PASS
    assert "1; 1; 1/24" in out.splitlines()


def test_intersect_seed(capsys):
    code, out, _ = run(capsys, "intersect", "--g", "0", "--max-n", "3")
    assert code == 0 and "0; 0,0,0; 1" in out.splitlines()


def test_intersect_unstable_range_is_empty(capsys):
    code, out, _ = run(capsys, "intersect", "--g", "0", "--max-n", "2")
    assert code == 0 and out.strip() == ""


def test_intersect_routes_agree(capsys):
    a = run(capsys, "intersect", "--G", "1", "--D", "4", "--K", "5")[1]
    b = run(capsys, "intersect", "--G", "1", "--D", "4", "--K", "5", "--route", "virasoro")[1]
    assert a == b and a


@pytest.mark.parametrize("argv", [
    ["intersect", "--g", "-1"],
    ["intersect", "--g", "13"],
    ["intersect", "--max-n", "99"],
    ["frobnicate"],
    [],
    ["check", "axioms", "--builtin", "nowhere"],
    ["check", "virasoro", "--m", "-2"],
    ["intersect", "--N", "0"],
    ["semisimple", "--probe", "1/0"],
])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == EXIT_USAGE
    assert "usage error" in err


def test_check_axioms_builtin_point(capsys):
    code, out, _ = run(capsys, "check", "axioms", "--builtin", "point")
    assert code == EXIT_PASS and out.rstrip().endswith("overall: pass")


def test_check_axioms_tampered_has_witness(capsys, tampered):
    code, out, _ = run(capsys, "check", "axioms", "--input", str(tampered), "--format", "json")
    assert code == EXIT_FAIL
    data = json.loads(out)
    assert data["status"] == "fail"
    assert any(r["witnesses"] for r in data["reports"])
    assert data["spec"]["max_degree"] == 6


def test_check_virasoro_point_m0(capsys):
    code, out, _ = run(capsys, "check", "virasoro", "--builtin", "point", "--m", "0")
    assert code == EXIT_PASS and "L_0: pass" in out


def test_check_virasoro_with_relations(capsys):
    code, out, _ = run(capsys, "check", "virasoro", "--m", "-1", "--m", "1", "--relations", "--G", "1", "--D", "4")
    assert code == EXIT_PASS
    assert "[L_1, L_-1] = (2) L_0: pass" in out


def test_check_virasoro_tampered_fails(capsys, tampered):
    code, _, _ = run(capsys, "check", "virasoro", "--input", str(tampered), "--m", "-1")
    assert code == EXIT_FAIL


def test_check_virasoro_unknown_metric_is_undecidable(capsys, tmp_path):
    th = builtin_theory("npoint:2", TruncationSpec(2, 2, 4, 0, 0))
    other = Theory(Metric.identity(2), th.potentials)
    path = tmp_path / "t.json"
    path.write_text(json.dumps(other.to_json()))
    assert run(capsys, "check", "virasoro", "--input", str(path))[0] == EXIT_UNDECIDABLE


def test_check_jet(capsys):
    assert run(capsys, "check", "jet", "--K", "6", "--D", "9")[0] == EXIT_PASS
    assert run(capsys, "check", "jet", "--G", "0")[0] == EXIT_UNDECIDABLE


def test_quantize_virasoro(capsys):
    code, out, _ = run(capsys, "quantize", "--virasoro", "0")
    assert code == 0
    assert out.startswith("L_0^ = 1/16 + 1/2*q0_0*d/dq0_0")


def test_quantize_rejects_non_symplectic_matrix(capsys, tmp_path):
    path = tmp_path / "a.json"
    path.write_text(LaurentMatrix({(0, 2): ((Fraction(1),),)}, 1).dumps())
    code, out, _ = run(capsys, "quantize", "--matrix", str(path), "--format", "json")
    assert code == EXIT_FAIL and json.loads(out)["certificate"]["z"] == 2
    path.write_text(LaurentMatrix({(0, -1): ((Fraction(1),),)}, 1).dumps())
    assert run(capsys, "quantize", "--matrix", str(path))[0] == EXIT_PASS


def _potentials(capsys, *extra):
    code, out, _ = run(capsys, "potentials", "--format", "json", "--E", "2", *extra)
    assert code == 0
    return json.dumps(json.loads(out)["potentials"], sort_keys=True)


def test_act_identity_is_byte_identical(capsys, tmp_path):
    dest = tmp_path / "out.json"
    code, _, _ = run(capsys, "act", "--E", "2", "--output", str(dest))
    assert code == EXIT_PASS
    data = json.loads(dest.read_text())
    assert json.dumps(data["potentials"], sort_keys=True) == _potentials(capsys)
    assert all(r["status"] == "pass" for r in data["reports"])


def test_act_string_is_byte_identical(capsys, tmp_path):
    dest = tmp_path / "out.json"
    assert run(capsys, "act", "--string", "--E", "2", "--output", str(dest))[0] == EXIT_PASS
    assert json.dumps(json.loads(dest.read_text())["potentials"], sort_keys=True) == _potentials(capsys)


def test_act_random_r_jet_reverifies(capsys, tmp_path):
    metric = Metric.n_point(2)
    r = tmp_path / "r.json"
    r.write_text(random_r_jet(metric, random.Random(4), 2).dumps(metric))
    dest = tmp_path / "out.json"
    code, _, _ = run(capsys, "act", "--builtin", "npoint:2", "--R", str(r), "--E", "2", "--K", "2", "--D", "5", "--G", "0", "--output", str(dest))
    assert code == EXIT_PASS
    assert [x["status"] for x in json.loads(dest.read_text())["reports"]] == ["pass"] * 3


def test_act_rejects_non_symplectic_and_writes_nothing(capsys, tmp_path):
    r = tmp_path / "r.json"
    r.write_text(LaurentMatrix({(0, 0): ((Fraction(1),),), (1, 2): ((Fraction(1),),)}, 1, 1).dumps())
    dest = tmp_path / "out.json"
    code, _, _ = run(capsys, "act", "--R", str(r), "--E", "1", "--output", str(dest))
    assert code == EXIT_FAIL
    cert = json.loads(dest.read_text())["certificate"]
    assert cert["jet"] == "R" and cert["eps"] == 1


def test_birkhoff_round_trip(capsys, tmp_path):
    m = LaurentMatrix({(0, 0): ((Fraction(2),),), (1, -1): ((Fraction(1),),), (1, 1): ((Fraction(3),),)}, 1, 2)
    src = tmp_path / "m.json"
    src.write_text(m.dumps())
    s_out, r_out = tmp_path / "s.json", tmp_path / "r.json"
    code, _, _ = run(capsys, "birkhoff", "--matrix", str(src), "--s-out", str(s_out), "--r-out", str(r_out))
    assert code == EXIT_PASS
    s = LaurentMatrix.from_json(json.loads(s_out.read_text()))
    r = LaurentMatrix.from_json(json.loads(r_out.read_text()))
    assert s * r == m


def test_birkhoff_singular_constant_term(capsys, tmp_path):
    src = tmp_path / "m.json"
    src.write_text(LaurentMatrix({(0, 0): ((Fraction(0),),), (1, 1): ((Fraction(1),),)}, 1, 1).dumps())
    assert run(capsys, "birkhoff", "--matrix", str(src))[0] == EXIT_FAIL


def test_semisimple(capsys):
    code, out, _ = run(capsys, "semisimple", "--builtin", "npoint:3", "--K", "2", "--D", "4", "--G", "0")
    assert code == EXIT_PASS
    assert "(x - 4)*(x - 2)*(x - 1)" in out


def test_config_file_sets_truncation_and_format(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"G": 1, "D": 3, "format": "json"}))
    code, out, _ = run(capsys, "--config", str(cfg), "intersect")
    assert code == 0
    data = json.loads(out)
    assert json.dumps(data)
    cfg.write_text(json.dumps({"colour": "blue"}))
    assert run(capsys, "--config", str(cfg), "intersect")[0] == EXIT_USAGE


@pytest.mark.parametrize("argv", [
    ["intersect", "--format", "json"],
    ["check", "axioms", "--format", "json"],
    ["act", "--string", "--E", "2", "--format", "json"],
    ["semisimple", "--builtin", "npoint:2", "--G", "0", "--format", "json"],
])
def test_output_is_deterministic(capsys, argv):
    assert run(capsys, *argv)[1] == run(capsys, *argv)[1]


def test_output_file_is_written_atomically(capsys, tmp_path):
    dest = tmp_path / "table.txt"
    dest.write_text("old")
    assert run(capsys, "intersect", "--G", "1", "--output", str(dest), "--format", "text")[0] == 0
    assert "1; 1; 1/24" in dest.read_text().splitlines()
    assert [p.name for p in tmp_path.iterdir()] == ["table.txt"]


def test_verbosity_goes_to_stderr_only(capsys, monkeypatch, tmp_path):
    monkeypatch.setenv("GIVENTAL_VERBOSITY", "1")
    dest = tmp_path / "x.json"
    code, out, _ = run(capsys, "intersect", "--G", "0", "--output", str(dest))
    assert code == 0 and out == ""
