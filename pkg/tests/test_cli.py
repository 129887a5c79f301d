import json

import pytest

from steadytube.cli import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, run

SHOCK_U1 = 0.8430703308172536
ISO = {"system": "isentropic_ns", "nu": 0.2}


def _run(tmp_path, command, cfg, *extra, name="cfg.json", out="out"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    outdir = tmp_path / out
    code = run([command, "--config", str(path), "--out", str(outdir), *extra])
    return code, outdir


def _load(path):
    with open(path) as fh:
        return json.load(fh)


def _csv_body(path):
    lines = path.read_text().splitlines()
    return [ln for ln in lines if not ln.startswith("#")], [ln for ln in lines if ln.startswith("#")]


def test_classify_interior_shock(tmp_path):
    cfg = {"command": "classify", "params": {"rho0": 0.5, "u0": 2.0, "u1": SHOCK_U1}}
    code, out = _run(tmp_path, "classify", cfg)
    assert code == EXIT_OK
    doc = _load(out / "classify.json")
    assert doc["result"]["kind"] == "InteriorShock"
    assert doc["result"]["shock_location"] == pytest.approx(0.7570954820406103, abs=1e-12)
    prov = doc["provenance"]
    assert prov["command"] == "classify" and prov["tool"] == "steadytube"
    assert len(prov["config_sha256"]) == 64


def test_check_rotation_reports_failure_but_succeeds(tmp_path):
    cfg = {"system": {"system": "rotation_example"}, "params": {"samples": [[0.0, 0.0]]}}
    code, out = _run(tmp_path, "check", cfg)
    assert code == EXIT_OK
    res = _load(out / "check.json")["result"]
    assert res["speccond"]["verdict"] == "fail"
    assert res["speccond"]["witness"]


@pytest.mark.parametrize("cfg", [
    {"system": ISO, "params": {"U0": [1.0, 1.0], "U1II": [1.1]}, "bogus": 1},
    {"system": ISO, "params": {"U0": [1.0, 1.0, 2.0], "U1II": [1.1]}},
    {"system": ISO, "params": {"U1II": [1.1]}},
    {"system": {"system": "isentropic_ns", "nu": -1.0}, "params": {"U0": [1.0, 1.0], "U1II": [1.1]}},
    {"system": ISO, "params": {"U0": [1.0, 1.0], "U1II": [1.1]}, "tolerances": {"rtol": "tight"}},
    {"command": "classify", "system": ISO, "params": {"U0": [1.0, 1.0], "U1II": [1.1]}},
    {"system": ISO, "params": {"U0": [-1.0, 1.0], "U1II": [1.1]}},
])
def test_invalid_config_exits_2(tmp_path, cfg):
    code, out = _run(tmp_path, "solve", cfg)
    assert code == EXIT_INVALID
    assert not (out / "profile.csv").exists()


def test_malformed_json_exits_2(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert run(["solve", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert run(["nope", "--config", str(path)]) == EXIT_INVALID


def test_numerical_failure_writes_diagnostic(tmp_path):
    cfg = {"system": {"system": "linear", "A": [[1.0]], "B22": [[0.001]], "r": 0},
           "params": {"U0": [0.0], "U1II": [1.0], "c2_guess": [1.0]}, "tolerances": {"max_iter": 3}}
    code, out = _run(tmp_path, "solve", cfg)
    assert code == EXIT_NUMERICAL
    diag = _load(out / "diagnostic.json")["result"]
    assert diag["error"] == "ShootingFailure"
    assert diag["traceback"]


def test_solve_outputs_are_deterministic(tmp_path):
    cfg = {"system": ISO, "params": {"U0": [1.0, 1.0], "U1II": [1.1]}, "seed": 5}
    code_a, a = _run(tmp_path, "solve", cfg, out="a")
    code_b, b = _run(tmp_path, "solve", cfg, "--jobs", "2", out="b")
    assert code_a == code_b == EXIT_OK
    body_a, head_a = _csv_body(a / "profile.csv")
    body_b, _ = _csv_body(b / "profile.csv")
    assert body_a == body_b
    assert body_a[0] == "x,U1,U2"
    assert any(ln.startswith("# config_sha256:") for ln in head_a)
    ra, rb = _load(a / "solve.json"), _load(b / "solve.json")
    assert ra["result"] == rb["result"]
    assert ra["provenance"]["seed"] == 5
    assert ra["result"]["residual"] <= 1e-9 * 2.1


def test_seed_flag_overrides_config(tmp_path):
    cfg = {"system": ISO, "params": {"U0": [1.0, 1.0], "U1II": [1.2], "box": [[-5, 5]], "n_starts": 6},
           "seed": 1}
    code, out = _run(tmp_path, "degree", cfg, "--seed", "9")
    assert code == EXIT_OK
    doc = _load(out / "degree.json")
    assert doc["provenance"]["seed"] == 9
    assert doc["result"]["degree"] == 1


def test_evans_scan(tmp_path):
    cfg = {"system": ISO, "params": {"U0": [1.0, 1.0], "U1II": [1.1], "lambdas": [0, 1, [2, 3]],
                                     "contour": {"kind": "half_disk", "radius": 5}}}
    code, out = _run(tmp_path, "evans-scan", cfg)
    assert code == EXIT_OK
    body, _ = _csv_body(out / "evans.csv")
    assert len(body) == 4
    assert _load(out / "winding.json")["result"]["winding"] == 0


def test_index_constant_state(tmp_path):
    cfg = {"system": ISO, "params": {"U0": [1.0, 0.7], "constant": True, "n_grid": 16}}
    code, out = _run(tmp_path, "index", cfg)
    assert code == EXIT_OK
    assert _load(out / "index.json")["result"]["mu"] == 1


def test_zs_check(tmp_path):
    cfg = {"system": ISO, "params": {"cases": [{"U0": [1.0, 1.0], "U1II": [1.1]},
                                               {"U0": [1.0, 1.0], "U1II": [1.2]}]}}
    code, out = _run(tmp_path, "zs-check", cfg)
    assert code == EXIT_OK
    lines = (out / "zs.csv").read_text().splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    assert len(body) == 3
    footer = [ln for ln in lines[lines.index(body[-1]):] if ln.startswith("#")]
    assert any("all_signs_agree: true" in ln for ln in footer)


def test_sweep_nu(tmp_path):
    cfg = {"params": {"rho0": 0.5, "u0": 2.0, "u1": SHOCK_U1, "nu_list": [0.01, 0.003, 0.001, 0.0003]}}
    code, out = _run(tmp_path, "sweep-nu", cfg)
    assert code == EXIT_OK
    body, _ = _csv_body(out / "sweep_nu.csv")
    assert len(body) == 5


def test_large_visc(tmp_path):
    cfg = {"params": {"u0": 1, "e0": 1, "u1": 2, "e1": 1, "alpha_list": [10, 30]}}
    code, out = _run(tmp_path, "large-visc", cfg)
    assert code == EXIT_OK
    body, _ = _csv_body(out / "large_visc.csv")
    assert body[0].startswith("alpha,nu,h1_error")


def test_standing_shock(tmp_path):
    code, out = _run(tmp_path, "standing-shock", {"params": {"rho_minus": 0.5, "epsilons": [0.2, 0.1]}})
    assert code == EXIT_OK
    body, _ = _csv_body(out / "standing_shock.csv")
    assert len(body) == 3
