import json
from pathlib import Path

import numpy as np
import pytest

from mapchaos import cli
from mapchaos.map_model import default_spec, spec_to_dict

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return p


def test_help(capsys):
    code, out, _ = run(["--help"], capsys)
    assert code == 0 and "verify" in out and "Exit codes" in out
    code, out, _ = run(["replicate", "--help"], capsys)
    assert code == 0 and "--payoff" in out


def test_usage_error(capsys):
    code, _, _ = run(["teleport"], capsys)
    assert code == 2


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", {"model": spec_to_dict(default_spec()), "colour": "blue"})
    code, _, err = run(["moments", "--config", cfg], capsys)
    assert code == 2 and "colour" in err


def test_unknown_law_rejected(tmp_path, capsys):
    model = spec_to_dict(default_spec())
    model["ordinate"]["nu2"]["law"] = {"type": "cauchy", "scale": 1.0}
    code, _, _ = run(["moments", "--config", write(tmp_path, "c.json", {"model": model})], capsys)
    assert code == 2


def test_missing_payoff_is_schema_error(capsys):
    code, _, err = run(["replicate", "--n-paths", "20"], capsys)
    assert code == 2 and "payoff" in err


def test_unknown_suite(capsys):
    code, _, err = run(["verify", "--suite", "bogus"], capsys)
    assert code == 2 and "bogus" in err


def test_invalid_model_values(tmp_path, capsys):
    model = spec_to_dict(default_spec())
    model["modulator"]["sigma1"] = 0.0
    code, _, err = run(["moments", "--config", write(tmp_path, "c.json", {"model": model})], capsys)
    assert code == 2 and "sigma1" in err


def test_moments_defaults(capsys):
    code, out, _ = run(["moments"], capsys)
    d = json.loads(out)
    assert code == 0
    assert d["nu2"]["m"][:5] == pytest.approx([2, 0, 2, 0, 6])
    assert d["joint"]["c_1,1"] == pytest.approx(0.5 * 7 / 3)


def test_simulate_is_byte_identical(tmp_path, capsys):
    outs = []
    for sub in ("a", "b"):
        d = tmp_path / sub
        code, _, _ = run(["simulate", "--config", CONFIGS / "simulate.json", "--output-dir", d, "--n-paths", 2], capsys)
        assert code == 0
        outs.append([f.read_bytes() for f in sorted(d.iterdir())])
    assert outs[0] == outs[1] and len(outs[0]) == 2
    header = outs[0][0].decode().splitlines()[1].split(",")
    assert "Theta_bar_2" in header and "xi_bar_f_1" in header


def test_simulate_zero_paths_is_schema_error(tmp_path, capsys):
    code, _, _ = run(["simulate", "--n-paths", 0, "--output-dir", tmp_path], capsys)
    assert code == 2


def test_flags_override_config(tmp_path, capsys):
    d1, d2 = tmp_path / "s7", tmp_path / "s8"
    run(["simulate", "--config", CONFIGS / "simulate.json", "--output-dir", d1], capsys)
    run(["simulate", "--config", CONFIGS / "simulate.json", "--output-dir", d2, "--seed", 8], capsys)
    a, b = (next(d.iterdir()).read_text() for d in (d1, d2))
    assert a != b


def test_orthogonalize_K1_is_identity(tmp_path, capsys):
    out = tmp_path / "o.json"
    code, _, _ = run(["orthogonalize", "--K", 1, "--g-shape", 1, 0, "--alpha", 0.25, "--output", out], capsys)
    d = json.loads(out.read_text())
    assert code == 0
    assert [e["coeffs"] for e in d["H"]["elements"]] == [[1.0]]
    assert [e["coeffs"] for e in d["G"]["elements"]] == [[1.0]]
    # m2(nu2) + alpha / T with the default model
    assert d["H"]["gram"] == [[2.25]] and d["alpha"]["provenance"] == "user"


def test_collinear_triggered_reports_label(capsys):
    code, _, err = run(["orthogonalize", "--config", CONFIGS / "collinear_triggered.json"], capsys)
    assert code == 3
    assert "y^2" in err


def test_verify_pass_and_fail_exit_codes(tmp_path, capsys):
    out = tmp_path / "r.json"
    code, _, err = run(["verify", "--suite", "martingale", "--n-paths", 300, "--dt", 0.2, "--output", out], capsys)
    assert code == 0 and "suite martingale: PASS" in err
    assert json.loads(out.read_text())["verdict"] == "PASS"
    # a replication floor factor of zero cannot be met
    cfg = write(tmp_path, "v.json", {"suite": "replication", "n_paths": 200, "dt": 0.1,
                                     "suite_config": {"replication_paths": 200, "floor_factor": 0.0}})
    code, _, _ = run(["verify", "--config", cfg, "--output", tmp_path / "f.json"], capsys)
    assert code == 4


def test_verify_rejects_unknown_suite_config_key(tmp_path, capsys):
    cfg = write(tmp_path, "v.json", {"suite": "martingale", "suite_config": {"pathz": 3}})
    code, _, err = run(["verify", "--config", cfg], capsys)
    assert code == 2 and "pathz" in err


def test_replicate_writes_json_and_csv(tmp_path, capsys):
    out, csv = tmp_path / "r.json", tmp_path / "h.csv"
    code, _, _ = run(["replicate", "--payoff", "terminal_ordinate", "--n-paths", 200, "--dt", 0.1,
                      "--K", 1, 2, "--output", out, "--csv", csv], capsys)
    assert code == 0
    d = json.loads(out.read_text())
    assert [r["basis_order"] for r in d["reports"]] == [1, 2]
    assert len(d["comparisons"]) == 1
    h = np.array(d["reports"][0]["integrands"]["xi_bar"])[:, 0]
    assert np.allclose(h, 1.0, atol=1e-6)
    assert csv.read_text().splitlines()[0].startswith("bucket,t_start,t_end,integrator")


def test_chaos_check(capsys):
    code, out, _ = run(["chaos-check", "--monomial", 0, 1, 1, "--dts", 0.1, "--n-paths", 3], capsys)
    d = json.loads(out)
    assert code == 0 and len(d["meshes"]) == 1
    assert d["expansion"][0] == "xi_bar^L xi_bar^f ="


def test_chaos_check_degree_cap(capsys):
    code, _, _ = run(["chaos-check", "--monomial", 3, 3, 0, "--n-paths", 1], capsys)
    assert code == 3


def test_shipped_configs_validate():
    for f in CONFIGS.glob("*.json"):
        cfg = json.loads(f.read_text())
        command = next(c for c, prefix in (("verify", "verify_"), ("replicate", "replicate_"),
                                           ("simulate", "simulate"), ("orthogonalize", "orthogonalize"),
                                           ("orthogonalize", "collinear"), ("verify", "reduced_"),
                                           ("moments", "default_model")) if f.name.startswith(prefix))
        cli._validate(command, cfg)
