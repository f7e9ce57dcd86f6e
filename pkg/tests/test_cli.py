import io
import json
import math

import numpy as np
import pytest

from coordkit import cli

EXAMPLE = {
    "alphabets": {"U": 2, "X": 2, "Y": 2, "V": 2},
    "source": [0.5, 0.5],
    "channel": [[1, 0], [0, 1]],
    "target": [[0.5, 1 / 6, 1 / 6, 1 / 6], [1 / 6, 1 / 6, 1 / 6, 0.5]],
}


def invoke(args):
    out, err = io.StringIO(), io.StringIO()
    code = cli.run(args, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def example_file(tmp_path):
    p = tmp_path / "example.json"
    p.write_text(json.dumps(EXAMPLE))
    return str(p)


def read_csv(text):
    lines = text.splitlines()
    assert lines[0].startswith("# ")
    spec = json.loads(lines[0][2:])
    header = lines[1].split(",")
    rows = [dict(zip(header, l.split(","))) for l in lines[2:]]
    return spec, rows


def test_eval_json_roundtrip(example_file):
    code, out, _ = invoke(["eval", example_file, "--restarts", "2"])
    assert code == 0
    doc = json.loads(out)
    assert doc["result"]["value"] == pytest.approx(0.5 * math.log2(3), abs=1e-6)
    assert doc["result"]["verdict"] == "Achievable"
    assert doc["runspec"]["subcommand"] == "eval" and doc["runspec"]["seed"] == 0
    assert json.loads(json.dumps(doc, sort_keys=True)) == doc


def test_sweep_gamma_perfect_channel():
    code, out, _ = invoke(["sweep-gamma", "--eps", "0", "--gamma-step", "0.1", "--restarts", "2"])
    assert code == 0
    spec, rows = read_csv(out)
    assert spec["eps"] == 0.0
    for r in rows:
        g = float(r["gamma"])
        hb = 0.0 if g in (0.0, 1.0) else -g * math.log2(g) - (1 - g) * math.log2(1 - g)
        expect = hb + (1 - g) * math.log2(3) - 1
        assert float(r["lower"]) == pytest.approx(expect, abs=1e-9)
        assert float(r["upper"]) == pytest.approx(expect, abs=1e-9)
        assert float(r["certified"]) == pytest.approx(expect, abs=1e-6)


def test_dc_region_zero_capacity():
    code, out, _ = invoke(["dc-region", "--p", "0.5", "--eps", "0.5", "--grid-step", "0.1"])
    assert code == 0
    _, rows = read_csv(out)
    assert len(rows) == 121
    for r in rows:
        assert (r["achievable"] == "1") == (abs(float(r["D"]) - 0.5) < 1e-9)


def test_gamma_star_csv():
    code, out, _ = invoke(["gamma-star", "--eps-step", "0.25"])
    assert code == 0
    _, rows = read_csv(out)
    assert float(rows[0]["gamma_lower"]) == pytest.approx(0.81, abs=0.005)
    assert float(rows[-1]["gamma_upper"]) == pytest.approx(0.25, abs=1e-3)


def test_identical_invocations_identical_bytes(example_file, tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / "out.csv"
        args = ["simulate", example_file, "--n", "8", "--blocks", "3", "--trials", "2",
                "--delta", "0.05", "--restarts", "2", "--seed", "5", "-o", str(path)]
        assert invoke(args)[0] == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("COORDKIT_SEED", "42")
    code, out, _ = invoke(["gamma-star", "--eps-step", "0.5"])
    assert code == 0 and read_csv(out)[0]["seed"] == 42
    monkeypatch.setenv("COORDKIT_SEED", "abc")
    assert invoke(["gamma-star"])[0] == 2


def test_validation_exit_code(tmp_path):
    bad = dict(EXAMPLE, source=[0.5, 0.6])
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(bad))
    code, _, err = invoke(["eval", str(p)])
    assert code == 2 and "1" in err
    p.write_text("{not json")
    assert invoke(["eval", str(p)])[0] == 2
    assert invoke(["eval", str(tmp_path / "missing.json")])[0] == 2
    assert invoke(["dc-region", "--p", "2"])[0] == 2
    assert invoke(["nonsense"])[0] == 2


def test_infeasible_exit_code(example_file):
    # the rates exceed what the channel can carry for this delta
    code, _, err = invoke(["simulate", example_file, "--n", "8", "--delta", "0.5", "--restarts", "2"])
    assert code == 3 and "refused" in err


def test_numeric_failure_exit_code(monkeypatch):
    monkeypatch.setattr(cli.binary, "gamma_star", lambda *a, **k: float("nan"))
    assert invoke(["gamma-star", "--eps-step", "0.5"])[0] == 4


def test_capacity_and_check(example_file):
    code, out, _ = invoke(["capacity", example_file])
    assert code == 0 and json.loads(out)["result"]["capacity"] == pytest.approx(1.0)
    code, out, _ = invoke(["check", example_file])
    assert code == 0 and json.loads(out)["result"]["passed"] is True


def test_membership_and_utility(tmp_path):
    doc = dict(EXAMPLE, channel=[[0.5, 0.5], [0.5, 0.5]])
    p = tmp_path / "z.json"
    p.write_text(json.dumps(doc))
    code, out, _ = invoke(["membership", str(p), "--restarts", "2"])
    assert code == 0 and json.loads(out)["result"]["verdict"] == "NotAchievable"
    phi = np.zeros((2, 2, 2, 2))
    for u in range(2):
        phi[u, u, :, u] = 1
    doc = dict(EXAMPLE, utility=phi.tolist())
    p.write_text(json.dumps(doc))
    code, out, _ = invoke(["utility-max", str(p), "--restarts", "1", "--iters", "20"])
    assert code == 0 and json.loads(out)["result"]["utility"] >= 0.8


def test_causal_eval(example_file):
    code, out, _ = invoke(["causal-eval", example_file, "--restarts", "2"])
    assert code == 0
    res = json.loads(out)["result"]
    assert res["value"] >= 0.5 * math.log2(3) - 1e-6
