import json

import numpy as np
import pytest
from scipy.optimize import brentq

from infswap import cli, rates
from infswap.potential import classify_two_well, extract_landscape, franz_potential, load_critical_points

THREE_WELL = """period 6.0
min(0.0, 0.0)
saddle(1.0, 3.0)
min(2.0, 1.5)
saddle(3.0, 2.5)
min(4.0, 0.5)
saddle(5.0, 4.0)
"""


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_config_roundtrip():
    cfg = cli.RunConfig(seed=3, ladder={"type": "explicit", "alphas": [1.0, 0.4]})
    again = cli.RunConfig.from_json(cfg.to_json())
    assert again == cfg
    assert cli.RunConfig.from_json(again.to_json()).to_json() == cfg.to_json()


@pytest.mark.parametrize("change,field", [
    ({"ladder": {"type": "explicit", "alphas": [1.0, 0.2, 0.5]}}, "ladder.alphas"),
    ({"ladder": {"type": "geometric", "K": 9}}, "ladder.K"),
    ({"target": [1.5, 2.5]}, "target"),
    ({"eps_grid": [0.2, 0.3]}, "eps_grid"),
    ({"replications": 10}, "replications"),
    ({"potential": {"type": "bessel"}}, "potential.type"),
    ({"colour": "blue"}, "colour"),
])
def test_config_errors_name_field(change, field):
    d = {**cli.RunConfig().to_dict(), **change}
    with pytest.raises(cli.ConfigError) as info:
        cli.RunConfig.from_dict(d)
    assert info.value.field == field


def test_analyze_matches_rates_module(tmp_path, capsys):
    code, out, _ = run(capsys, "analyze", "--out", str(tmp_path), "--K", "2")
    assert code == 0
    res = json.loads((tmp_path / "analysis.json").read_text())
    p = franz_potential(0.85)
    lg = extract_landscape(p)
    spec = classify_two_well(lg)
    rep = rates.optimal_two_well(spec, rates.make_target(p, lg, 0.6, 1.1, spec), 2)
    assert res["two_well"]["optimal"] == json.loads(rep.to_json())
    assert "two-well rate" in out


def test_analyze_single_temperature(tmp_path, capsys):
    code, _, _ = run(capsys, "analyze", "--out", str(tmp_path), "--K", "1", "--target", "1.5,2.0")
    assert code == 0
    res = json.loads((tmp_path / "analysis.json").read_text())
    assert res["two_well"]["optimal"]["predicted_rate"] == pytest.approx(res["target"]["v_of_A"])


def test_analyze_geometric_K7_gap(tmp_path, capsys):
    f = tmp_path / "three.txt"
    f.write_text(THREE_WELL)
    p = load_critical_points(f)
    x1 = brentq(lambda x: p.evaluate(x) - 1.0, 0.05, 0.95)
    code, _, _ = run(capsys, "analyze", "--out", str(tmp_path), "--potential-file", str(f),
                     "--geometric", "--K", "7", "--target", f"{x1!r},0.95")
    assert code == 0
    res = json.loads((tmp_path / "analysis.json").read_text())
    v = res["target"]["v_of_A"]
    assert v == pytest.approx(1.0, abs=1e-9)
    assert res["ladder"] == [0.5**k for k in range(7)]
    assert res["multiwell"]["gap"] == pytest.approx((v + res["graph"]["B"]) / 64, rel=1e-12)
    assert res["graph"]["exact"] is False


def test_optimize_flags_boundary(tmp_path, capsys):
    code, out, _ = run(capsys, "optimize", "--out", str(tmp_path), "--K", "2")
    assert code == 0 and "flag:" in out
    assert json.loads((tmp_path / "ladder.json").read_text())["ladder"] == [1.0, 0.1]


@pytest.mark.parametrize("target,K", [("-2.0,-1.5", 3), ("-0.6,-0.2", 2), ("1.2,1.6", 2)])
def test_optimize_passes_through(tmp_path, capsys, target, K):
    code, _, _ = run(capsys, "optimize", "--out", str(tmp_path), "--K", str(K), f"--target={target}")
    assert code == 0
    obj = json.loads((tmp_path / "ladder.json").read_text())
    p = franz_potential(0.85)
    lg = extract_landscape(p)
    spec = classify_two_well(lg)
    lo, hi = map(float, target.split(","))
    rep = rates.optimal_two_well(spec, rates.make_target(p, lg, lo, hi, spec), K)
    assert obj["ladder"] == rep.optimal_ladder.to_list()


def test_simulate_synthetic_exit_zero(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--out", str(tmp_path), "--seed", "1", "--method", "synthetic",
                       "--replications", "30")
    assert code == 0
    assert json.loads(out)["pass"] is True
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["experiment.csv", "experiment.json", "summary.json"]


def test_simulate_paired_records_both_rates(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"method": "paired", "eps_grid": [0.5, 0.4], "replications": 30,
                               "horizon_exponent": None, "T": 2.0, "seed": 4}))
    code, out, _ = run(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code in (0, 2)
    rates_ = json.loads((tmp_path / "o" / "summary.json").read_text())["fitted_rates"]
    assert set(rates_) == {"mcmc", "ins"}
    assert all(np.isfinite(v) for v in rates_.values())


def test_simulate_verdict_fail_exit_two(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"method": "synthetic", "predicted_rate": 5.0, "seed": 1, "replications": 30}))
    code, _, _ = run(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 2


def test_invalid_ladder_exit_one(tmp_path, capsys):
    code, _, err = run(capsys, "simulate", "--out", str(tmp_path / "o"), "--seed", "1", "--ladder", "1,0.2,0.5")
    assert code == 1 and "Delta" in err
    assert not (tmp_path / "o").exists()


def test_simulate_requires_seed(tmp_path, capsys):
    code, _, err = run(capsys, "simulate", "--out", str(tmp_path / "o"), "--method", "synthetic")
    assert code == 1 and "seed" in err
    assert not (tmp_path / "o").exists()


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 1, "eps_grid": [0.5, 0.4]}))
    args = cli.build_parser().parse_args(["simulate", "--config", str(cfg), "--seed", "9", "--theta", "0.7"])
    rc = cli.config_from_args(args)
    assert rc.seed == 9 and rc.eps_grid == [0.5, 0.4] and rc.potential["theta"] == 0.7


def test_verify(capsys):
    assert run(capsys, "verify")[0] == 0
    assert run(capsys, "verify", "--inject-fault", "cost-table")[0] == 2
    assert run(capsys, "verify", "--checks", "")[0] == 1
    assert run(capsys, "verify", "--checks", "bogus")[0] == 1
    assert run(capsys, "frobnicate")[0] == 1
