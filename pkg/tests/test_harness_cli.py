import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest

from icvar_rl import (ExperimentConfig, aggregate, emit, hard_instance_gap, random_linear_mixture,
                      results_from_json, run_experiment, save_mdp)
from icvar_rl.cli import main
from icvar_rl.errors import ConfigError
from icvar_rl.harness import build_instance, load_config
from icvar_rl.instance_gen import HardInstanceParams, hard_actions
from icvar_rl.results import RunResult, results_to_csv

DATA = Path(__file__).parent / "data"
SMALL = {"source": "random", "d": 2, "S": 3, "A": 2, "H": 2, "seed": 1}


def small_config(**kw):
    base = dict(algorithm="icvar_l", instance=dict(SMALL), alpha=0.5, K=30, seeds=[0], beta=1.0)
    base.update(kw)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------- config

@pytest.mark.parametrize("bad", [dict(alpha=0.0), dict(K=-1), dict(K=2.5), dict(seeds=[]),
                                 dict(algorithm="ppo"), dict(instance={"source": "web"}),
                                 dict(delta=0.0), dict(seeds=[-3])])
def test_config_invariants(bad):
    with pytest.raises(ConfigError):
        small_config(**bad)


def test_config_round_trip_and_unknown_keys(tmp_path):
    cfg = small_config(seeds=[3, 1])
    (tmp_path / "c.json").write_text(json.dumps(cfg.to_dict()))
    assert load_config(tmp_path / "c.json") == cfg
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"alpha": 0.5, "bogus": 1})


def test_missing_instance_parameter():
    with pytest.raises(ConfigError, match="needs parameter"):
        build_instance(small_config(instance={"source": "random", "d": 2}))


# ---------------------------------------------------------------- running

def test_oracle_run():
    res = run_experiment(small_config(algorithm="oracle_dp", seeds=[4, 5], K=25))
    assert len(res) == 1 and res[0].num_episodes == 25
    assert np.all(res[0].gaps == 0) and res[0].regret == 0


def test_seed_order_independence():
    fwd = run_experiment(small_config(seeds=[3, 8]))
    rev = run_experiment(small_config(seeds=[8, 3]))
    assert [r.seed for r in fwd] == [3, 8] and [r.seed for r in rev] == [8, 3]
    for a, b in zip(fwd, reversed(rev)):
        assert np.array_equal(a.gaps, b.gaps)
        assert results_to_csv([a]) == results_to_csv([b])


def test_parallel_matches_sequential():
    seq = run_experiment(small_config(seeds=[0, 1, 2]))
    par = run_experiment(small_config(seeds=[0, 1, 2], workers=2))
    assert results_to_csv(seq) == results_to_csv(par)


def test_hard_instance_regret_bounds():
    cfg = small_config(instance={"source": "hard", "d": 2, "H": 3, "n": 1, "seed": 0}, K=2000,
                       beta="theory", seeds=[0])
    mdp, _ = build_instance(cfg)
    p = HardInstanceParams(2, 3, 1, 0.5, abs(mdp.thetas[0, 1]), (mdp.thetas[0, 1],))
    worst = max(hard_instance_gap(p, a) for a in hard_actions(2))
    r = run_experiment(cfg, (mdp, None))[0]
    assert 0 < r.regret < 2000 * worst


def test_icvar_g_sources(tmp_path):
    cfg = small_config(algorithm="icvar_g", instance={"source": "random_class", "N": 3, "S": 3, "A": 2, "H": 2},
                       gamma=1.0)
    r = run_experiment(cfg)[0]
    assert "membership_flag" in r.diagnostics
    # a tabular file gets the class of its own kernels
    from icvar_rl import random_tabular
    save_mdp(random_tabular(3, 2, 2, seed=0), tmp_path / "t.json")
    r = run_experiment(small_config(algorithm="icvar_g", instance={"source": "file", "path": str(tmp_path / "t.json")}))[0]
    assert r.config["instance"]["source"] == "file"
    with pytest.raises(ConfigError):
        run_experiment(small_config(instance={"source": "random_tabular", "S": 3, "A": 2, "H": 2}))


def test_invalid_model_file_is_rejected(tmp_path):
    m = random_linear_mixture(2, 3, 2, 2, seed=0)
    from icvar_rl import LinearMixtureMDP
    save_mdp(LinearMixtureMDP(m.features, 2 * m.thetas, m.rewards), tmp_path / "bad.json")
    from icvar_rl.errors import InvalidModelError
    with pytest.raises(InvalidModelError):
        run_experiment(small_config(instance={"source": "file", "path": str(tmp_path / "bad.json")}))


# ---------------------------------------------------------------- aggregation

def test_aggregate_single_and_duplicates():
    r = run_experiment(small_config())[0]
    s = aggregate([r])
    assert np.array_equal(s.mean, r.cum_regret) and np.array_equal(s.median, r.cum_regret)
    d = aggregate([r, r, r])
    assert np.all(d.std == 0)
    for q in d.quantiles.values():
        assert np.allclose(q, r.cum_regret)


def test_aggregate_matches_reference_reducer():
    res = run_experiment(small_config(seeds=list(range(10)), K=40))
    s = aggregate(res)
    K = 40
    for k in range(K):
        col = sorted(sum(r.gaps[: k + 1]) for r in res)
        assert s.mean[k] == pytest.approx(sum(col) / 10, abs=1e-12)
        assert s.median[k] == pytest.approx((col[4] + col[5]) / 2, abs=1e-12)
    assert s.optimism_frequency == np.mean([np.all(r.optimism) for r in res])
    assert s.membership_frequency is None


def test_aggregate_errors_and_membership():
    r1 = run_experiment(small_config(K=5))[0]
    r2 = run_experiment(small_config(K=6))[0]
    with pytest.raises(ConfigError):
        aggregate([r1, r2])
    with pytest.raises(ConfigError):
        aggregate([])
    g = run_experiment(small_config(algorithm="icvar_g", instance={"source": "random_class", "N": 3, "S": 3, "A": 2,
                                                                    "H": 2}, seeds=[0, 1]))
    assert aggregate(g).membership_frequency == 1.0


# ---------------------------------------------------------------- emission

def test_csv_and_json_round_trip(tmp_path):
    res = run_experiment(small_config(seeds=[0, 1]))
    text = emit(res, "csv", tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == text
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 60
    for r in res:
        mine = [row for row in rows if int(row["seed"]) == r.seed]
        gaps = np.array([float(row["gap"]) for row in mine])
        cum = np.array([float(row["cum_regret"]) for row in mine])
        assert np.array_equal(gaps, r.gaps)
        assert np.array_equal(cum, np.cumsum(gaps))
    back = results_from_json(emit(res, "json"))
    for a, b in zip(res, back):
        assert a.seed == b.seed and a.config == b.config
        assert np.array_equal(a.gaps, b.gaps) and np.array_equal(a.optimism, b.optimism)
        for k in a.diagnostics:
            assert np.array_equal(a.diagnostics[k], b.diagnostics[k])
    assert emit(back, "json") == emit(res, "json")


def test_empty_results_give_header_only():
    text = emit([], "csv")
    assert text == "seed,episode,gap,cum_regret,optimism_flag\n"


def test_summary_emission(tmp_path):
    s = aggregate(run_experiment(small_config(seeds=[0, 1])))
    data = json.loads(emit(s, "json"))
    assert data["K"] == 30 and len(data["mean"]) == 30
    lines = emit(s, "csv").splitlines()
    assert lines[0].startswith("episode,mean,median,std") and len(lines) == 31


def test_emit_errors(tmp_path):
    with pytest.raises(ConfigError):
        emit([], "xml")
    with pytest.raises(OSError):
        emit([], "csv", tmp_path / "missing" / "x.csv")


def test_golden_file():
    cfg = load_config(DATA / "golden_config.json")
    assert emit(run_experiment(cfg), "csv") == (DATA / "golden_icvar_l_seed42.csv").read_text()


def test_wall_clock_only_on_request():
    r = run_experiment(small_config(K=3))[0]
    assert "wall_clock" not in r.to_dict() and r.to_dict(include_timing=True)["wall_clock"] > 0
    assert RunResult.from_dict(r.to_dict(include_timing=True)).wall_clock == r.wall_clock


# ---------------------------------------------------------------- CLI

def test_cli_golden_run_g(tmp_path):
    out = tmp_path / "g.csv"
    rc = main(["run-g", "--class", str(DATA / "golden_class.json"), "--alpha", "0.5", "--K", "40",
               "--seeds", "42", "--gamma", "1.0", "--csv", str(out)])
    assert rc == 0 and out.read_bytes() == (DATA / "golden_icvar_g_seed42.csv").read_bytes()


def test_cli_generators_validate_dp_eval(tmp_path, capsys):
    hard = tmp_path / "h.json"
    assert main(["gen-hard", "--d", "3", "--H", "4", "--n", "2", "--alpha", "0.5", "--K", "1000",
                 "--seed", "1", "--out", str(hard)]) == 0
    assert json.loads(hard.read_text())["params"]["d"] == 3
    assert main(["validate", str(hard)]) == 0
    assert json.loads(capsys.readouterr().out)["ok"] is True
    assert main(["dp", str(hard), "--alpha", "0.5"]) == 0
    dp = json.loads(capsys.readouterr().out)
    pol = tmp_path / "pi.json"
    pol.write_text(json.dumps(dp["policy"]))
    assert main(["eval", str(hard), "--policy", str(pol), "--alpha", "0.5"]) == 0
    ev = json.loads(capsys.readouterr().out)
    assert ev["gap"] == pytest.approx(0.0, abs=1e-12) and ev["V1"] == pytest.approx(dp["V1"])
    for kind in ("mixture", "tabular", "class"):
        assert main(["gen-random", "--kind", kind, "--S", "4", "--d", "2", "--out", str(tmp_path / f"{kind}.json")]) == 0
    assert main(["validate", str(tmp_path / "tabular.json")]) == 0


def test_cli_validation_failure_exit_code(tmp_path, capsys):
    m = random_linear_mixture(2, 3, 2, 2, seed=0)
    from icvar_rl import LinearMixtureMDP
    save_mdp(LinearMixtureMDP(m.features, 2 * m.thetas, m.rewards), tmp_path / "bad.json")
    assert main(["validate", str(tmp_path / "bad.json")]) == 2
    assert json.loads(capsys.readouterr().out)["ok"] is False
    assert main(["run-l", "--model", str(tmp_path / "bad.json"), "--K", "2"]) == 2
    assert main(["run-l", "--instance", json.dumps(SMALL), "--alpha", "3", "--K", "2"]) == 2


def test_cli_budget_and_io_exit_codes(tmp_path):
    cls = tmp_path / "big.json"
    cls.write_text(json.dumps({"functions": np.zeros((7, 2)).tolist()}))
    assert main(["eluder", str(cls), "--eps", "0.1"]) == 3
    assert main(["validate", str(tmp_path / "nope.json")]) == 4
    (tmp_path / "junk.json").write_text("{not json")
    assert main(["dp", str(tmp_path / "junk.json"), "--alpha", "0.5"]) == 4


def test_cli_eluder(tmp_path, capsys):
    cls = tmp_path / "c.json"
    cls.write_text(json.dumps({"functions": [[0, 0], [1, 0]]}))
    assert main(["eluder", str(cls), "--eps", "0.5"]) == 0
    assert json.loads(capsys.readouterr().out)["eluder_dimension"] == 1
    cls.write_text(json.dumps({"values": [[0, 0]]}))
    assert main(["eluder", str(cls), "--eps", "0.5"]) == 2


def test_cli_config_file_with_overrides(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"instance": SMALL, "alpha": 0.5, "K": 10, "seeds": [0], "beta": 1.0}))
    assert main(["run-l", "--config", str(cfg), "--K", "4", "--seeds", "2", "5"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 8 and {r["seed"] for r in rows} == {"2", "5"}
    js = tmp_path / "r.json"
    summ = tmp_path / "s.json"
    assert main(["run-l", "--config", str(cfg), "--beta", "theory", "--json", str(js), "--summary", str(summ)]) == 0
    assert results_from_json(js.read_text())[0].config["beta_mode"] == "theory"
    assert json.loads(summ.read_text())["K"] == 10
    assert main(["aggregate", str(js), str(js), "--format", "csv"]) == 0
    assert capsys.readouterr().out.startswith("episode,mean")
    assert main(["run-l", "--config", str(cfg), "--beta", "lots"]) == 2
