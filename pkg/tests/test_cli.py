import json

import numpy as np
import pytest

from atst.cli import EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_OK, main
from atst.errors import ConfigError
from atst.experiment import ExperimentConfig, seed_summary, sqrt_fit, sublinearity_verdict
from atst.generators import benchmark_three_state
from atst.model import save_model


@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "m.json"
    save_model(benchmark_three_state(), path)
    return path


def test_validate(model_file, tmp_path, capsys):
    assert main(["validate-model", str(model_file)]) == EXIT_OK
    bad = tmp_path / "bad.json"
    doc = json.loads(model_file.read_text())
    doc["mu"][0][1] -= 0.1
    bad.write_text(json.dumps(doc))
    assert main(["validate-model", str(bad)]) == EXIT_INVALID
    assert "s0" in capsys.readouterr().err


def test_oracle(model_file, tmp_path, capsys):
    out = tmp_path / "v.csv"
    assert main(["oracle", str(model_file), "--out", str(out)]) == EXIT_OK
    assert "s2\t4.01" in capsys.readouterr().out
    assert out.exists()


def test_estimate_and_certify(model_file, tmp_path):
    eng = tmp_path / "eng.json"
    assert main(["estimate", str(model_file), "--n", "20000", "--beta-known",
                 "--out", str(eng), "--estimates", str(tmp_path / "est.json")]) == EXIT_OK
    assert main(["certify", str(eng), "--eps", "0.2", "--model", str(model_file)]) == EXIT_OK
    assert main(["certify", str(eng), "--eps", "1e-9", "--model", str(model_file)]) \
        == EXIT_CHECK_FAILED
    assert main(["certify", str(eng), "--eps", "0.2"]) == EXIT_OK


def test_learn_writes_outputs(tmp_path):
    cfg = {"model": {"generator": "benchmark3"}, "episodes": 12, "seeds": [0, 1],
           "schedule": {"cyclic": ["s0", "s1"]}, "learner": {"c_rho": 0.01, "search_depth": 3},
           "output_dir": str(tmp_path / "out"), "write_transcripts": True}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert main(["learn", str(path)]) == EXIT_OK
    out = tmp_path / "out"
    for name in ("regret_seed0.csv", "regret_seed1.csv", "transcripts_seed0.csv",
                 "summary.json", "regret.svg"):
        assert (out / name).exists(), name
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["seeds"]) == {"0", "1"}
    assert "sublinear" in summary["verdict"]


def test_yaml_config_and_unknown_keys(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("model: {generator: benchmark3}\nepisodes: 3\n")
    assert ExperimentConfig.load(path).episodes == 3
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"model": {}, "episodes": 3, "bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"model": {}, "episodes": 0})


def test_summary_helpers():
    k = np.arange(1, 1001)
    regrets = 1 / np.sqrt(k)
    s = seed_summary(regrets)
    assert s["passed"]
    a, _ = sqrt_fit(np.cumsum(regrets))
    assert abs(a - 2) < 0.1
    assert not seed_summary(np.ones(100))["passed"]
    assert sublinearity_verdict([{"passed": True}] * 4 + [{"passed": False}])["sublinear"]
