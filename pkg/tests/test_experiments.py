import json
import math

import numpy as np
import pytest

from lacuna import experiments as ex
from lacuna.errors import ConfigError


SMALL = dict(resolution=6, seq="pow2:6", trials=3, spike_depths=(8, 12), cakes=30, max_k=10)


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        ex.ExperimentConfig.from_dict({"resolutoin": 5})
    with pytest.raises(ConfigError):
        ex.ExperimentConfig(families=("nope",))
    with pytest.raises(ConfigError):
        ex.ExperimentConfig(seq="4,2")
    with pytest.raises(ConfigError):
        ex.ExperimentConfig(trials=-1)
    with pytest.raises(ConfigError):
        ex.ExperimentConfig(p_grid=(0.5,)).check_p_grid()
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"resolution": 5, "families": ["uniform", "spikes"]}))
    cfg = ex.ExperimentConfig.from_file(path)
    assert cfg.resolution == 5 and cfg.families == ("uniform", "spikes")
    assert cfg.replace(seed=None, trials=7).trials == 7
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        ex.ExperimentConfig.from_file(path)


def test_families_are_seeded():
    cfg = ex.ExperimentConfig(**SMALL, families=tuple(ex.FAMILIES))
    a, b = ex.make_family(cfg), ex.make_family(cfg)
    assert [n for n, _ in a] == [n for n, _ in b]
    assert len(a) == 3 * len(ex.FAMILIES)
    assert all(np.array_equal(f.values, g.values) for (_, f), (_, g) in zip(a, b))
    other = ex.make_family(cfg.replace(seed=1))
    assert not all(np.array_equal(f.values, g.values) for (_, f), (_, g) in zip(a, other))


@pytest.mark.parametrize("run", [ex.run_weak_lp_sweep, ex.run_estimate_ww, ex.run_embedding,
                                 ex.run_strong_lp])
def test_reports_are_deterministic(run):
    cfg = ex.ExperimentConfig(**SMALL, families=("signs", "spikes"))
    a, b = ex.report_json(run(cfg)), ex.report_json(run(cfg))
    assert a == b
    rep = json.loads(a)
    assert set(rep) >= {"experiment", "config", "rows", "constants", "pass"}
    assert isinstance(rep["pass"], bool)


def test_exp_tail_small():
    cfg = ex.ExperimentConfig(resolution=6, seq="ones:6", trials=2, families=("uniform",))
    rep = ex.run_exp_tail(cfg)
    assert rep["rows"] and "pass" in rep


def test_report_serialization(tmp_path):
    rep = {"experiment": "x", "config": {}, "constants": {"rate": math.inf, "c": np.float64(2.5)},
           "rows": [{"b": 1, "a": [1, 2]}, {"a": [3], "b": np.int64(2)}], "pass": np.bool_(True)}
    text = ex.emit_report(rep, "json", tmp_path / "r.json")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["constants"]["rate"] == "inf" and data["pass"] is True
    assert text == ex.report_json(rep)
    csv_text = ex.emit_report(rep, "csv")
    assert csv_text.splitlines() == ["a,b", '"[1, 2]",1', "[3],2"]
    with pytest.raises(ConfigError):
        ex.emit_report(rep, "toml")
