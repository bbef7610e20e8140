import csv
import json
from pathlib import Path

import numpy as np
import pytest

from oqs import __version__
from oqs.cli import main
from oqs.config import (EXPERIMENTS, ErrorMapConfig, ImbalanceConfig, config_hash, expand_range,
                        load_config, parse_config)
from oqs.errors import ConfigError
from oqs.experiments import (BROWNIAN_COLUMNS, ERRORMAP_COLUMNS, IMBALANCE_COLUMNS,
                             WEIGHTS_COLUMNS, optim_compare_columns)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

WEIGHTS = {"experiment": "weights", "model": {"l": 4, "N": 2, "J": 1.0, "V": 2.0},
           "bath": {"Ec": 17.0, "gamma": 0.1}, "grid": {"beta": [0.01, 0.02]}}


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    header = [ln for ln in lines if ln.startswith("#")]
    rows = list(csv.DictReader([ln for ln in lines if not ln.startswith("#")]))
    return header, rows


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.name)
def test_shipped_configs_parse(path):
    raw = json.loads(path.read_text())
    loaded = load_config(path, raw["experiment"])
    assert loaded.sha256 == config_hash(raw)


def test_defaults():
    cfg = parse_config({"experiment": "errormap"}, "errormap").params
    assert cfg == ErrorMapConfig()
    assert len(cfg.T) == 12 and len(cfg.gamma) == 12
    assert cfg.tau_factor == 2.0
    assert parse_config({"experiment": "errormap", "bath": {"coupling": "global"}},
                        "errormap").params.tau_factor == 1.0
    assert parse_config({"experiment": "imbalance"}, "imbalance").params == ImbalanceConfig()


def test_expand_range():
    np.testing.assert_allclose(expand_range({"logspace": [1, 100, 3]}), [1, 10, 100])
    np.testing.assert_allclose(expand_range({"linspace": [1, 2, 3]}), [1, 1.5, 2])
    assert expand_range([3, 1]) == (3.0, 1.0)


@pytest.mark.parametrize("raw", [
    {"experiment": "weights", "colour": 1},
    {"experiment": "weights", "model": {"l": 5, "N": 2, "U": 2.0}},
    {"experiment": "weights", "grid": {"beta": {"logspace": [1, 2, 3], "extra": 1}}},
    {"experiment": "weights", "model": {"l": 3, "N": 5}},
    {"experiment": "weights", "site": 9},
    {"experiment": "weights", "bath": {"gamma": -1.0}},
    {"experiment": "errormap"},
    [1, 2],
])
def test_config_errors(raw):
    with pytest.raises(ConfigError):
        parse_config(raw, "weights")


def test_imbalance_burn_in_check():
    with pytest.raises(ConfigError):
        parse_config({"experiment": "imbalance",
                      "trajectories": {"t_max": 10.0, "burn_in": 20.0}}, "imbalance")


def test_hash_is_order_independent():
    a = {"experiment": "weights", "site": 1, "bath": {"Ec": 1.0, "gamma": 0.1}}
    b = {"bath": {"gamma": 0.1, "Ec": 1.0}, "site": 1, "experiment": "weights"}
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(dict(a, site=2))


def test_cli_weights_outputs(tmp_path):
    cfg = write(tmp_path, WEIGHTS)
    out = tmp_path / "out"
    assert main(["weights", "--config", cfg, "--out", str(out), "--seed", "17"]) == 0
    header, rows = read_csv(out / "weights.csv")
    assert header[0] == f"# oqs {__version__}"
    assert header[1] == "# experiment: weights"
    assert header[2] == f"# config_sha256: {config_hash(WEIGHTS)}"
    assert header[3] == "# seed: 17"
    assert tuple(rows[0]) == WEIGHTS_COLUMNS
    assert len(rows) == 2
    meta = json.loads((out / "weights.meta.json").read_text())
    assert meta["config_sha256"] == config_hash(WEIGHTS)
    assert meta["version"] == __version__
    assert meta["seed"] == 17
    assert meta["columns"] == list(WEIGHTS_COLUMNS)
    assert "loglog_slope" in meta["summary"]


def test_cli_deterministic(tmp_path):
    cfg = write(tmp_path, WEIGHTS)
    for d in ("a", "b"):
        assert main(["weights", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    for f in ("weights.csv", "weights.meta.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_cli_config_errors(tmp_path):
    assert main(["weights", "--config", write(tmp_path, dict(WEIGHTS, bogus=1))]) == 2
    assert main(["weights", "--config", write(tmp_path, "{not json")]) == 2
    assert main(["weights", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["brownian", "--config", write(tmp_path, WEIGHTS)]) == 2


@pytest.mark.parametrize("argv", [
    ["weights"],
    ["nonsense", "--config", "x.json"],
    ["weights", "--config", "x.json", "--seed", "-1"],
    ["weights", "--config", "x.json", "--seed", str(2**64)],
    ["weights", "--config", "x.json", "--threads", "0"],
])
def test_cli_argument_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_cli_numerical_failure(tmp_path):
    # beta * Ec hits the first Matsubara pole
    raw = dict(WEIGHTS, grid={"beta": [2 * np.pi / 17.0]})
    assert main(["weights", "--config", write(tmp_path, raw), "--out", str(tmp_path)]) == 3


def test_cli_small_errormap(tmp_path):
    raw = {"experiment": "errormap", "model": {"l": 3, "N": 1},
           "grid": {"T": [2.0, 20.0], "gamma": [0.2]},
           "transient": {"n_times": 11}}
    assert main(["errormap", "--config", write(tmp_path, raw), "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "errormap.csv")
    assert tuple(rows[0]) == ERRORMAP_COLUMNS
    assert len(rows) == 2
    for r in rows:
        assert float(r["d_trunc_ss"]) >= 0 and float(r["d_RWA_transient"]) >= 0


def test_cli_small_imbalance(tmp_path):
    raw = {"experiment": "imbalance", "grid": {"l": [4], "gamma": [0.2]},
           "methods": ["rwa", "truncated", "trajectories"],
           "trajectories": {"n_traj": 4, "t_max": 10.0, "burn_in": 5.0}}
    assert main(["imbalance", "--config", write(tmp_path, raw), "--out", str(tmp_path),
                 "--seed", "3"]) == 0
    header, rows = read_csv(tmp_path / "imbalance.csv")
    assert tuple(rows[0]) == IMBALANCE_COLUMNS
    assert [r["method"] for r in rows] == ["rwa", "truncated", "trajectories"]
    assert abs(float(rows[0]["delta_N"])) < 1e-8


def test_cli_small_optim_and_brownian(tmp_path):
    raw = {"experiment": "optim-compare", "model": {"l": 3, "N": 1}, "time": {"n_times": 11}}
    assert main(["optim-compare", "--config", write(tmp_path, raw), "--out", str(tmp_path)]) == 0
    _, rows = read_csv(tmp_path / "optim-compare.csv")
    assert tuple(rows[0]) == optim_compare_columns(3)
    raw = {"experiment": "brownian", "grid": {"T": [5.0, 10.0]}}
    assert main(["brownian", "--config", write(tmp_path, raw, "b.json"), "--out", str(tmp_path)]) == 0
    _, rows = read_csv(tmp_path / "brownian.csv")
    assert tuple(rows[0]) == BROWNIAN_COLUMNS


def test_all_experiments_have_schemas():
    for name in EXPERIMENTS:
        assert parse_config({"experiment": name}, name).experiment == name
