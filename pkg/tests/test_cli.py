import json
import os

import numpy as np
import pytest

from greenlab.cli import COMMANDS, Artifacts, _validate_entry, main, resolve_map
from greenlab.config import ExperimentConfig, dump_config
from greenlab.endomorphism import map_to_dict
from greenlab.errors import ConfigError
from greenlab.zoo import save_entry, zoo_entry


@pytest.fixture(autouse=True)
def single_worker(monkeypatch):
    monkeypatch.setenv("GREENLAB_THREADS", "1")


@pytest.fixture()
def run(tmp_path):
    def run(subcommand, out="out", **overrides):
        values = dict(
            map="power_2_1",
            seed=4,
            sample_count=200,
            dimension_count=2000,
            n_orbits=100,
            n_steps=50,
            n_range=[0, 2, 4],
            max_n=4,
            trace_points=2,
        )
        values.update(overrides)
        path = str(tmp_path / "config.yaml")
        dump_config(ExperimentConfig(**values), path)

        output = str(tmp_path / out)
        return main([subcommand, "--config", path, "--out", output, "--verbose", "0"]), output

    return run


def last_error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def read(path):
    with open(path, "rb") as file:
        return file.read()


def test_sample_reruns_are_identical(run):
    status, first = run("sample", out="first")
    assert status == 0
    status, second = run("sample", out="second")
    assert status == 0

    content = read(os.path.join(first, "sample.csv"))
    assert content == read(os.path.join(second, "sample.csv"))
    assert b"# seed=4" in content
    assert b"# config_hash=" in content


def test_exponents(run):
    status, output = run("exponents")
    assert status == 0

    with open(os.path.join(output, "exponents.json")) as file:
        report = json.load(file)
    assert report["lambdas"][0] == pytest.approx(np.log(2.0), abs=1e-3)
    assert report["minimal"] is False
    assert report["seed"] == 4
    assert len(report["config_hash"]) == 64


def test_masses(run):
    status, output = run("masses", sample_count=500, rho=[0.1], tau=[2.0, 10.0], nu=[0.3])
    assert status == 0
    assert sorted(os.listdir(os.path.join(output, "masses"))) == [
        "rho=0.1_tau=10_nu=0.3.csv",
        "rho=0.1_tau=2_nu=0.3.csv",
    ]


def test_linearize(run):
    status, output = run("linearize")
    assert status == 0

    names = sorted(os.listdir(os.path.join(output, "traces")))
    assert names == ["point_0000.json", "point_0001.json"]
    with open(os.path.join(output, "traces", names[0])) as file:
        traces = json.load(file)
    assert traces["sqrt_d"]["kind"] != traces["inverse_differential"]["kind"]


def test_power_map_verdict(run):
    status, output = run("verdict")
    assert status == 0

    with open(os.path.join(output, "verdict.json")) as file:
        verdict = json.load(file)
    assert verdict["minimality"] == "fail"
    assert verdict["dimension_max"] == "fail"
    assert verdict["measured_dimension"] == pytest.approx(1.0, abs=0.1)
    assert verdict["lattes_verdict"] == "inconsistent"


def test_lattes_verdict(run):
    status, output = run(
        "verdict",
        map="lattes_doubling",
        sample_count=500,
        dimension_count=5000,
        n_orbits=300,
        n_steps=100,
        n_range=[0, 4, 8, 12],
    )
    assert status == 0

    with open(os.path.join(output, "verdict.json")) as file:
        verdict = json.load(file)
    assert verdict["minimality"] == "pass"
    assert verdict["dimension_max"] == "pass"
    assert verdict["v_mass_decay"] == "no"
    assert verdict["lattes_verdict"] == "consistent"


def test_unknown_map(run, capsys):
    status, output = run("sample", map="no_such_map")
    assert status == 2
    assert last_error(capsys)["error"] == "config"
    assert not os.path.exists(output)


def test_bad_config_file(tmp_path, capsys):
    path = tmp_path / "config.yaml"
    path.write_text("sample_count: -3\n")
    assert main(["sample", "--config", str(path), "--out", str(tmp_path / "out"), "--verbose", "0"]) == 2
    assert last_error(capsys)["exit_code"] == 2


def test_unsupported_sampler(run, capsys):
    status, output = run("sample", map="power_2_2")
    assert status == 4
    assert last_error(capsys)["error"] == "unsupported"
    assert not os.path.exists(os.path.join(output, "sample.csv"))


def test_failed_runs_leave_nothing_behind(tmp_path):
    config = ExperimentConfig(output_dir=str(tmp_path / "out"))
    artifacts = Artifacts(config)
    artifacts.write_json({"value": 1}, "nested", "deeper", "first.json")
    artifacts.write_json({"value": 2}, "second.json")
    assert os.path.exists(os.path.join(config.output_dir, "nested", "deeper", "first.json"))

    artifacts.remove()
    assert not os.path.exists(config.output_dir)


def test_resolve_map(tmp_path):
    assert resolve_map("chebyshev_2").label == "chebyshev_2"

    entry = zoo_entry("lattes_doubling")
    map_path, _ = save_entry(entry, str(tmp_path))
    assert resolve_map(os.path.dirname(map_path)).label == "lattes_doubling"
    assert resolve_map(map_path).label == "lattes_doubling"

    with pytest.raises(ConfigError):
        resolve_map(str(tmp_path / "missing"))


def test_non_finite_map_file(run, tmp_path, capsys):
    data = map_to_dict(zoo_entry("power_2_1").map)
    data["components"][0][0]["re"] = float("nan")
    path = tmp_path / "nan_map.json"
    path.write_text(json.dumps(data))

    status, output = run("sample", map=str(path))
    assert status == 3
    assert last_error(capsys)["error"] == "domain"
    assert not os.path.exists(output)


def test_linear_algebra_failures_exit_as_numerical(run, monkeypatch, capsys):
    def broken(f, config, artifacts):
        artifacts.write_json({"value": 1}, "partial.json")
        raise np.linalg.LinAlgError("Singular matrix")

    monkeypatch.setitem(COMMANDS, "sample", broken)
    status, output = run("sample")
    assert status == 3

    error = last_error(capsys)
    assert error["error"] == "numeric"
    assert "LinAlgError" in error["message"]
    assert not os.path.exists(os.path.join(output, "partial.json"))


def test_validation_of_the_lattes_entry():
    checks = _validate_entry(zoo_entry("lattes_doubling"), ExperimentConfig(seed=5))

    assert checks["dimension"]["measured"] > 1.8
    assert checks["dimension"]["maximal"] is True
    assert checks["doubling"]["residual"] < 1e-9
    assert "not_lattes" not in checks
    assert checks["minimality"]["pass"] is True


@pytest.mark.parametrize("label", ["power_2_1", "perturbed_power_0.1"])
def test_validation_of_non_lattes_entries(label):
    checks = _validate_entry(zoo_entry(label), ExperimentConfig(seed=5))

    assert checks["not_lattes"]["pass"] is True
    assert checks["minimality"]["minimal"] is False
    assert checks["dimension"]["maximal"] is False
    assert "doubling" not in checks and "semiconjugacy" not in checks


def test_validation_rechecks_the_symmetric_square():
    checks = _validate_entry(zoo_entry("ueda_power_2_1"), ExperimentConfig(seed=5))

    assert checks["semiconjugacy"]["pass"] is True
    assert checks["not_lattes"]["pass"] is True
