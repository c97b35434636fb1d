import json
import math
from importlib import resources

import numpy as np
import pytest
from jsonschema import Draft202012Validator
from referencing import Registry, Resource

from selclust.cli import main
from selclust.io import load_schema, write_csv


def validator(name):
    files = resources.files("selclust") / "schemas"
    registry = Registry().with_resources(
        (f.name, Resource.from_contents(json.loads(f.read_text()))) for f in files.iterdir() if f.name.endswith(".json")
    )
    schema = load_schema(name)
    Draft202012Validator.check_schema(schema)
    return Draft202012Validator(schema, registry=registry)


@pytest.fixture
def data(tmp_path):
    rng = np.random.default_rng(11)
    x = np.vstack([rng.normal(0, 1, (8, 2)), rng.normal(7, 1, (8, 2)), rng.normal([0, 9], 1, (8, 2))])
    path = tmp_path / "x.csv"
    write_csv(path, x, ["a", "b"])
    return path


def run(argv, tmp_path):
    out = tmp_path / "out.json"
    code = main([*argv, "--out", str(out)])
    return code, (json.loads(out.read_text()) if out.exists() else None)


def test_cluster_command(data, tmp_path):
    code, out = run(["cluster", "--input", str(data), "--k", "3"], tmp_path)
    assert code == 0
    validator("cluster_output").validate(out)
    assert out["clusters"][0]["members"][0] == 1
    assert sorted(set(out["labels"])) == [1, 2, 3]


def test_test_command_pair(data, tmp_path):
    code, out = run(["test", "--input", str(data), "--k", "3", "--pair", "1,3", "--sigma", "1"], tmp_path)
    assert code == 0
    validator("test_output").validate(out)
    (res,) = out["results"]
    assert res["clusters"] == [1, 3] and res["method"] == "exact"
    assert res["wald_p_value"] <= res["p_value"]


def test_all_pairs_and_random(data, tmp_path):
    code, out = run(["test", "--input", str(data), "--k", "3", "--all-pairs", "--estimate-sigma"], tmp_path)
    assert code == 0 and len(out["results"]) == 3
    assert {r["method"] for r in out["results"]} == {"plugin"}
    validator("test_output").validate(out)
    code, out = run(["test", "--input", str(data), "--k", "3", "--pair", "random", "--seed", "4", "--sigma", "1"],
                    tmp_path)
    assert code == 0 and len(out["results"]) == 1


def test_sigma_from_other_file(data, tmp_path):
    other = tmp_path / "o.csv"
    write_csv(other, np.random.default_rng(0).normal(0, 3, (30, 2)))
    code, out = run(["test", "--input", str(data), "--k", "3", "--pair", "1,2", "--estimate-sigma",
                     "--sigma-data", str(other)], tmp_path)
    assert code == 0 and 2 < out["sigma"] < 4


def test_covariance_and_monte_carlo(data, tmp_path):
    cov = tmp_path / "cov.csv"
    write_csv(cov, [[1.0, 0.2], [0.2, 1.0]])
    code, out = run(["test", "--input", str(data), "--k", "3", "--pair", "1,2", "--cov", str(cov)], tmp_path)
    assert code == 0 and out["results"][0]["method"] == "covariance"
    assert out["results"][0]["sigma_used"] is None
    validator("test_output").validate(out)
    code, out = run(["test", "--input", str(data), "--k", "3", "--pair", "1,2", "--sigma", "1",
                     "--linkage", "complete", "--mc-samples", "200"], tmp_path)
    assert code == 0
    res = out["results"][0]
    assert res["method"] == "monte_carlo" and res["n_samples"] == 200
    validator("test_output").validate(out)


def test_tiny_p_value_display(tmp_path):
    x = np.array([[0.0] * 5, [0.01] * 5, [300.0] * 5, [300.03] * 5])
    path = tmp_path / "far.csv"
    write_csv(path, x)
    code, out = run(["test", "--input", str(path), "--k", "2", "--pair", "1,2", "--sigma", "0.5"], tmp_path)
    assert code == 0
    res = out["results"][0]
    assert res["wald_p_value_display"] == "<1e-307"
    assert res["log_p_value"] < math.log(1e-307)


def test_two_point_file_matches_wald(tmp_path):
    path = tmp_path / "two.csv"
    path.write_text("0,0\n2,1\n")
    code, out = run(["test", "--input", str(path), "--k", "2", "--pair", "1,2", "--sigma", "1"], tmp_path)
    res = out["results"][0]
    assert res["truncation_set"] == [[0.0, "inf", False, True]]
    assert res["p_value"] == pytest.approx(res["wald_p_value"], rel=1e-12)


@pytest.mark.parametrize(
    "argv,code",
    [
        (["--k", "3", "--pair", "1,3"], 2),
        (["--k", "3", "--pair", "1,9", "--sigma", "1"], 2),
        (["--k", "3", "--pair", "1,3", "--sigma", "1", "--linkage", "complete", "--method", "exact"], 2),
        (["--k", "3", "--pair", "1,3", "--sigma", "-1"], 3),
        (["--k", "3", "--pair", "1,3", "--sigma", "1", "--sigma-data", "x.csv"], 2),
    ],
)
def test_test_command_errors(data, tmp_path, argv, code):
    assert main(["test", "--input", str(data), *argv]) == code


def test_argparse_errors_exit_2(data):
    with pytest.raises(SystemExit) as info:
        main(["test", "--input", str(data), "--k", "3", "--pair", "1,3", "--sigma", "1", "--cov", "c.csv"])
    assert info.value.code == 2


def test_data_errors_exit_3(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3\n")
    assert main(["cluster", "--input", str(bad), "--k", "1"]) == 3
    assert main(["cluster", "--input", str(tmp_path / "missing.csv"), "--k", "1"]) == 3


def test_numerical_errors_exit_4(tmp_path):
    # two clusters with identical means: the mean-difference direction is undefined
    path = tmp_path / "sym.csv"
    path.write_text("-1\n1\n-1.01\n1.01\n")
    code = main(["test", "--input", str(path), "--k", "2", "--pair", "1,2", "--sigma", "1", "--linkage", "single"])
    assert code in (0, 4)
    path.write_text("0,0\n0,0\n")
    assert main(["test", "--input", str(path), "--k", "2", "--pair", "1,2", "--sigma", "1"]) == 4


@pytest.mark.parametrize("linkage", ["average", "single"])
def test_oracle_check_passes(tmp_path, linkage):
    code, out = run(["oracle-check", "--linkage", linkage, "--instances", "4", "--n", "12"], tmp_path)
    assert code == 0 and out["passed"]
    validator("oracle_report").validate(out)


def test_oracle_check_mutation_detected(tmp_path):
    code, out = run(["oracle-check", "--instances", "2", "--mutate"], tmp_path)
    assert code == 1 and not out["passed"]


def test_oracle_check_cap(tmp_path, data):
    assert main(["oracle-check", "--n", "30"]) == 2
    assert main(["oracle-check", "--input", str(data), "--cap", "10"]) == 2


def test_simulate_outputs(tmp_path):
    argv = ["simulate", "--study", "null", "--reps", "10", "--n", "30", "--q", "2", "--seed", "3"]
    svg1, svg2 = tmp_path / "a.svg", tmp_path / "b.svg"
    assert main([*argv, "--svg", str(svg1), "--csv", str(tmp_path / "r.csv"), "--out", str(tmp_path / "a.json")]) == 0
    assert main([*argv, "--svg", str(svg2), "--out", str(tmp_path / "b.json")]) == 0
    assert svg1.read_bytes() == svg2.read_bytes()
    out = json.loads((tmp_path / "a.json").read_text())
    validator("sim_report").validate(out)
    assert len((tmp_path / "r.csv").read_text().splitlines()) == 11


def test_simulate_empty(tmp_path):
    csv_path = tmp_path / "r.csv"
    assert main(["simulate", "--study", "null", "--reps", "0", "--csv", str(csv_path),
                 "--out", str(tmp_path / "s.json")]) == 0
    assert csv_path.read_text().startswith("replicate,p_value")
    assert len(csv_path.read_text().splitlines()) == 1


@pytest.mark.parametrize("study", ["conditional_power", "plugin_sigma", "effect_size"])
def test_simulate_other_studies(tmp_path, study):
    argv = ["simulate", "--study", study, "--reps", "5", "--n", "30", "--deltas", "5"]
    code, out = run(argv, tmp_path)
    assert code == 0
    validator("sim_report").validate(out)
