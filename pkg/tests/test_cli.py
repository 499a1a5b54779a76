import json

import numpy as np
import pytest

from noise_id.cli import (
    EXIT_CAPABILITY,
    EXIT_OK,
    EXIT_SEARCH,
    EXIT_VALIDATION,
    main,
)


def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def binary_scenario_file(tmp_path):
    return write(
        tmp_path,
        "scenario.json",
        {
            "K": 2,
            "prior": [0.6, 0.4],
            "T": [[0.9, 0.1], [0.3, 0.7]],
            "noise_model": {"type": "explicit"},
            "seed": 1,
            "n": 200,
            "p": 3,
        },
    )


class TestCheck:
    def test_instance3_identifiable(self, binary_scenario_file, capsys):
        assert main(["check", binary_scenario_file, "--no-timestamp"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "identifiable" in out
        assert "timestamp" not in out

    def test_kruskal_p2_not_guaranteed(self, tmp_path, capsys):
        path = write(
            tmp_path,
            "p2.json",
            {"K": 2, "T": [[0.9, 0.1], [0.3, 0.7]], "p": 2},
        )
        assert main(["check", path, "--mode", "kruskal", "--no-timestamp"]) == EXIT_OK
        assert "not_guaranteed" in capsys.readouterr().out

    def test_malformed_prior_exit_2(self, tmp_path, capsys):
        path = write(
            tmp_path,
            "bad.json",
            {"K": 2, "prior": [0.5, 0.4], "T": [[0.9, 0.1], [0.3, 0.7]]},
        )
        assert main(["check", path]) == EXIT_VALIDATION

    def test_unknown_field_exit_2(self, tmp_path):
        path = write(tmp_path, "bad2.json", {"K": 2, "bogus": 1})
        assert main(["check", path]) == EXIT_VALIDATION

    def test_invalid_json_exit_2(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(["check", str(path)]) == EXIT_VALIDATION
        assert ":1:" in capsys.readouterr().err

    def test_unknown_groups_mode(self, tmp_path, capsys):
        path = write(
            tmp_path,
            "ug.json",
            {"K": 2, "features": {"d_star": 7}, "groups": {"count": 2}},
        )
        assert main(["check", path, "--mode", "unknown-groups", "--json",
                     "--no-timestamp"]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["verdict"] == "identifiable"
        assert (doc["lhs"], doc["rhs"]) == (7, 7)

    def test_generic_mode(self, tmp_path, capsys):
        path = write(
            tmp_path,
            "gen.json",
            {"K": 10, "features": {"d_star": 3, "cardinalities": 2}},
        )
        assert main(["check", path, "--mode", "generic", "--json",
                     "--no-timestamp"]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["verdict"] == "not_guaranteed"


class TestGenerate:
    def test_asymmetric_shape(self, tmp_path, capsys):
        scen = write(
            tmp_path,
            "asym.json",
            {
                "K": 3,
                "noise_model": {"type": "asymmetric", "eps": 0.3},
                "seed": 5,
                "n": 1000,
                "p": 3,
            },
        )
        out = tmp_path / "data.csv"
        assert main(["generate", scen, "-o", str(out), "--no-timestamp"]) == EXIT_OK
        lines = out.read_text().splitlines()
        assert len(lines) == 1001
        assert lines[0] == "y,ytilde_1,ytilde_2,ytilde_3"

    def test_byte_identical_reruns(self, tmp_path):
        scen = write(
            tmp_path,
            "asym.json",
            {"K": 2, "noise_model": {"type": "asymmetric", "eps": 0.2},
             "seed": 9, "n": 500, "p": 3},
        )
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["generate", scen, "-o", str(a), "--no-timestamp"])
        main(["generate", scen, "-o", str(b), "--no-timestamp"])
        assert a.read_bytes() == b.read_bytes()

    def test_instance_model_emit_rows(self, tmp_path):
        scen = write(
            tmp_path,
            "inst.json",
            {"K": 3, "noise_model": {"type": "instance", "eps": 0.2, "S": 4},
             "seed": 2, "n": 50},
        )
        out = tmp_path / "inst.csv"
        assert main(
            ["generate", scen, "-o", str(out), "--emit-rows", "--no-timestamp"]
        ) == EXIT_OK
        rows = np.loadtxt(tmp_path / "inst.rows.csv", delimiter=",")
        assert rows.shape == (50, 3)
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-9)

    def test_strict_requires_seed(self, tmp_path):
        scen = write(
            tmp_path,
            "noseed.json",
            {"K": 2, "noise_model": {"type": "asymmetric", "eps": 0.2}, "n": 10},
        )
        out = tmp_path / "x.csv"
        assert main(["generate", scen, "-o", str(out), "--strict"]) == EXIT_VALIDATION
        assert main(["generate", scen, "-o", str(out)]) == EXIT_OK


class TestEstimate:
    def test_exact_binary(self, binary_scenario_file, capsys):
        assert main(
            ["estimate", binary_scenario_file, "--exact", "--json", "--no-timestamp"]
        ) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["err"] < 1e-4
        assert doc["residual"] < 1e-10
        assert doc["converged"] is True

    def test_p2_dataset_exit_3(self, tmp_path, capsys):
        scen = write(
            tmp_path,
            "p2.json",
            {"K": 2, "noise_model": {"type": "asymmetric", "eps": 0.2},
             "seed": 0, "n": 100, "p": 2},
        )
        out = tmp_path / "p2.csv"
        main(["generate", scen, "-o", str(out), "--no-timestamp"])
        assert main(["estimate", str(out)]) == EXIT_CAPABILITY
        assert "three" in capsys.readouterr().err

    def test_sampled_estimate_with_truth(self, tmp_path, capsys):
        scen = write(
            tmp_path,
            "s.json",
            {"K": 2, "noise_model": {"type": "asymmetric", "eps": 0.2},
             "seed": 0, "n": 60000, "p": 3},
        )
        out = tmp_path / "s.csv"
        main(["generate", scen, "-o", str(out), "--no-timestamp"])
        capsys.readouterr()
        truth = write(tmp_path, "truth.json", [[0.8, 0.2], [0.2, 0.8]])
        assert main(
            ["estimate", str(out), "--truth", truth, "--json", "--no-timestamp"]
        ) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["err"] <= 2.0

    def test_deterministic_report(self, binary_scenario_file, capsys):
        main(["estimate", binary_scenario_file, "--exact", "--no-timestamp"])
        first = capsys.readouterr().out
        main(["estimate", binary_scenario_file, "--exact", "--no-timestamp"])
        assert capsys.readouterr().out == first


class TestWitness:
    def test_reference_witness(self, capsys):
        assert main(
            ["witness", "0.7", "0.2", "0.2", "--json", "--no-timestamp"]
        ) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["statistic_residual"] <= 1e-8
        assert doc["parameter_distance"] >= 0.01

    def test_clean_corner_exit_4(self, capsys):
        assert main(["witness", "1", "0", "0"]) == EXIT_SEARCH

    def test_deterministic(self, capsys):
        main(["witness", "0.7", "0.2", "0.2", "--no-timestamp", "--seed", "3"])
        first = capsys.readouterr().out
        main(["witness", "0.7", "0.2", "0.2", "--no-timestamp", "--seed", "3"])
        assert capsys.readouterr().out == first


class TestSimulate2nn:
    def params(self, tmp_path, N):
        return write(
            tmp_path,
            "params.json",
            {
                "lambda": [1.0, 2.0, 3.0],
                "N": N,
                "epsilon_close": 0.0,
                "label_probs": [[1, 0], [0, 1], [1, 0], [0, 1], [1, 0]],
                "T": [[0.8, 0.2], [0.3, 0.7]],
            },
        )

    def test_above_threshold(self, tmp_path, capsys):
        path = self.params(tmp_path, 500)
        assert main(
            ["simulate-2nn", path, "--trials", "20", "--json", "--no-timestamp"]
        ) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["clears_threshold"] is True
        assert doc["all_satisfied_fraction"] >= 0.99

    def test_below_threshold_flagged(self, tmp_path, capsys):
        path = self.params(tmp_path, 3)
        assert main(
            ["simulate-2nn", path, "--trials", "5", "--json", "--no-timestamp"]
        ) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["clears_threshold"] is False

    def test_missing_field_exit_2(self, tmp_path):
        path = write(tmp_path, "bad.json", {"lambda": [1.0]})
        assert main(["simulate-2nn", path]) == EXIT_VALIDATION


class TestBound:
    def test_midpoint(self, tmp_path, capsys):
        t1 = write(tmp_path, "t1.json", [[1, 0], [0, 1]])
        t2 = write(tmp_path, "t2.json", [[0, 1], [1, 0]])
        ts = write(tmp_path, "ts.json", [[0.5, 0.5], [0.5, 0.5]])
        assert main(["bound", t1, t2, ts, "--json", "--no-timestamp"]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["lhs"] == pytest.approx(2.0)
        assert doc["rhs"] == pytest.approx(2**0.5)
        assert doc["holds"] is True

    def test_missing_file_exit_2(self, tmp_path):
        t1 = write(tmp_path, "t1.json", [[1, 0], [0, 1]])
        assert main(["bound", t1, t1, str(tmp_path / "nope.json")]) == EXIT_VALIDATION
