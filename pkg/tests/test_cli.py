import csv

import numpy as np
import pytest

from conftest import toy_cubic_dataset
from pbp.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main


@pytest.fixture
def toy_csv(tmp_path):
    ds = toy_cubic_dataset(60, seed=2)
    path = tmp_path / "toy.csv"
    with open(path, "w") as fh:
        fh.write("x,y\n")
        for row, target in zip(ds.features, ds.targets):
            fh.write(f"{float(row[0])!r},{float(target)!r}\n")
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestTrainCommand:
    def test_happy_path_writes_model(self, toy_csv, tmp_path, capsys):
        out = tmp_path / "m.json"
        code = main(
            [
                "train", "--data", str(toy_csv), "--target", "y",
                "--hidden", "4", "--epochs", "2", "--seed", "1",
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        assert out.exists()
        text = capsys.readouterr().out
        assert "epochs_run: 2" in text
        assert "test_rmse:" in text

    def test_zero_epochs_prior_only(self, toy_csv, tmp_path):
        out = tmp_path / "m.json"
        code = main(
            ["train", "--data", str(toy_csv), "--epochs", "0", "--out", str(out)]
        )
        assert code == EXIT_OK
        from pbp.data import load_model

        model = load_model(out)
        for layer in model.net.layers:
            assert np.allclose(layer.variances, 1.2)

    def test_missing_file_exit_code_and_message(self, tmp_path, capsys):
        missing = tmp_path / "nope.csv"
        code = main(["train", "--data", str(missing), "--out", str(tmp_path / "m.json")])
        assert code == EXIT_DATA
        assert str(missing) in capsys.readouterr().err


class TestPredictCommand:
    def _train(self, toy_csv, tmp_path):
        out = tmp_path / "m.json"
        assert (
            main(
                [
                    "train", "--data", str(toy_csv), "--hidden", "4",
                    "--epochs", "2", "--out", str(out),
                ]
            )
            == EXIT_OK
        )
        return out

    def test_single_row(self, toy_csv, tmp_path):
        model = self._train(toy_csv, tmp_path)
        feats = tmp_path / "f.csv"
        feats.write_text("0.5\n")
        out = tmp_path / "p.csv"
        code = main(["predict", "--model", str(model), "--data", str(feats), "--out", str(out)])
        assert code == EXIT_OK
        rows = read_rows(out)
        assert rows[0] == ["mean", "variance"]
        assert len(rows) == 2

    def test_variance_at_least_noise_floor(self, toy_csv, tmp_path):
        model_path = self._train(toy_csv, tmp_path)
        feats = tmp_path / "f.csv"
        feats.write_text("0.0\n1.5\n-2.0\n")
        out = tmp_path / "p.csv"
        assert main(["predict", "--model", str(model_path), "--data", str(feats), "--out", str(out)]) == EXIT_OK
        from pbp.data import load_model
        from pbp.prediction import noise_floor

        model = load_model(model_path)
        floor = noise_floor(model.net) * model.norm.target_std**2
        for row in read_rows(out)[1:]:
            assert float(row[1]) >= floor * (1 - 1e-12)

    def test_dimension_mismatch(self, toy_csv, tmp_path, capsys):
        model = self._train(toy_csv, tmp_path)
        feats = tmp_path / "f.csv"
        feats.write_text("0.5,0.7\n")
        code = main(["predict", "--model", str(model), "--data", str(feats), "--out", "-"])
        assert code == EXIT_DATA
        assert "expects 1" in capsys.readouterr().err


class TestBenchmarkCommand:
    def test_schema_and_determinism(self, toy_csv, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = [
            "benchmark", "--data", str(toy_csv), "--hidden", "3",
            "--epochs", "2", "--splits", "3", "--seed", "5",
        ]
        assert main(args + ["--out", str(a)]) == EXIT_OK
        assert main(args + ["--out", str(b)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()

        rows = read_rows(a)
        assert rows[0] == ["split", "rmse", "rmse_stderr", "log_likelihood", "ll_stderr"]
        assert len(rows) == 1 + 3 + 1  # header, splits, summary
        assert rows[-1][0] == "mean"
        per_split = np.array([float(r[1]) for r in rows[1:4]])
        assert float(rows[-1][1]) == pytest.approx(per_split.mean())
        assert float(rows[-1][2]) == pytest.approx(
            per_split.std(ddof=1) / np.sqrt(3)
        )

    def test_jobs_flag_matches_serial(self, toy_csv, tmp_path):
        serial, parallel = tmp_path / "s.csv", tmp_path / "p.csv"
        args = [
            "benchmark", "--data", str(toy_csv), "--hidden", "3",
            "--epochs", "1", "--splits", "2", "--seed", "3",
        ]
        assert main(args + ["--out", str(serial)]) == EXIT_OK
        assert main(args + ["--jobs", "2", "--out", str(parallel)]) == EXIT_OK
        assert serial.read_bytes() == parallel.read_bytes()


class TestActiveCommand:
    def test_smoke_run_produces_curves(self, toy_csv, tmp_path):
        prefix = tmp_path / "curve"
        code = main(
            [
                "active", "--data", str(toy_csv), "--hidden", "3", "--epochs", "2",
                "--policy", "both", "--initial-train", "8", "--test-size", "10",
                "--acquisitions", "9", "--repetitions", "2", "--seed", "4",
                "--out", str(prefix),
            ]
        )
        assert code == EXIT_OK
        for policy in ("active", "random"):
            rows = read_rows(tmp_path / f"curve_{policy}.csv")
            assert rows[0] == ["step", "mean_rmse", "stderr"]
            assert len(rows) == 1 + 10  # header + 10 evaluations


class TestUsageErrors:
    def test_unknown_flag(self, capsys):
        assert main(["train", "--nonsense"]) == EXIT_USAGE

    def test_missing_subcommand(self):
        assert main([]) == EXIT_USAGE

    def test_bad_fraction_is_data_error(self, toy_csv, tmp_path):
        code = main(
            [
                "train", "--data", str(toy_csv), "--test-fraction", "2.0",
                "--out", str(tmp_path / "m.json"),
            ]
        )
        assert code == EXIT_DATA
