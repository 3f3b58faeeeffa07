import json

import numpy as np
import pytest

from deeplube.cli import main
from deeplube.dataio import load_series, synth_series, write_series
from deeplube.metrics import EvaluationSet, cwc_original, cwc_proposed, picp, read_predictions
from deeplube.network import NetworkDims, ParameterSet

SMALL = ["--hidden", "4", "--fc", "3", "--epochs", "2", "--seed", "1"]


@pytest.fixture
def series_csv(tmp_path):
    path = tmp_path / "series.csv"
    write_series(synth_series(length=300, noise=0.1, seed=0), path)
    return path


@pytest.fixture(autouse=True)
def _out_root(tmp_path, monkeypatch):
    monkeypatch.setenv("DEEPLUBE_OUT", str(tmp_path / "default-root"))


def _run(*argv):
    return main([str(a) for a in argv])


class TestSynth:
    def test_week_length(self, tmp_path):
        assert _run("synth-data", "--out", tmp_path, "--length", 1008) == 0
        assert len(load_series(tmp_path / "series.csv")) == 1008
        assert len((tmp_path / "series.csv").read_text().splitlines()) == 1009

    def test_deterministic(self, tmp_path):
        _run("synth-data", "--out", tmp_path / "a", "--seed", 4)
        _run("synth-data", "--out", tmp_path / "b", "--seed", 4)
        assert (tmp_path / "a/series.csv").read_bytes() == (tmp_path / "b/series.csv").read_bytes()

    def test_noiseless(self, tmp_path):
        _run("synth-data", "--out", tmp_path, "--noise", 0, "--length", 144)
        v = load_series(tmp_path / "series.csv").values
        np.testing.assert_allclose(v, np.sin(2 * np.pi * np.arange(144) / 144), atol=0)

    def test_default_root_from_env(self, tmp_path):
        _run("synth-data", "--length", 20)
        assert (tmp_path / "default-root" / "series.csv").is_file()


class TestTrain:
    def test_artifacts(self, tmp_path, series_csv):
        out = tmp_path / "run"
        assert _run("train", "--data", series_csv, "--out", out, *SMALL) == 0
        names = {p.name for p in out.iterdir()}
        assert names == {"params.json", "predictions.csv", "metrics.json", "loss_history.csv", "config.json"}
        history = (out / "loss_history.csv").read_text().splitlines()
        assert history[0] == "epoch,mean_f1,mean_f2,mean_total" and len(history) == 3
        report = json.loads((out / "metrics.json").read_text())
        assert report["config"]["cwc"] == {"mu": 0.9, "eta": 15.0, "alpha": 0.1, "beta": 6.0}
        _, y, L, U = read_predictions(out / "predictions.csv")
        assert np.all(U >= L)
        assert report["picp"] == picp(EvaluationSet(y, L, U))

    def test_config_echo_replays(self, tmp_path, series_csv):
        a, b = tmp_path / "a", tmp_path / "b"
        _run("train", "--data", series_csv, "--out", a, *SMALL)
        assert _run("train", "--config", a / "config.json", "--out", b) == 0
        for name in ("params.json", "predictions.csv", "metrics.json", "loss_history.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_missing_data_no_artifacts(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert _run("train", "--data", tmp_path / "missing.csv", "--out", out, *SMALL) != 0
        assert not out.exists()
        assert not list(tmp_path.glob(".partial-*"))
        assert "not found" in capsys.readouterr().err

    def test_invalid_config_lists_paths(self, tmp_path, series_csv, capsys):
        code = _run("train", "--data", series_csv, "--set", "loss.k1=-1", "--set", "cwc.mu=2", *SMALL)
        assert code == 2
        err = capsys.readouterr().err
        assert "loss.k1" in err and "cwc.mu" in err

    def test_refuses_foreign_directory(self, tmp_path, series_csv):
        out = tmp_path / "run"
        out.mkdir()
        (out / "notes.txt").write_text("keep me")
        assert _run("train", "--data", series_csv, "--out", out, *SMALL) != 0
        assert (out / "notes.txt").read_text() == "keep me"

    def test_record_time_flag(self, tmp_path, series_csv):
        out = tmp_path / "run"
        _run("train", "--data", series_csv, "--out", out, "--set", "metrics.record_time=true", *SMALL)
        assert json.loads((out / "metrics.json").read_text())["train_time_seconds"] > 0


class TestPredict:
    def test_rows_ordered_and_counted(self, tmp_path, series_csv):
        run = tmp_path / "run"
        _run("train", "--data", series_csv, "--out", run, *SMALL)
        assert _run("predict", "--config", run / "config.json", "--params", run / "params.json",
                    "--subset", "all", "--out", tmp_path / "pred") == 0
        idx, y, L, U = read_predictions(tmp_path / "pred" / "predictions_all.csv")
        assert len(idx) == 300 - 9 and np.all(U >= L)
        np.testing.assert_array_equal(idx, np.arange(9, 300))

    def test_zero_model_degenerate(self, tmp_path, series_csv):
        dims = NetworkDims(hidden=4, fc_hidden=(3,))
        ParameterSet.zeros(dims).save(tmp_path / "zero.json")
        _run("predict", "--data", series_csv, "--params", tmp_path / "zero.json", "--hidden", 4, "--fc", 3,
             "--out", tmp_path)
        _, y, L, U = read_predictions(tmp_path / "predictions_test.csv")
        train_min = load_series(series_csv).values[:214].min()  # round(300 * 5/7) = 214 training points
        np.testing.assert_array_equal(L, U)
        np.testing.assert_allclose(L, train_min, rtol=0, atol=1e-15)

    def test_dims_mismatch(self, tmp_path, series_csv, capsys):
        ParameterSet.zeros(NetworkDims(hidden=4, fc_hidden=(3,))).save(tmp_path / "p.json")
        code = _run("predict", "--data", series_csv, "--params", tmp_path / "p.json", "--hidden", 5,
                    "--out", tmp_path)
        assert code != 0 and "dims" in capsys.readouterr().err


class TestEvaluate:
    @staticmethod
    def _interval_file(path, n_hit, n, width):
        # n points with y = 0.5; first n_hit covered, rest missed by 0.1
        rows = []
        for i in range(n):
            lo = 0.5 - width / 2 if i < n_hit else 0.6
            rows.append(f"{i},0.5,{lo!r},{lo + width!r}\n")
        path.write_text("index,y,L,U\n" + "".join(rows))

    def test_worked_example_sets(self, tmp_path, capsys):
        # A = 1 given explicitly; 89/100 covered at width 0.05, 90/100 at width 0.30
        self._interval_file(tmp_path / "a.csv", 89, 100, 0.05)
        self._interval_file(tmp_path / "b.csv", 90, 100, 0.30)
        _run("evaluate", tmp_path / "a.csv", "--target-range", 1)
        ra = json.loads(capsys.readouterr().out)
        _run("evaluate", tmp_path / "b.csv", "--target-range", 1, "--out", tmp_path / "ev")
        rb = json.loads(capsys.readouterr().out)
        assert ra["picp"] == pytest.approx(0.89) and ra["pinaw"] == pytest.approx(0.05)
        assert ra["cwc_original"] == pytest.approx(1.212, abs=1e-3)
        assert rb["cwc_original"] == pytest.approx(0.300, abs=1e-3)
        assert ra["cwc_proposed"] == pytest.approx(cwc_proposed(0.89, 0.05), rel=1e-9)
        assert json.loads((tmp_path / "ev" / "metrics.json").read_text()) == rb

    def test_idempotent(self, tmp_path, capsys):
        self._interval_file(tmp_path / "a.csv", 7, 10, 0.2)
        _run("evaluate", tmp_path / "a.csv", "--target-range", 2)
        first = capsys.readouterr().out
        _run("evaluate", tmp_path / "a.csv", "--target-range", 2)
        assert capsys.readouterr().out == first

    def test_empty_file(self, tmp_path, capsys):
        (tmp_path / "e.csv").write_text("")
        assert _run("evaluate", tmp_path / "e.csv") != 0

    def test_malformed_row_number(self, tmp_path, capsys):
        (tmp_path / "m.csv").write_text("index,y,L,U\n0,1,0,2\n1,1,0\n")
        assert _run("evaluate", tmp_path / "m.csv") != 0
        assert "row 3" in capsys.readouterr().err


class TestSurface:
    def test_small_grid(self, tmp_path):
        assert _run("cwc-surface", "--variant", "original", "--picp", "0.8:0.9:2", "--pinaw", "0:0.1:2",
                    "--out", tmp_path) == 0
        lines = (tmp_path / "cwc_surface_original.csv").read_text().splitlines()
        assert lines[0] == "picp,pinaw,cwc" and len(lines) == 5
        for line in lines[1:]:
            p, w, c = map(float, line.split(","))
            assert c == cwc_original(p, w)

    def test_default_grid(self, tmp_path):
        _run("cwc-surface", "--out", tmp_path)
        rows = np.loadtxt(tmp_path / "cwc_surface_proposed.csv", delimiter=",", skiprows=1)
        assert rows.shape == (101 * 101, 3)
        assert rows[:, 0].min() == 0.5 and rows[:, 0].max() == 1.0
        assert rows[:, 1].min() == 0.0 and rows[:, 1].max() == 0.5


class TestCheckGradients:
    def test_passes(self, capsys):
        assert _run("check-gradients", "--seed", 3) == 0
        assert json.loads(capsys.readouterr().out)["passed"] is True

    def test_zero_tolerance_fails(self, capsys):
        assert _run("check-gradients", "--tolerance", 0) == 1
