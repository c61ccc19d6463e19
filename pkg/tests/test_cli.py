import json
import subprocess
import sys

import numpy as np
import pytest

from minmaxpred import kernel_set
from minmaxpred.cli import (
    EXIT_INVARIANT,
    EXIT_OK,
    EXIT_PARSE,
    EXIT_SOLVER,
    EXIT_USAGE,
    OUTPUT_DIR_ENV,
    RunConfig,
    main,
    sample_times,
)
from minmaxpred.io import fmt, parse_matrix_dump, parse_series

from conftest import random_grid


def write_series(path, t, f, header=True):
    lines = ["time,value"] if header else []
    lines += [f"{fmt(a)},{fmt(b)}" for a, b in zip(t, f)]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def csv_rows(text):
    lines = text.strip().splitlines()
    head = lines[0].split(",")
    return [dict(zip(head, line.split(","))) for line in lines[1:]]


@pytest.fixture
def affine_file(tmp_path):
    t = 2000.0 + np.arange(8)
    return write_series(tmp_path / "affine.csv", t, 10.0 + 0.5 * (t - 2000.0))


class TestKernelsCommand:
    def test_uniform_Q(self, tmp_path, capsys):
        path = write_series(tmp_path / "s.csv", [0, 1, 2, 3], [1, 4, 2, 5])
        code, out, _ = run_cli(capsys, "kernels", path, "-f", "csv")
        assert code == EXIT_OK
        blocks = parse_matrix_dump(out)
        np.testing.assert_allclose(blocks["Q"], [[2 / 3, 1 / 6], [1 / 6, 2 / 3]], rtol=1e-15)
        assert "# Q 2x2 PositiveDefinite" in out

    def test_K0_symmetric_in_file(self, tmp_path, capsys):
        t = random_grid(np.random.default_rng(3), 9)
        path = write_series(tmp_path / "s.csv", t, np.sin(t))
        _, out, _ = run_cli(capsys, "kernels", path, "-f", "csv")
        K0 = parse_matrix_dump(out)["K0"]
        assert np.all(np.isfinite(K0.sum(axis=1)))
        np.testing.assert_array_equal(K0, K0.T)

    def test_csv_round_trip_is_lossless(self, tmp_path, capsys):
        t = random_grid(np.random.default_rng(4), 7)
        path = write_series(tmp_path / "s.csv", t, np.cos(t))
        _, out, _ = run_cli(capsys, "kernels", path, "-f", "csv")
        blocks = parse_matrix_dump(out)
        ks = kernel_set(t)
        for name, M in ks.matrices().items():
            np.testing.assert_array_equal(blocks[name], M)

    def test_json_round_trip_is_lossless(self, tmp_path, capsys):
        t = random_grid(np.random.default_rng(5), 6)
        path = write_series(tmp_path / "s.csv", t, t**2)
        _, out, _ = run_cli(capsys, "kernels", path, "-f", "json")
        data = json.loads(out)
        ks = kernel_set(t)
        np.testing.assert_array_equal(np.array(data["K1"]["data"]), ks.K1)
        assert data["K1"]["classification"] == "ConditionallyPositive"
        assert data["U"]["shape"] == [5, 7]

    def test_malformed_row(self, tmp_path, capsys):
        p = tmp_path / "bad.csv"
        p.write_text("time,value\n1,2\n2,3\n3,abc\n4,5\n")
        code, _, err = run_cli(capsys, "kernels", str(p))
        assert code == EXIT_PARSE
        assert "line 4" in err

    def test_too_few_points(self, tmp_path, capsys):
        path = write_series(tmp_path / "s.csv", [0, 1, 2], [1, 2, 3])
        code, _, err = run_cli(capsys, "kernels", path)
        assert code == EXIT_INVARIANT
        assert "4 time points" in err


class TestPredictCommand:
    def test_affine_series_with_K1(self, affine_file, capsys):
        code, out, _ = run_cli(capsys, "predict", affine_file, "-k", "K1", "-f", "csv")
        assert code == EXIT_OK
        (row,) = csv_rows(out)
        assert float(row["time"]) == 2008.0
        assert float(row["predicted"]) == pytest.approx(14.0, abs=1e-8 * 15)

    def test_constant_series(self, tmp_path, capsys):
        path = write_series(tmp_path / "c.csv", np.arange(6.0), np.full(6, 3.25))
        _, out, _ = run_cli(capsys, "predict", path, "-k", "K1", "-k", "K2", "-k", "P", "-f", "csv")
        for row in csv_rows(out):
            assert float(row["predicted"]) == pytest.approx(3.25, abs=1e-10)

    def test_truth_and_error_formula(self, tmp_path, capsys):
        rng = np.random.default_rng(8)
        t = np.arange(7.0)
        f = rng.normal(size=7)
        path = write_series(tmp_path / "s.csv", t, f)
        _, out, _ = run_cli(capsys, "predict", path, "-k", "K0", "--truth", "0.4", "-f", "json")
        (row,) = json.loads(out)
        assert row["realized_error"] == pytest.approx(0.4 - row["predicted"], abs=1e-15)
        assert row["error_formula"] == pytest.approx(row["realized_error"], rel=1e-9)

    def test_holdout(self, tmp_path, capsys):
        t = np.arange(9.0)
        path = write_series(tmp_path / "s.csv", t, 1.0 + 2.0 * t)
        _, out, _ = run_cli(capsys, "predict", path, "-k", "K2", "--holdout", "-f", "json")
        (row,) = json.loads(out)
        assert row["time"] == 8.0 and row["truth"] == 17.0
        assert abs(row["realized_error"]) < 1e-8

    def test_chain(self, affine_file, capsys):
        _, out, _ = run_cli(capsys, "predict", affine_file, "-k", "K1", "--chain", "predicted", "-f", "json")
        first, second = json.loads(out)
        assert second["step"] == 2 and second["note"] == "chained:predicted"
        assert second["time"] == 2009.0
        assert second["predicted"] == pytest.approx(14.5, abs=1e-7)

    def test_chain_true_needs_truth(self, affine_file, capsys):
        code, _, _ = run_cli(capsys, "predict", affine_file, "--chain", "true")
        assert code == EXIT_USAGE

    def test_past_next_time(self, affine_file, capsys):
        code, _, _ = run_cli(capsys, "predict", affine_file, "--next-time", "2003")
        assert code == EXIT_INVARIANT

    def test_rescale_reports_original_units(self, affine_file, capsys):
        _, a, _ = run_cli(capsys, "predict", affine_file, "-k", "K1", "-f", "json")
        _, b, _ = run_cli(capsys, "predict", affine_file, "-k", "K1", "--rescale", "-f", "json")
        ra, rb = json.loads(a)[0], json.loads(b)[0]
        assert ra["time"] == rb["time"] == 2008.0
        assert rb["predicted"] == pytest.approx(ra["predicted"], abs=1e-8)

    def test_solver_failure_names_kernel(self, tmp_path, capsys):
        path = write_series(tmp_path / "s.csv", np.arange(4.0), [1, 2, 3, 4])
        zero = tmp_path / "zero.csv"
        zero.write_text("\n".join(",".join(["0"] * 5) for _ in range(5)) + "\n")
        code, _, err = run_cli(capsys, "predict", path, "-k", f"file:{zero}")
        assert code == EXIT_SOLVER
        assert f"file:{zero}" in err


class TestEvaluateCommand:
    def test_schema(self, tmp_path, capsys):
        rng = np.random.default_rng(9)
        path = write_series(tmp_path / "s.csv", np.arange(12.0), rng.normal(size=12))
        _, out, _ = run_cli(capsys, "evaluate", path, "-f", "csv")
        rows = csv_rows(out)
        assert [r["record"] for r in rows] == ["kernel"] * 3 + ["pair"] * 6
        for r in rows[:3]:
            assert r["count"] == "10"
            assert float(r["mspe"]) >= 0 and float(r["maxpe"]) >= 0

    def test_constant_series_ties(self, tmp_path, capsys):
        path = write_series(tmp_path / "c.csv", np.arange(10.0), np.full(10, 2.0))
        _, out, _ = run_cli(capsys, "evaluate", path, "-k", "K1", "-k", "K2", "--tie-tol", "1e-9", "-f", "json")
        data = json.loads(out)
        for k in data["kernels"]:
            assert k["mspe"] < 1e-18
        for p in data["pairs"]:
            assert p["ties"] == p["count"] and p["win_fraction"] == 0.0

    def test_K1_model_data_favours_K1(self, tmp_path, capsys):
        # data drawn from the K1 model: affine trend plus R u with u ~ N(0, Q^{-1});
        # a single short draw is noisy, so MSPE is pooled over five draws
        t = np.arange(40.0)
        ks = kernel_set(t)
        L = np.linalg.cholesky(np.linalg.inv(ks.Q))
        total = {"K1": 0.0, "K2": 0.0}
        for seed in range(5):
            rng = np.random.default_rng(seed)
            f = 1.0 + 0.05 * t + ks.R @ (L @ rng.normal(size=L.shape[0]))
            path = write_series(tmp_path / f"s{seed}.csv", t, f)
            _, out, _ = run_cli(capsys, "evaluate", path, "-k", "K1", "-k", "K2", "-f", "json")
            for k in json.loads(out)["kernels"]:
                total[k["kernel"]] += k["mspe"]
        assert total["K1"] < total["K2"]

    def test_too_short(self, tmp_path, capsys):
        path = write_series(tmp_path / "s.csv", np.arange(3.0), [1.0, 2.0, 3.0])
        code, _, _ = run_cli(capsys, "evaluate", path)
        assert code == EXIT_INVARIANT

    def test_rebuild_flag(self, tmp_path, capsys):
        rng = np.random.default_rng(15)
        path = write_series(tmp_path / "s.csv", np.arange(12.0), rng.normal(size=12))
        _, a, _ = run_cli(capsys, "evaluate", path, "-k", "K0", "-k", "K1", "--rebuild-kernel", "-f", "json")
        _, b, _ = run_cli(capsys, "evaluate", path, "-k", "K0", "-k", "K1", "--mode", "rebuild", "-f", "json")
        _, c, _ = run_cli(capsys, "evaluate", path, "-k", "K0", "-k", "K1", "-f", "json")
        assert a == b and json.loads(a)["mode"] == "rebuild"
        assert json.loads(a)["kernels"][0]["mspe"] != json.loads(c)["kernels"][0]["mspe"]

    def test_r_min_validated(self, affine_file, capsys):
        code, _, _ = run_cli(capsys, "evaluate", affine_file, "--r-min", "1")
        assert code == EXIT_USAGE


class TestSplinefitCommand:
    def test_knot_values(self, tmp_path, capsys):
        rng = np.random.default_rng(11)
        t = random_grid(rng, 5)
        f = rng.normal(size=6)
        path = write_series(tmp_path / "s.csv", t, f)
        _, out, _ = run_cli(capsys, "splinefit", path, "-k", "K1", "--holdout", "-s", "4", "-f", "csv")
        rows = csv_rows(out)
        assert len(rows) == 5 * 4 + 1
        for i in range(5):
            row = rows[4 * i]
            assert float(row["time"]) == t[i]
            assert float(row["K1"]) == f[i]
            assert float(row["truth"]) == f[i]
        assert float(rows[-1]["truth"]) == f[5]

    def test_affine_samples_on_line(self, affine_file, capsys):
        _, out, _ = run_cli(capsys, "splinefit", affine_file, "-k", "K2", "-s", "3", "-f", "json")
        rows = json.loads(out)
        assert len(rows) == 8 * 3 + 1
        for row in rows:
            assert row["K2"] == pytest.approx(10.0 + 0.5 * (row["time"] - 2000.0), abs=1e-8)

    def test_sample_times(self):
        ts = sample_times([0.0, 1.0, 3.0], 4)
        assert ts.size == 2 * 4 + 1
        assert ts[0] == 0.0 and ts[4] == 1.0 and ts[-1] == 3.0
        assert np.all(np.diff(ts) > 0)


class TestWeightsCommand:
    def test_identity_kernel_gives_zero(self, tmp_path, capsys):
        path = write_series(tmp_path / "s.csv", np.arange(5.0), [3, 1, 4, 1, 5])
        eye = tmp_path / "eye.csv"
        np.savetxt(eye, np.eye(6), delimiter=",")
        _, out, _ = run_cli(capsys, "weights", path, "-k", f"file:{eye}", "-f", "json")
        rows = json.loads(out)
        assert [r["index"] for r in rows] == [1, 2, 3, 4, 5]
        assert all(r["weight"] == 0.0 for r in rows)

    @pytest.mark.parametrize("kernel", ["K1", "K2", "P"])
    def test_affine_constraints(self, tmp_path, capsys, kernel):
        rng = np.random.default_rng(12)
        t = random_grid(rng, 9)
        path = write_series(tmp_path / "s.csv", t, rng.normal(size=9))
        _, out, _ = run_cli(capsys, "weights", path, "-k", kernel, "--next-time", "25.0", "-f", "csv")
        rows = csv_rows(out)
        w = np.array([float(r["weight"]) for r in rows])
        times = np.array([float(r["time"]) for r in rows])
        assert w.sum() == pytest.approx(1.0, abs=1e-8)
        assert w @ times == pytest.approx(25.0, abs=1e-8 * 25)

    def test_reimport_reproduces_prediction(self, tmp_path, capsys):
        rng = np.random.default_rng(13)
        t = np.arange(10.0)
        f = rng.normal(size=10)
        path = write_series(tmp_path / "s.csv", t, f)
        for kernel in ("K0", "K1", "K2"):
            _, wout, _ = run_cli(capsys, "weights", path, "-k", kernel, "-f", "csv")
            _, pout, _ = run_cli(capsys, "predict", path, "-k", kernel, "-f", "csv")
            w = np.array([float(r["weight"]) for r in csv_rows(wout)])
            predicted = float(csv_rows(pout)[0]["predicted"])
            assert w @ f == pytest.approx(predicted, rel=1e-12, abs=1e-12)


class TestGeneral:
    @pytest.mark.parametrize("command", ["kernels", "predict", "evaluate", "splinefit", "weights"])
    def test_byte_identical_reruns(self, tmp_path, capsys, command):
        rng = np.random.default_rng(14)
        path = write_series(tmp_path / "s.csv", 1950.0 + np.arange(15), 12 + rng.normal(size=15))
        _, a, _ = run_cli(capsys, command, path, "-f", "csv")
        _, b, _ = run_cli(capsys, command, path, "-f", "csv")
        assert a == b and a

    def test_output_dir_env(self, tmp_path, capsys, monkeypatch, affine_file):
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
        code, out, _ = run_cli(capsys, "predict", affine_file, "-f", "json")
        assert code == EXIT_OK and out == ""
        assert len(json.loads((tmp_path / "predict.json").read_text())) == 3

    def test_out_overrides_env(self, tmp_path, capsys, monkeypatch, affine_file):
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
        target = tmp_path / "mine.txt"
        run_cli(capsys, "evaluate", affine_file, "-o", str(target))
        assert target.read_text().startswith("record")
        assert not (tmp_path / "evaluate.txt").exists()

    def test_missing_file(self, tmp_path, capsys):
        code, _, _ = run_cli(capsys, "predict", str(tmp_path / "nope.csv"))
        assert code == EXIT_PARSE

    def test_duplicate_time(self, tmp_path, capsys):
        p = tmp_path / "d.csv"
        p.write_text("1,2\n2,3\n2,4\n3,5\n")
        code, _, err = run_cli(capsys, "predict", str(p))
        assert code == EXIT_PARSE and "line 3" in err and "duplicate" in err

    def test_exit_codes_distinct(self):
        assert len({EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_INVARIANT, EXIT_SOLVER}) == 5

    def test_bad_flag_is_usage(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["predict"])
        assert exc.value.code == EXIT_USAGE

    def test_run_config(self):
        with pytest.raises(ValueError):
            RunConfig(tie_tol=-1.0)

    def test_parse_series_header_and_comments(self):
        s = parse_series("# temps\nyear,temp\n1901,11.5\n1902,12.0\n")
        assert s.times.tolist() == [1901.0, 1902.0]

    def test_module_entry_point(self, affine_file):
        proc = subprocess.run(
            [sys.executable, "-m", "minmaxpred", "predict", affine_file, "-k", "K1", "-f", "csv"],
            capture_output=True, text=True, check=True,
        )
        assert proc.stdout.startswith("kernel,trend")
