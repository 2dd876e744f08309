import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner
from scipy import stats

from arealagree.cli import RunConfig, load_paired_data, main, read_table, run_fit
from arealagree.errors import DataFormatError
from arealagree.lattice import grid_lattice
from arealagree.mcmc import hpd_interval


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def fixture_files(tmp_path):
    """A 2x2 rook adjacency file and a matching paired-rate file."""
    adj = tmp_path / "adj.csv"
    adj.write_text("a,b\na,c\nb,d\nc,d\n")
    data = tmp_path / "rates.csv"
    data.write_text(
        "unit_id,rate1,rate2\n"
        "a,0.12,0.10\n"
        "b,0.18,0.16\n"
        "c,0.08,0.11\n"
        "d,0.15,0.13\n"
    )
    return adj, data


FIT_ARGS = ["--iterations", "200", "--burn-in", "100", "--seed", "5", "--mu-prior-mean", "0.12"]


def run_ok(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


class TestLoadPairedData:
    def test_aligns_to_lattice_order(self, fixture_files, tmp_path):
        adj, _ = fixture_files
        shuffled = tmp_path / "shuffled.csv"
        shuffled.write_text("unit_id,rate1,rate2\nd,0.4,0.5\na,0.1,0.2\nc,0.3,0.35\nb,0.2,0.25\n")
        from arealagree.lattice import load_adjacency

        lat = load_adjacency(adj)
        x = load_paired_data(shuffled, lat)
        np.testing.assert_allclose(x[:, 0], [0.1, 0.2, 0.3, 0.4])

    def test_swap_exchanges_columns(self, fixture_files):
        adj, data = fixture_files
        from arealagree.lattice import load_adjacency

        lat = load_adjacency(adj)
        a = load_paired_data(data, lat)
        b = load_paired_data(data, lat, swap=True)
        np.testing.assert_array_equal(a[:, 0], b[:, 1])
        np.testing.assert_array_equal(a[:, 1], b[:, 0])

    def test_unknown_unit(self, fixture_files, tmp_path):
        adj, _ = fixture_files
        bad = tmp_path / "bad.csv"
        bad.write_text("unit_id,rate1,rate2\na,0.1,0.2\nzz,0.3,0.4\nb,0.1,0.1\nc,0.1,0.1\nd,0.1,0.1\n")
        from arealagree.lattice import load_adjacency

        with pytest.raises(DataFormatError, match="not in the adjacency"):
            load_paired_data(bad, load_adjacency(adj))

    def test_missing_unit(self, fixture_files, tmp_path):
        adj, _ = fixture_files
        bad = tmp_path / "bad.csv"
        bad.write_text("unit_id,rate1,rate2\na,0.1,0.2\n")
        from arealagree.lattice import load_adjacency

        with pytest.raises(DataFormatError, match="missing"):
            load_paired_data(bad, load_adjacency(adj))

    def test_out_of_range_rate_warns(self, fixture_files, tmp_path):
        adj, _ = fixture_files
        odd = tmp_path / "odd.csv"
        odd.write_text("unit_id,rate1,rate2\na,1.5,0.2\nb,0.2,0.2\nc,0.2,0.2\nd,0.2,0.2\n")
        from arealagree.lattice import load_adjacency

        with pytest.warns(UserWarning, match="outside"):
            load_paired_data(odd, load_adjacency(adj))


class TestFit:
    def test_artifacts_and_counts(self, runner, fixture_files, tmp_path):
        adj, data = fixture_files
        out = tmp_path / "out"
        run_ok(runner, ["fit", "--adjacency", str(adj), "--data", str(data),
                        "--out", str(out), *FIT_ARGS])
        for name in ("summary.json", "draws.csv", "rho_sc_draws.csv", "trace.csv"):
            assert (out / name).exists(), name
        _, draws = read_table(out / "draws.csv")
        assert draws.shape[0] == 100
        summary = json.loads((out / "summary.json").read_text())
        assert summary["n_units"] == 4
        assert summary["provenance"]["seed"] == 5

    def test_summary_hpd_matches_emitted_draws(self, runner, fixture_files, tmp_path):
        adj, data = fixture_files
        out = tmp_path / "out"
        run_ok(runner, ["fit", "--adjacency", str(adj), "--data", str(data),
                        "--out", str(out), *FIT_ARGS])
        _, rho = read_table(out / "rho_sc_draws.csv")
        lo, hi = hpd_interval(rho[:, 0], 0.95)
        summary = json.loads((out / "summary.json").read_text())
        assert summary["coefficient"]["hpd_lo"] == lo
        assert summary["coefficient"]["hpd_hi"] == hi

    def test_rerun_byte_identical(self, runner, fixture_files, tmp_path):
        adj, data = fixture_files
        args = ["fit", "--adjacency", str(adj), "--data", str(data), *FIT_ARGS]
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        run_ok(runner, args + ["--out", str(out1)])
        run_ok(runner, args + ["--out", str(out2)])
        for name in ("draws.csv", "rho_sc_draws.csv", "trace.csv", "summary.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_swap_flag_swaps_fit(self, runner, fixture_files, tmp_path):
        adj, data = fixture_files
        swapped_file = tmp_path / "swapped.csv"
        lines = data.read_text().strip().splitlines()
        body = [f"{u},{r2},{r1}" for u, r1, r2 in (ln.split(",") for ln in lines[1:])]
        swapped_file.write_text("\n".join([lines[0], *body]) + "\n")
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        run_ok(runner, ["fit", "--adjacency", str(adj), "--data", str(data),
                        "--out", str(out1), *FIT_ARGS])
        run_ok(runner, ["fit", "--adjacency", str(adj), "--data", str(swapped_file),
                        "--swap", "--out", str(out2), *FIT_ARGS])
        assert (out1 / "draws.csv").read_text().splitlines()[2:] == (
            out2 / "draws.csv").read_text().splitlines()[2:]

    def test_id_mismatch_exit_2(self, runner, fixture_files, tmp_path):
        adj, _ = fixture_files
        bad = tmp_path / "bad.csv"
        bad.write_text("unit_id,rate1,rate2\nzz,0.1,0.2\n"
                       "a,0.1,0.1\nb,0.1,0.1\nc,0.1,0.1\nd,0.1,0.1\n")
        result = runner.invoke(main, ["fit", "--adjacency", str(adj), "--data", str(bad),
                                      "--out", str(tmp_path / "x"), *FIT_ARGS])
        assert result.exit_code == 2

    def test_nonfinite_data_exit_2(self, runner, fixture_files, tmp_path):
        adj, _ = fixture_files
        bad = tmp_path / "bad.csv"
        bad.write_text("unit_id,rate1,rate2\na,nan,0.2\nb,0.2,0.2\nc,0.2,0.2\nd,0.2,0.2\n")
        result = runner.invoke(main, ["fit", "--adjacency", str(adj), "--data", str(bad),
                                      "--out", str(tmp_path / "x"), *FIT_ARGS])
        assert result.exit_code == 2

    def test_constant_data_exit_3(self, runner, fixture_files, tmp_path):
        adj, _ = fixture_files
        flat = tmp_path / "flat.csv"
        flat.write_text("unit_id,rate1,rate2\na,0.2,0.2\nb,0.2,0.2\nc,0.2,0.2\nd,0.2,0.2\n")
        result = runner.invoke(main, ["fit", "--adjacency", str(adj), "--data", str(flat),
                                      "--out", str(tmp_path / "x"), *FIT_ARGS])
        assert result.exit_code == 3

    def test_env_var_output_dir(self, runner, fixture_files, tmp_path, monkeypatch):
        adj, data = fixture_files
        target = tmp_path / "from_env"
        monkeypatch.setenv("AREALAGREE_OUT", str(target))
        run_ok(runner, ["fit", "--adjacency", str(adj), "--data", str(data), *FIT_ARGS])
        assert (target / "summary.json").exists()


class TestCompare:
    def test_orders_table_and_selection(self, runner, tmp_path):
        # 3x3 grid so orders 1..3 are all meaningful
        from arealagree.cli import main as cli_main

        adj = tmp_path / "adj.csv"
        lat = grid_lattice(3, 3)
        adj.write_text("\n".join(f"{i},{j}" for i, j in lat.edges) + "\n")
        rng = np.random.default_rng(0)
        data = tmp_path / "rates.csv"
        rows = [f"{i},{0.1 + 0.05 * rng.standard_normal():.6f},{0.1 + 0.05 * rng.standard_normal():.6f}"
                for i in range(lat.n)]
        data.write_text("unit_id,rate1,rate2\n" + "\n".join(rows) + "\n")
        out = tmp_path / "cmp"
        result = runner.invoke(
            cli_main,
            ["compare", "--adjacency", str(adj), "--data", str(data), "--out", str(out),
             "--orders", "1,2", *FIT_ARGS],
            catch_exceptions=False,
        )
        assert result.exit_code == 0, result.output
        cols, table = read_table(out / "dic_table.csv")
        assert cols == ["order", "dic", "dbar", "p_d", "selected"]
        assert table.shape[0] == 2
        assert table[:, cols.index("selected")].sum() == 1
        best_row = int(np.argmax(table[:, cols.index("selected")]))
        assert table[best_row, cols.index("dic")] == table[:, cols.index("dic")].min()
        assert "selected order" in result.output
        assert (out / "order1" / "summary.json").exists()
        assert (out / "order2" / "summary.json").exists()

    def test_single_order_rejected(self, runner, fixture_files, tmp_path):
        adj, data = fixture_files
        result = runner.invoke(main, ["compare", "--adjacency", str(adj), "--data", str(data),
                                      "--orders", "1", "--out", str(tmp_path), *FIT_ARGS])
        assert result.exit_code == 2

    def test_tie_break_prefers_first_listed(self):
        # selection rule in isolation: equal DICs resolve to the first entry
        assert int(np.argmin([2.0, 2.0, 2.0])) == 0


class TestSimulate:
    def test_zero_linking_truth(self, runner, tmp_path):
        out = tmp_path / "sim"
        run_ok(runner, ["simulate", "--grid", "3x3", "--eta", "0,0", "--seed", "3",
                        "--out", str(out)])
        truth = json.loads((out / "truth.json").read_text())
        assert truth["rho_sc"] == 0.0
        cols, data = read_table(out / "data.csv")
        assert data.shape == (9, 3) and cols == ["unit_id", "rate1", "rate2"]

    def test_reproducible_files(self, runner, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        args = ["simulate", "--grid", "2x2", "--seed", "9"]
        run_ok(runner, args + ["--out", str(a)])
        run_ok(runner, args + ["--out", str(b)])
        assert (a / "data.csv").read_bytes() == (b / "data.csv").read_bytes()
        assert (a / "truth.json").read_bytes() == (b / "truth.json").read_bytes()

    def test_round_trip_fit_covers_truth(self, runner, tmp_path):
        out = tmp_path / "sim"
        run_ok(runner, ["simulate", "--grid", "4x4", "--rho1", "0.5", "--rho2", "0.4",
                        "--eta", "0.4,0.1", "--mu1", "0.1", "--mu2", "0.1",
                        "--seed", "21", "--out", str(out)])
        adj = tmp_path / "adj.csv"
        lat = grid_lattice(4, 4)
        adj.write_text("\n".join(f"{i},{j}" for i, j in lat.edges) + "\n")
        fit_out = tmp_path / "fit"
        run_ok(runner, ["fit", "--adjacency", str(adj), "--data", str(out / "data.csv"),
                        "--no-noise", "--iterations", "2000", "--burn-in", "1000",
                        "--seed", "4", "--mu-prior-mean", "0.1", "--out", str(fit_out)])
        truth = json.loads((out / "truth.json").read_text())
        summary = json.loads((fit_out / "summary.json").read_text())
        lo = summary["coefficient"]["hpd_lo"]
        hi = summary["coefficient"]["hpd_hi"]
        assert lo < truth["rho_sc"] < hi

    def test_requires_exactly_one_structure(self, runner, tmp_path):
        result = runner.invoke(main, ["simulate", "--seed", "1", "--out", str(tmp_path)])
        assert result.exit_code == 2


class TestPlotData:
    def _write_draws(self, path, values):
        lines = ["# test provenance", "rho_sc"] + [repr(float(v)) for v in values]
        Path(path).write_text("\n".join(lines) + "\n")

    def test_constant_draws_single_bin(self, runner, tmp_path):
        f = tmp_path / "draws.csv"
        self._write_draws(f, np.full(50, 0.25))
        out = tmp_path / "plot"
        run_ok(runner, ["plot-data", "--draws", str(f), "--out", str(out)])
        _, table = read_table(out / "density.csv")
        assert table.shape[0] == 1
        assert table[0, 0] == 0.25 and table[0, 1] == 1.0

    def test_density_integrates_to_one(self, runner, tmp_path):
        rng = np.random.default_rng(2)
        f = tmp_path / "draws.csv"
        self._write_draws(f, rng.normal(size=4000))
        out = tmp_path / "plot"
        run_ok(runner, ["plot-data", "--draws", str(f), "--out", str(out)])
        _, table = read_table(out / "density.csv")
        centers = table[:, 0]
        width = centers[1] - centers[0]
        assert abs(float(table[:, 1].sum() * width) - 1.0) <= 1e-9

    def test_uniform_draws_flat_histogram(self, runner, tmp_path):
        rng = np.random.default_rng(5)
        samples = rng.uniform(size=20_000)
        f = tmp_path / "draws.csv"
        self._write_draws(f, samples)
        out = tmp_path / "plot"
        run_ok(runner, ["plot-data", "--draws", str(f), "--bins", "20", "--out", str(out)])
        counts, _ = np.histogram(samples, bins=20, range=(samples.min(), samples.max()))
        chi2 = float(((counts - counts.mean()) ** 2 / counts.mean()).sum())
        assert chi2 < stats.chi2(df=19).ppf(0.99)

    def test_summary_file(self, runner, tmp_path):
        rng = np.random.default_rng(3)
        f = tmp_path / "draws.csv"
        samples = rng.normal(size=500)
        self._write_draws(f, samples)
        out = tmp_path / "plot"
        run_ok(runner, ["plot-data", "--draws", str(f), "--prob", "0.9", "--out", str(out)])
        summary = json.loads((out / "density_summary.json").read_text())
        assert summary["n"] == 500
        assert (summary["hpd_lo"], summary["hpd_hi"]) == hpd_interval(samples, 0.9)

    def test_missing_column(self, runner, tmp_path):
        f = tmp_path / "draws.csv"
        self._write_draws(f, np.zeros(30))
        result = runner.invoke(main, ["plot-data", "--draws", str(f), "--column", "zz",
                                      "--out", str(tmp_path)])
        assert result.exit_code == 2


class TestRunConfig:
    def test_validates_paths(self, tmp_path):
        with pytest.raises(DataFormatError):
            RunConfig(adjacency_path=str(tmp_path / "none.csv"), data_path=str(tmp_path / "x"))

    def test_hash_ignores_output_dir(self, fixture_files):
        adj, data = fixture_files
        a = RunConfig(adjacency_path=str(adj), data_path=str(data), output_dir="one")
        b = RunConfig(adjacency_path=str(adj), data_path=str(data), output_dir="two")
        assert a.config_hash() == b.config_hash()

    def test_hash_tracks_model_settings(self, fixture_files):
        adj, data = fixture_files
        a = RunConfig(adjacency_path=str(adj), data_path=str(data), seed=1)
        b = RunConfig(adjacency_path=str(adj), data_path=str(data), seed=2)
        assert a.config_hash() != b.config_hash()
