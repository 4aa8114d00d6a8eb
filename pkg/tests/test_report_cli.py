import json

import numpy as np
import pytest
from click.testing import CliRunner

from genbounds.cli import main
from genbounds.frame import FrameError, OutcomeRange, StudyFrame, write_frame
from genbounds.report import GridConfigError, load_grid, run_analysis

from conftest import make_frame


def separated_frame():
    """Sample membership perfectly determined by the covariate sign."""
    rng = np.random.default_rng(0)
    x = rng.normal(size=(120, 1))
    z = (x[:, 0] > 0).astype(np.int64)
    w = np.full(120, np.nan)
    sampled = np.flatnonzero(z == 1)
    w[sampled] = (np.arange(sampled.size) % 2).astype(float)
    y = np.where(z == 1, rng.normal(size=120), np.nan)
    return StudyFrame(
        ids=tuple(f"u{i}" for i in range(120)),
        z=z,
        w=w,
        y=y,
        x=x,
        covariate_names=("x1",),
    )


class TestRunAnalysis:
    def test_report_is_consistent(self, small_frame):
        report = run_analysis(small_frame, ["x1", "x2"], OutcomeRange(-6.0, 6.0))
        assert report.study["N"] == small_frame.N
        assert report.stratified.width <= report.unstratified.width + 1e-12
        assert report.gain == pytest.approx(
            1 - report.stratified.width / report.unstratified.width
        )
        assert 1 <= report.k <= 5
        assert len(report.strata) == report.k
        # the JSON view round-trips through the stdlib parser
        obj = json.loads(report.to_json())
        assert obj["precision_gain"] == report.gain

    def test_invalid_frame_rejected(self, small_frame):
        broken = StudyFrame(
            ids=small_frame.ids,
            z=small_frame.z,
            w=np.where(small_frame.z == 1, 1.0, np.nan),  # no controls
            y=small_frame.y,
            x=small_frame.x,
            covariate_names=small_frame.covariate_names,
        )
        with pytest.raises(FrameError, match="no control units"):
            run_analysis(broken, ["x1"], OutcomeRange(-6.0, 6.0))

    def test_unknown_covariate_rejected(self, small_frame):
        with pytest.raises(FrameError, match="unknown covariate"):
            run_analysis(small_frame, ["nope"], OutcomeRange(-6.0, 6.0))

    def test_ridge_noted_in_warnings(self):
        report = run_analysis(
            separated_frame(), ["x1"], OutcomeRange(-6.0, 6.0), ridge=True
        )
        assert any("ridge" in w for w in report.warnings)


class TestAnalyzeCommand:
    def run(self, *args):
        return CliRunner().invoke(main, list(args))

    def test_json_matches_library(self, tmp_path, small_frame):
        data = tmp_path / "frame.csv"
        write_frame(small_frame, data)
        out = tmp_path / "report.json"
        result = self.run(
            "analyze", "--data", str(data), "--covariates", "x1,x2",
            "--range", "-6:6", "--out", str(out),
        )
        assert result.exit_code == 0, result.output
        expected = run_analysis(small_frame, ["x1", "x2"], OutcomeRange(-6.0, 6.0))
        assert out.read_text(encoding="utf-8") == expected.to_json()
        assert "Precision gain" in result.output

    def test_missing_file_exit_one(self, tmp_path):
        result = self.run(
            "analyze", "--data", str(tmp_path / "nope.csv"),
            "--covariates", "x1", "--range", "-1:1",
        )
        assert result.exit_code == 1

    def test_bad_range_exit_one(self, tmp_path, small_frame):
        data = tmp_path / "frame.csv"
        write_frame(small_frame, data)
        result = self.run(
            "analyze", "--data", str(data), "--covariates", "x1", "--range", "5:1"
        )
        assert result.exit_code == 1

    def test_separation_exit_two(self, tmp_path):
        data = tmp_path / "sep.csv"
        write_frame(separated_frame(), data)
        result = self.run(
            "analyze", "--data", str(data), "--covariates", "x1", "--range", "-6:6"
        )
        assert result.exit_code == 2
        assert "ridge" in result.output

    def test_separation_recovered_by_ridge_flag(self, tmp_path):
        data = tmp_path / "sep.csv"
        write_frame(separated_frame(), data)
        result = self.run(
            "analyze", "--data", str(data), "--covariates", "x1",
            "--range", "-6:6", "--ridge",
        )
        assert result.exit_code == 0, result.output

    def test_bad_strata_request_exit_three(self, tmp_path, small_frame):
        data = tmp_path / "frame.csv"
        write_frame(small_frame, data)
        result = self.run(
            "analyze", "--data", str(data), "--covariates", "x1",
            "--range", "-6:6", "--kmax", "0",
        )
        assert result.exit_code == 3


class TestOverlapCommand:
    def test_prints_stat_and_json(self, tmp_path, small_frame):
        data = tmp_path / "frame.csv"
        write_frame(small_frame, data)
        result = CliRunner().invoke(
            main, ["overlap", "--data", str(data), "--covariates", "x1,x2"]
        )
        assert result.exit_code == 0, result.output
        assert result.output.startswith("overlap ")
        obj = json.loads(result.output.splitlines()[-1])
        assert obj["n_pop_total"] == small_frame.N
        assert 0.0 <= obj["omega"] <= 1.0

    def test_unknown_covariate_exit_one(self, tmp_path, small_frame):
        data = tmp_path / "frame.csv"
        write_frame(small_frame, data)
        result = CliRunner().invoke(
            main, ["overlap", "--data", str(data), "--covariates", "zzz"]
        )
        assert result.exit_code == 1


class TestLoadGrid:
    def write(self, path, obj):
        path.write_text(json.dumps(obj), encoding="utf-8")
        return path

    def test_defaults_merge_and_seed(self, tmp_path):
        p = self.write(
            tmp_path / "g.json",
            {
                "seed": 7,
                "defaults": {"N": 500, "reps": 3},
                "grid": [{"scenario": 1}, {"scenario": 2, "reps": 4}],
            },
        )
        grid = load_grid(p)
        assert [c.scenario for c in grid] == [1, 2]
        assert [c.reps for c in grid] == [3, 4]
        assert all(c.seed == 7 and c.N == 500 for c in grid)

    def test_plural_keys_cross_product(self, tmp_path):
        p = self.write(
            tmp_path / "g.json",
            {
                "grid": [
                    {
                        "scenario": 1,
                        "target_r2s": [0.5, 0.9],
                        "n_fracs": [0.05, 0.01],
                    }
                ]
            },
        )
        grid = load_grid(p)
        assert len(grid) == 4
        assert {(c.target_r2, c.n_frac) for c in grid} == {
            (0.5, 0.05), (0.5, 0.01), (0.9, 0.05), (0.9, 0.01)
        }

    def test_all_propensity_subsets(self, tmp_path):
        p = self.write(
            tmp_path / "g.json",
            {"grid": [{"scenario": 1, "propensity_subsets": "all"}]},
        )
        assert len(load_grid(p)) == 57

    def test_builtin_sweeps(self, tmp_path):
        p = self.write(
            tmp_path / "g.json",
            {
                "grid": [
                    {"scenario": 1, "sweep": "covariate-count"},
                    {"scenario": 2, "sweep": "sample-size"},
                ]
            },
        )
        grid = load_grid(p)
        assert sum(c.scenario == 2 for c in grid) == 20

    def test_toml_equivalent_to_json(self, tmp_path):
        json_path = self.write(
            tmp_path / "g.json",
            {"seed": 5, "grid": [{"scenario": 1, "N": 400, "reps": 2}]},
        )
        toml_path = tmp_path / "g.toml"
        toml_path.write_text(
            'seed = 5\n\n[[grid]]\nscenario = 1\nN = 400\nreps = 2\n',
            encoding="utf-8",
        )
        assert load_grid(json_path) == load_grid(toml_path)

    def test_malformed_files_rejected(self, tmp_path):
        with pytest.raises(GridConfigError):
            load_grid(tmp_path / "missing.json")
        with pytest.raises(GridConfigError):
            load_grid(self.write(tmp_path / "a.json", {"no_grid": []}))
        with pytest.raises(GridConfigError):
            load_grid(self.write(tmp_path / "b.json", {"grid": []}))
        with pytest.raises(GridConfigError):
            load_grid(
                self.write(tmp_path / "c.json", {"grid": [{"sweep": "bogus"}]})
            )
        with pytest.raises(GridConfigError):
            load_grid(
                self.write(tmp_path / "d.json", {"grid": [{"scenario": 9}]})
            )


class TestSimulateCommand:
    def grid_file(self, tmp_path):
        path = tmp_path / "grid.json"
        path.write_text(
            json.dumps(
                {
                    "seed": 11,
                    "defaults": {"N": 800, "reps": 2},
                    "grid": [{"scenario": 1}, {"scenario": 2}],
                }
            ),
            encoding="utf-8",
        )
        return path

    def test_writes_outputs(self, tmp_path):
        out = tmp_path / "out"
        result = CliRunner().invoke(
            main,
            ["simulate", "--grid", str(self.grid_file(tmp_path)), "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert (out / "sweep.csv").exists()
        assert (out / "figure_scenario1.csv").exists()
        assert (out / "figure_scenario2.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 11
        assert manifest["n_design_points"] == 2
        assert manifest["n_failed_points"] == 0

    def test_worker_count_leaves_csv_bytes_unchanged(self, tmp_path):
        grid = self.grid_file(tmp_path)
        runner = CliRunner()
        outputs = []
        for workers, name in ((1, "serial"), (2, "parallel")):
            out = tmp_path / name
            result = runner.invoke(
                main,
                [
                    "simulate", "--grid", str(grid), "--out", str(out),
                    "--workers", str(workers),
                ],
            )
            assert result.exit_code == 0, result.output
            outputs.append(out)
        for name in ("sweep.csv", "figure_scenario1.csv", "figure_scenario2.csv"):
            a = (outputs[0] / name).read_bytes()
            b = (outputs[1] / name).read_bytes()
            assert a == b

    def test_seed_override(self, tmp_path):
        out1 = tmp_path / "s1"
        out2 = tmp_path / "s2"
        runner = CliRunner()
        grid = self.grid_file(tmp_path)
        for out, seed in ((out1, "11"), (out2, "99")):
            result = runner.invoke(
                main,
                ["simulate", "--grid", str(grid), "--out", str(out), "--seed", seed],
            )
            assert result.exit_code == 0, result.output
        assert (out1 / "sweep.csv").read_bytes() != (out2 / "sweep.csv").read_bytes()

    def test_bad_grid_exit_one(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{}", encoding="utf-8")
        result = CliRunner().invoke(
            main, ["simulate", "--grid", str(bad), "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 1
