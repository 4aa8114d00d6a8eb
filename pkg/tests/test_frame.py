import numpy as np
import pytest

from genbounds.frame import (
    FrameError,
    OutcomeRange,
    load_frame,
    standardize_covariates,
    validate_frame,
    write_frame,
)

from conftest import make_frame


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadFrame:
    def test_three_row_csv(self, tmp_path):
        p = write_csv(
            tmp_path / "f.csv",
            "id,z,w,y,a,b\nu1,1,1,2.5,0.1,0.2\nu2,0,,,0.3,0.4\nu3,0,,,0.5,0.6\n",
        )
        frame = load_frame(p)
        assert (frame.N, frame.n, frame.q) == (3, 1, 2)
        assert frame.covariate_names == ("a", "b")
        assert frame.y[0] == 2.5 and np.isnan(frame.y[1])

    def test_missing_outcome_on_sampled_row(self, tmp_path):
        p = write_csv(
            tmp_path / "f.csv", "id,z,w,y,a\nu1,1,1,,0.1\nu2,0,,,0.3\n"
        )
        with pytest.raises(FrameError, match="missing outcome on sampled unit"):
            load_frame(p)

    def test_non_binary_z(self, tmp_path):
        p = write_csv(tmp_path / "f.csv", "id,z,w,y,a\nu1,2,1,1.0,0.1\n")
        with pytest.raises(FrameError, match="non-binary z"):
            load_frame(p)

    def test_duplicate_ids(self, tmp_path):
        p = write_csv(
            tmp_path / "f.csv", "id,z,w,y,a\nu1,1,1,1.0,0.1\nu1,0,,,0.3\n"
        )
        with pytest.raises(FrameError, match="duplicate ids"):
            load_frame(p)

    def test_malformed_covariate(self, tmp_path):
        p = write_csv(tmp_path / "f.csv", "id,z,w,y,a\nu1,1,1,1.0,oops\n")
        with pytest.raises(FrameError, match="malformed"):
            load_frame(p)

    def test_w_on_nonsampled_row(self, tmp_path):
        p = write_csv(tmp_path / "f.csv", "id,z,w,y,a\nu1,0,1,,0.1\n")
        with pytest.raises(FrameError, match="must be empty"):
            load_frame(p)

    def test_indiana_shaped_counts(self, tmp_path):
        rng = np.random.default_rng(42)
        N, n, q = 1514, 54, 14
        lines = ["id,z,w,y," + ",".join(f"c{j}" for j in range(q))]
        sampled = set(rng.choice(N, size=n, replace=False).tolist())
        arm = 1
        for i in range(N):
            covs = ",".join(f"{v:.4f}" for v in rng.normal(size=q))
            if i in sampled:
                arm = 1 - arm
                lines.append(f"s{i},1,{arm},{rng.normal():.4f},{covs}")
            else:
                lines.append(f"s{i},0,,,{covs}")
        p = write_csv(tmp_path / "indiana.csv", "\n".join(lines) + "\n")
        frame = load_frame(p)
        assert (frame.N, frame.n, frame.q) == (1514, 54, 14)
        assert validate_frame(frame) == []

    def test_schema_mapping(self, tmp_path):
        p = write_csv(
            tmp_path / "f.csv",
            "school,in_study,tx,score,a\nu1,1,0,1.5,0.1\nu2,0,,,0.2\n",
        )
        frame = load_frame(
            p, schema={"id": "school", "z": "in_study", "w": "tx", "y": "score"}
        )
        assert frame.n == 1 and frame.covariate_names == ("a",)


class TestValidateFrame:
    def test_valid_frame_empty_report(self, small_frame):
        assert validate_frame(small_frame) == []

    def test_no_control_units(self):
        frame = make_frame(N=20, seed=3)
        w = frame.w.copy()
        w[frame.z == 1] = 1.0
        bad = type(frame)(
            ids=frame.ids, z=frame.z, w=w, y=frame.y, x=frame.x,
            covariate_names=frame.covariate_names,
        )
        assert "no control units in sample" in validate_frame(bad)

    def test_all_sampled_degenerate(self):
        frame = make_frame(N=10, seed=4)
        z = np.ones(frame.N, dtype=np.int64)
        w = np.tile([1.0, 0.0], frame.N // 2)
        y = np.arange(frame.N, dtype=float)
        bad = type(frame)(
            ids=frame.ids, z=z, w=w, y=y, x=frame.x,
            covariate_names=frame.covariate_names,
        )
        assert "no non-sampled units; bounds degenerate" in validate_frame(bad)


class TestRoundTrip:
    def test_write_then_load_identical(self, tmp_path, small_frame):
        path = tmp_path / "out.csv"
        write_frame(small_frame, path)
        assert load_frame(path) == small_frame

    def test_loaded_frame_revalidates_clean(self, tmp_path, small_frame):
        path = tmp_path / "out.csv"
        write_frame(small_frame, path)
        assert validate_frame(load_frame(path)) == []


class TestStandardize:
    def test_columns_zero_mean_unit_sd(self, small_frame):
        out, transform = standardize_covariates(small_frame)
        assert np.allclose(out.x.mean(axis=0), 0, atol=1e-12)
        assert np.allclose(out.x.std(axis=0, ddof=1), 1, atol=1e-12)
        assert np.allclose(transform.invert(out.x), small_frame.x)

    def test_idempotent(self, small_frame):
        once, _ = standardize_covariates(small_frame)
        twice, _ = standardize_covariates(once)
        assert np.allclose(once.x, twice.x, atol=1e-12)

    def test_two_point_column_sample_sd(self):
        # {0, 10}: mean 5, sample sd (N-1 denominator) = sqrt(50), so the
        # standardized values are +/- 1/sqrt(2)
        from genbounds.frame import StudyFrame

        frame = StudyFrame(
            ids=("a", "b"),
            z=np.array([1, 1]),
            w=np.array([1.0, 0.0]),
            y=np.array([1.0, 2.0]),
            x=np.array([[0.0], [10.0]]),
            covariate_names=("c",),
        )
        out, transform = standardize_covariates(frame)
        assert transform.sds[0] == pytest.approx(np.sqrt(50.0))
        assert out.x[:, 0] == pytest.approx([-1 / np.sqrt(2), 1 / np.sqrt(2)])

    def test_constant_column_error(self, small_frame):
        x = small_frame.x.copy()
        x[:, 1] = 3.0
        frame = type(small_frame)(
            ids=small_frame.ids, z=small_frame.z, w=small_frame.w,
            y=small_frame.y, x=x, covariate_names=small_frame.covariate_names,
        )
        with pytest.raises(FrameError, match="x2.*zero variance"):
            standardize_covariates(frame)


def test_outcome_range_invariant():
    assert OutcomeRange(-1.0, 2.0).width == 3.0
    with pytest.raises(FrameError):
        OutcomeRange(2.0, 2.0)
