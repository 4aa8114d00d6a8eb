import numpy as np
import pytest

from genbounds.frame import StudyFrame


def make_frame(
    N=40,
    q=2,
    n_target=None,
    seed=0,
    y_scale=1.0,
):
    """Random but always-valid frame: at least one treated and one control
    sampled unit, no degenerate sample."""
    rng = np.random.default_rng(seed)
    n = n_target or max(4, N // 4)
    assert 2 <= n < N
    z = np.zeros(N, dtype=np.int64)
    z[rng.choice(N, size=n, replace=False)] = 1
    w = np.full(N, np.nan)
    sampled = np.flatnonzero(z == 1)
    arms = rng.integers(0, 2, n).astype(float)
    arms[0], arms[1] = 1.0, 0.0  # force both arms
    w[sampled] = arms
    y = np.full(N, np.nan)
    y[sampled] = rng.normal(scale=y_scale, size=n)
    x = rng.normal(size=(N, q))
    return StudyFrame(
        ids=tuple(f"id{i:04d}" for i in range(N)),
        z=z,
        w=w,
        y=y,
        x=x,
        covariate_names=tuple(f"x{j + 1}" for j in range(q)),
    )


@pytest.fixture
def small_frame():
    return make_frame(N=40, q=2, seed=1)
