import numpy as np
import pytest

from core.dual import (DualPath, DualityReport, DualVertex, Window, dual_advance, dual_coalescence_time,
                       dual_coalescence_times_batch, dual_kernel, dual_step, dual_vertices_in_row,
                       dual_walk, flanking_opens, integer_return_times_batch, verify_duality)
from core.environment import EnvParams, is_open
from core.exceptions import NotDualVertex
from core.lattice_paths import Censored
from core.reference import Pmf


@pytest.mark.parametrize("seed", [1, 2, 3, 4])
@pytest.mark.parametrize("p,eps", [(0.5, 0.0), (0.5, 0.3), (0.5, 1.0), (0.3, 0.5)])
def test_local_rule_matches_definition(seed, p, eps):
    """批量局部规则与按 a^l / a^r 定义的对偶一步逐点相同"""
    params = EnvParams(p=p, epsilon=eps, seed=seed)
    for t in (-3, 0, 5):
        for v in dual_vertices_in_row(params, t, -15, 15):
            for which in ("l", "r"):
                new_x2, branch = dual_advance(seed, p, eps, v.x2, v.t, which)
                assert np.shape(new_x2) == np.shape(branch) == ()
                assert int(new_x2) == dual_step(params, v, which).x2


def test_dual_vertices_are_midpoints(env):
    for v in dual_vertices_in_row(env, 2, -30, 30):
        a, b = flanking_opens(env, v)
        assert a < b and a + b == v.x2
        cols = np.arange(a + 1, b)
        assert not is_open(env.seed, env.p, cols, 2).any()


def test_flanking_opens_rejects_non_vertices(env):
    cols = np.arange(-50, 50)
    opens = is_open(env.seed, env.p, cols, 0)
    k = int(cols[np.flatnonzero(opens[:-1] & ~opens[1:])[0]])
    with pytest.raises(NotDualVertex):
        flanking_opens(env, DualVertex(2 * k, 0))        # 开放格点本身
    with pytest.raises(NotDualVertex):
        flanking_opens(env, DualVertex(2 * k + 1, 0))    # 右侧相邻格点关闭
    with pytest.raises(NotDualVertex):
        dual_step(env, DualVertex(2 * k, 0), "l")


def test_dual_branch_sides():
    """对偶分叉处 l 走到右侧对偶邻点，r 走到左侧"""
    params = EnvParams(p=0.5, epsilon=1.0, seed=21)
    found = 0
    for t in range(0, 40):
        for v in dual_vertices_in_row(params, t, -20, 20):
            x_l, branch = dual_advance(params.seed, params.p, 1.0, v.x2, v.t, "l")
            x_r, _ = dual_advance(params.seed, params.p, 1.0, v.x2, v.t, "r")
            if bool(branch):
                found += 1
                assert x_r < v.x2 < x_l
            else:
                assert x_l == x_r
    assert found > 0


@pytest.mark.parametrize("seed", [5, 6, 7])
@pytest.mark.parametrize("eps", [0.05, 0.5])
def test_verify_duality_on_windows(seed, eps):
    report = verify_duality(EnvParams(p=0.5, epsilon=eps, seed=seed), Window.square(40))
    assert report.crossings == 0
    assert report.dnb_branches == report.dual_branches
    assert report.consistent


def test_verify_duality_low_density():
    report = verify_duality(EnvParams(p=0.3, epsilon=0.4, seed=77), Window(-10, 30, 0, 25))
    assert report.consistent


def test_duality_report_flags_mismatch():
    assert not DualityReport(crossings_l=1).consistent
    assert not DualityReport(dnb_branches=2, dual_branches=1).consistent
    assert DualityReport(dnb_branches=3, dual_branches=3).consistent


def test_window_validation():
    with pytest.raises(ValueError):
        Window(5, 5, 0, 10)
    assert Window.square(10, 3, 4) == Window(3, 13, 4, 14)


@pytest.mark.parametrize("p", [0.3, 0.5, 0.8])
@pytest.mark.parametrize("eps", [0.0, 0.4])
def test_dual_kernel_moments(p, eps):
    half = dual_kernel(p, eps, at_integer=False)
    whole_l = dual_kernel(p, eps, at_integer=True, kind="l")
    whole_r = dual_kernel(p, eps, at_integer=True, kind="r")
    for law in (half, whole_l, whole_r):
        assert law.total == pytest.approx(1.0, abs=1e-11)
    assert half.mean == pytest.approx(0.0, abs=1e-12)
    # 倍坐标下的均值为 ε
    assert whole_l.mean == pytest.approx(eps, abs=1e-10)
    assert whole_r.mean == pytest.approx(-eps, abs=1e-10)


def test_dual_step_law_matches_kernel():
    """整数位置一步对偶增量的经验律与 dual_kernel 的 TV 很小"""
    p, eps = 0.5, 0.3
    seeds = np.arange(2000, dtype=np.uint64)[:, None]
    rows = -np.arange(100)[None, :]
    for parity in (0, 1):
        new_x2, _ = dual_advance(seeds, p, eps, parity, rows, "l")
        empirical = Pmf.from_samples((new_x2 - parity).ravel())
        assert empirical.tv(dual_kernel(p, eps, at_integer=parity == 0)) < 0.01


def test_dual_walk(env):
    v = dual_vertices_in_row(env, 10, -5, 5)[0]
    path = dual_walk(env, v, "r", 10)
    assert isinstance(path, DualPath)
    assert path.times.tolist() == list(range(10, -1, -1))
    assert path.end.t == 0
    for x2, t in zip(path.positions, path.times):
        flanking_opens(env, DualVertex(int(x2), int(t)))
    with pytest.raises(ValueError):
        dual_walk(env, v, "l", 0)


def test_dual_coalescence_time(env):
    vs = dual_vertices_in_row(env, 0, -10, 10)
    assert dual_coalescence_time(env, vs[0], vs[0], "l", 10) == 0
    tau = dual_coalescence_time(env, vs[0], vs[2], "l", 3000)
    assert isinstance(tau, (int, Censored))
    other = dual_vertices_in_row(env, 1, -10, 10)[0]
    with pytest.raises(ValueError):
        dual_coalescence_time(env, vs[0], other, "l", 10)


def test_dual_batches():
    seeds = np.arange(128, dtype=np.uint64)
    a = dual_coalescence_times_batch(seeds, 0.5, 0.2, 2, "l", 400)
    b = dual_coalescence_times_batch(seeds, 0.5, 0.2, 2, "l", 400)
    assert np.array_equal(a.times, b.times)

    ret = integer_return_times_batch(seeds, 0.5, 0.2, 1, "l", 50)
    assert np.all(ret.times >= 1) and np.all(ret.times <= 50)
    assert ret.t_max == 50


if __name__ == "__main__":
    test_verify_duality_on_windows(5, 0.05)
    print("✅ dual 测试通过")
