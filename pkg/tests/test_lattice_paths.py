import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2_contingency

from conftest import find_seed, open_cell
from core.environment import Cell, EnvParams, cell_state, is_open, scan_distances, theta_values
from core.exceptions import NotOpen, SelectorExhausted
from core.lattice_paths import (Censored, FirstPassage, LatticePath, Selector, advance, advance_lr,
                                coalescence_time, coalescence_times_batch, count_branch_events,
                                crossing_time, crossing_times_batch, explicit_step, gamma, row_distances,
                                step_geometry, walk)


def _row_opens(params, row, lo=-200, hi=200):
    cols = np.arange(lo, hi + 1)
    return cols[is_open(params.seed, params.p, cols, row)]


def test_gamma_goes_to_a_nearest_open_cell(env):
    """Γ(z) 在下一行、开放，且下一行没有更近的开放格点"""
    for k in _row_opens(env, 0, -30, 30):
        z = Cell(int(k), 0)
        for which in ("l", "r"):
            g = gamma(env, z, which)
            assert g.t == 1 and cell_state(env, g).open
            d = abs(g.x - z.x)
            closer = np.arange(z.x - d + 1, z.x + d)
            assert not is_open(env.seed, env.p, closer, 1).any()


def _tie_seed():
    """(0,0) 开放，行 1 中 (0,1) 关闭、(±1,1) 开放"""
    seed = find_seed(0.5, (True, False, True))
    while not is_open(seed, 0.5, 0, 0):
        seed = find_seed(0.5, (True, False, True), start=seed + 1)
    return seed


def test_gamma_from_scalar_start_with_closed_cell_above():
    """上方格点关闭时单条路径接口正常工作：θ=0 的平局 l 向左、r 向右"""
    params = EnvParams(p=0.5, epsilon=1.0, seed=_tie_seed())
    z = Cell(0, 0)
    assert gamma(params, z, "l") == Cell(-1, 1)
    assert gamma(params, z, "r") == Cell(1, 1)
    _, _, branch = advance_lr(params.seed, params.p, params.epsilon, 0, 0)
    assert bool(branch)
    dl, dr, theta = step_geometry(params.seed, params.p, params.epsilon, 0, 0)
    assert np.shape(dl) == () and int(dl) == int(dr) == 1 and int(theta) == 0


def test_tie_without_branching_follows_theta():
    """ε = 0 时平局按 θ 决定，l 与 r 去同一侧"""
    params = EnvParams(p=0.5, epsilon=0.0, seed=_tie_seed())
    z = Cell(0, 0)
    side = -1 if cell_state(params, z).theta == -1 else 1
    assert gamma(params, z, "l") == gamma(params, z, "r") == Cell(side, 1)


def test_scalar_crossing_time_runs():
    params = EnvParams(p=0.5, epsilon=0.3, seed=_tie_seed())
    a, b = open_cell(params, 6), open_cell(params, -6)
    u, v = (a, b) if a.x >= b.x else (b, a)
    tau = crossing_time(params, u, v, 3000)
    assert isinstance(tau, Censored) or tau >= 0


def test_explicit_window_matches_advance():
    """从哈希环境取出行 t+1 的窗口交给 explicit_step，与 advance 逐个一致"""
    p, eps, radius = 0.5, 0.4, 40
    seeds = np.arange(5000, dtype=np.uint64)
    cols = np.arange(-radius, radius + 1)
    window = is_open(seeds[:, None], p, cols[None, :], 8)
    theta = theta_values(seeds, eps, 0, 7)
    for which in ("l", "r"):
        inc, branch = explicit_step(window, theta, which)
        new_x, expected_branch = advance(seeds, p, eps, 0, 7, which)
        assert np.array_equal(inc, new_x)
        assert np.array_equal(branch, expected_branch)


def test_row_distances():
    row = np.array([[True, False, False, False, True],
                    [False, False, True, False, False],
                    [False, False, False, False, False]])
    dl, dr = row_distances(row)
    assert dl.tolist() == [2, 0, 3] and dr.tolist() == [2, 0, 3]
    with pytest.raises(ValueError):
        row_distances(np.zeros(4, dtype=bool))


def test_gamma_rejects_closed_start(env):
    cols = np.arange(0, 100)
    closed = cols[~is_open(env.seed, env.p, cols, 0)]
    with pytest.raises(NotOpen):
        gamma(env, Cell(int(closed[0]), 0), "l")


def test_gamma_rejects_unknown_kind(env):
    with pytest.raises(ValueError):
        gamma(env, open_cell(env), "m")


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 63), row=st.integers(-1000, 1000))
def test_no_branching_without_epsilon(seed, row):
    """ε = 0 时 Γ^l = Γ^r"""
    xs = np.arange(-100, 100)
    x_l, x_r, branch = advance_lr(seed, 0.5, 0.0, xs, row)
    assert np.array_equal(x_l, x_r)
    assert not branch.any()


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 63), p=st.sampled_from([0.2, 0.5, 0.8]))
def test_full_branching_splits_every_tie(seed, p):
    """ε = 1 时每个平局都分叉，Γ^l 在左、Γ^r 在右"""
    xs = np.arange(-100, 100)
    dl, dr, _ = step_geometry(seed, p, 1.0, xs, 0)
    x_l, x_r, branch = advance_lr(seed, p, 1.0, xs, 0)
    tie = (dl == dr) & (dl > 0)
    assert np.array_equal(branch, tie)
    assert np.all(x_l[tie] < x_r[tie])
    assert np.array_equal(x_l[~tie], x_r[~tie])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 63), eps=st.floats(0.0, 1.0))
def test_paths_from_ordered_opens_stay_ordered(seed, eps):
    """开放格点上 Γ^l、Γ^r 单调不减，且 Γ^l ≤ Γ^r"""
    params = EnvParams(p=0.5, epsilon=eps, seed=seed)
    opens = _row_opens(params, 0)
    x_l, x_r, _ = advance_lr(seed, 0.5, eps, opens, 0)
    assert np.all(np.diff(x_l) >= 0)
    assert np.all(np.diff(x_r) >= 0)
    assert np.all(x_l <= x_r)


def test_advance_accepts_mask(env):
    xs = np.arange(-20, 20)
    x_l, x_r, _ = advance_lr(env.seed, env.p, env.epsilon, xs, 3)
    mask = np.arange(xs.size) % 2 == 0
    mixed, _ = advance(env.seed, env.p, env.epsilon, xs, 3, mask)
    assert np.array_equal(mixed, np.where(mask, x_l, x_r))


def test_tie_distance_matches_scans(env):
    xs = np.arange(-40, 40)
    dl, dr, _ = step_geometry(env.seed, env.p, env.epsilon, xs, 7)
    above = is_open(env.seed, env.p, xs, 8)
    left = scan_distances(env.seed, env.p, xs, 8, -1)
    right = scan_distances(env.seed, env.p, xs, 8, 1)
    assert np.array_equal(dl, left) and np.array_equal(dr, right)
    assert np.all(dl[above] == 0)


def test_walk_shapes_and_visited_cells_open(env):
    z = open_cell(env)
    path = walk(env, z, Selector.always_left(), 50)
    assert isinstance(path, LatticePath)
    assert len(path) == 51
    assert path.times[0] == z.t and path.end.t == z.t + 50
    assert all(cell_state(env, Cell(int(x), int(t))).open for x, t in zip(path.positions, path.times))


def test_walk_with_uniform_selector_follows_gamma(env):
    """每一步都等于当前格点的 Γ^l 或 Γ^r"""
    z = open_cell(env)
    path = walk(env, z, Selector.uniform(4), 40)
    for k in range(40):
        here = Cell(int(path.positions[k]), int(path.times[k]))
        nxt = int(path.positions[k + 1])
        assert nxt in (gamma(env, here, "l").x, gamma(env, here, "r").x)


def test_explicit_selector():
    z_env = EnvParams(p=0.5, epsilon=0.5, seed=3)
    z = open_cell(z_env)
    path = walk(z_env, z, Selector.explicit("lrlr"), 4)
    assert len(path) == 5
    with pytest.raises(SelectorExhausted):
        walk(z_env, z, Selector.explicit("lr"), 3)
    with pytest.raises(ValueError):
        Selector.explicit("lx")
    with pytest.raises(ValueError):
        walk(z_env, z, Selector.always_left(), 0)


def test_selector_path_is_sandwiched(env):
    """任意选择序列的路径始终夹在同起点的 l-路径与 r-路径之间"""
    z = open_cell(env, 3)
    left = walk(env, z, Selector.always_left(), 80)
    right = walk(env, z, Selector.always_right(), 80)
    for seed in range(5):
        mid = walk(env, z, Selector.uniform(seed), 80)
        assert np.all(left.positions <= mid.positions)
        assert np.all(mid.positions <= right.positions)


def test_unbiased_selector_has_zero_mean():
    """每步抛硬币选 l/r 时，位移的样本均值在 4σ 内为 0"""
    n, steps = 20_000, 50
    seeds = np.arange(n, dtype=np.uint64) + 77
    rng = np.random.default_rng(1)
    x = np.zeros(n, dtype=np.int64)
    for k in range(steps):
        x, _ = advance(seeds, 0.5, 0.4, x, k, rng.random(n) < 0.5)
    assert abs(x.mean()) < 4 * x.std() / np.sqrt(n)


def test_increments_are_stationary():
    """不同时空锚点的单步位移律一致（列联表卡方检验）"""
    seeds = np.arange(20_000, dtype=np.uint64)
    table = []
    for x0, t0 in ((0, 0), (500, 1000)):
        new_x, _ = advance(seeds, 0.5, 0.3, x0, t0, "l")
        inc = np.clip(new_x - x0, -3, 3)
        table.append(np.bincount(inc + 3, minlength=7))
    _, pvalue, _, _ = chi2_contingency(np.array(table))
    assert pvalue > 1e-4


def test_selector_is_deterministic():
    assert Selector.uniform(9).choices(30) == Selector.uniform(9).choices(30)
    assert set(Selector.uniform(9).choices(200)) == {"l", "r"}


def test_coalescence_time_same_start_is_zero(env):
    z = open_cell(env)
    assert coalescence_time(env, z, z, "l", 10) == 0


def test_coalescence_time_matches_walks(env):
    """返回的 τ 时刻两条路径重合，之前不重合"""
    opens = _row_opens(env, 0)
    i = int(np.searchsorted(opens, 0))
    u, v = Cell(int(opens[i]), 0), Cell(int(opens[i + 2]), 0)
    tau = coalescence_time(env, u, v, "l", 5000)
    if isinstance(tau, Censored):
        assert tau.t_max == 5000
        return
    a = walk(env, u, Selector.always_left(), tau)
    b = walk(env, v, Selector.always_left(), tau)
    assert a.end == b.end
    assert np.all(a.positions[:-1] != b.positions[:-1])


def test_coalescence_time_requires_same_row(env):
    with pytest.raises(ValueError):
        coalescence_time(env, open_cell(env, 0, 0), open_cell(env, 0, 1), "l", 10)


def test_crossing_time_validation(env):
    u = open_cell(env, 10)
    v = open_cell(env, -10)
    assert crossing_time(env, u, u, 10) == 0
    with pytest.raises(ValueError):
        crossing_time(env, v, u, 10)
    tau = crossing_time(env, u, v, 5000)
    assert isinstance(tau, (int, Censored))


def test_count_branch_events():
    z_env = EnvParams(p=0.5, epsilon=0.0, seed=8)
    path = walk(z_env, open_cell(z_env), Selector.always_right(), 200)
    assert count_branch_events(z_env, path) == 0

    full = EnvParams(p=0.5, epsilon=1.0, seed=8)
    path = walk(full, open_cell(full), Selector.always_right(), 200)
    dl, dr, _ = step_geometry(full.seed, full.p, 1.0, path.positions, path.times)
    assert count_branch_events(full, path) == int(np.sum((dl == dr) & (dl > 0)))


def test_batch_coalescence_is_reproducible():
    seeds = np.arange(64, dtype=np.uint64)
    a = coalescence_times_batch(seeds, 0.5, 0.1, 2, "l", 500)
    b = coalescence_times_batch(seeds, 0.5, 0.1, 2, "l", 500)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.observed, b.observed)
    assert np.all(a.times[~a.observed] == 500)


def test_batch_zero_gap_coalesces_immediately():
    fp = coalescence_times_batch(np.arange(10, dtype=np.uint64), 0.5, 0.1, 0, "r", 100)
    assert np.all(fp.times == 0) and fp.observed.all()


def test_crossing_never_later_than_coalescence():
    """同一环境下 τ^c_1 ≤ τ_1（r-路径不会在同起点 l-路径左侧）"""
    seeds = np.arange(200, dtype=np.uint64) + 1000
    cross = crossing_times_batch(seeds, 0.5, 0.2, 1, 2000)
    coal = coalescence_times_batch(seeds, 0.5, 0.2, 1, "l", 2000)
    assert np.all(cross.times <= coal.times)


def test_first_passage_survival():
    fp = FirstPassage(times=np.array([1, 3, 5, 10]), observed=np.array([True, True, True, False]), t_max=10)
    assert fp.survival([0, 2, 4, 9, 10]).tolist() == [1.0, 0.75, 0.5, 0.25, 0.25]
    assert fp.censored_fraction == 0.25
    both = FirstPassage.concat([fp, fp])
    assert len(both) == 8


if __name__ == "__main__":
    test_crossing_never_later_than_coalescence()
    print("✅ lattice_paths 测试通过")
