import math

import numpy as np
import pytest
from scipy.stats import kstest

from core.exceptions import InvalidStep
from core.reference import (ModelParams, Pmf, TheoryConstants, branch_correction_law, enumerate_step_law,
                            first_meeting_cdf, geometric_difference_pmf, kernel_lr, kernel_pv, lambda_p2,
                            lambda_p2_closed_form, simulate_lr_pair, survival_probability)

SAMPLE_PS = (0.2, 0.5, 0.8)


@pytest.mark.parametrize("p", SAMPLE_PS)
def test_kernel_pv_is_symmetric_probability(p):
    law = kernel_pv(p)
    assert law.total == pytest.approx(1.0, abs=1e-11)
    assert law.mean == pytest.approx(0.0, abs=1e-12)
    assert law.prob(0) == p
    assert law.prob(3) == pytest.approx(law.prob(-3))


def test_lambda_at_one_half():
    """p = 1/2 时 λ² = 10/9"""
    assert lambda_p2(0.5) == pytest.approx(10.0 / 9.0, abs=1e-10)


@pytest.mark.parametrize("p", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_lambda_summation_matches_closed_form(p):
    assert lambda_p2(p) == pytest.approx(lambda_p2_closed_form(p), abs=1e-10)


def test_kernel_pv_value_at_one_half():
    """p = 1/2：P_v(0, 1) = p q² + (p²/2) q = 0.1875"""
    law = kernel_pv(0.5)
    assert law.prob(1) == pytest.approx(0.1875, abs=1e-15)
    assert law.prob(-1) == pytest.approx(0.1875, abs=1e-15)


@pytest.mark.parametrize("p", SAMPLE_PS)
def test_enumeration_matches_kernel_pv(p):
    """ε = 0 的穷举律与 P_v 的 TV < 1e-9"""
    law, residual = enumerate_step_law(p, 0.0, "l")
    assert residual < 1e-9
    assert law.tv(kernel_pv(p)) < 1e-9


@pytest.mark.parametrize("p", SAMPLE_PS)
@pytest.mark.parametrize("kind", ["l", "r"])
def test_enumeration_matches_kernel_lr(p, kind):
    law, _ = enumerate_step_law(p, 0.4, kind)
    assert law.tv(kernel_lr(p, 0.4, kind)) < 1e-9


@pytest.mark.parametrize("p", SAMPLE_PS)
def test_kernel_lr_mean_is_drift(p):
    """r-路径每步平均位移 εq/(2-p)²，l-路径取负"""
    eps = 0.3
    q = 1.0 - p
    drift = eps * q / (2.0 - p) ** 2
    assert kernel_lr(p, eps, "r").mean == pytest.approx(drift, abs=1e-10)
    assert kernel_lr(p, eps, "l").mean == pytest.approx(-drift, abs=1e-10)
    assert kernel_lr(p, eps, "l").total == pytest.approx(1.0, abs=1e-11)


@pytest.mark.parametrize("p", SAMPLE_PS)
@pytest.mark.parametrize("kind", ["l", "r"])
def test_small_radius_enumeration_is_exact_up_to_truncation(p, kind):
    """半径很小时，穷举律与核只差 |y| > R 的质量 q^{2R+1}"""
    law, residual = enumerate_step_law(p, 0.4, kind, radius=3)
    assert residual == pytest.approx((1 - p) ** 7)
    assert law.total == pytest.approx(1.0 - residual, abs=1e-14)
    exact = kernel_lr(p, 0.4, kind)
    for y in range(-3, 4):
        assert law.prob(y) == pytest.approx(exact.prob(y), abs=1e-14)
    assert law.tv(exact) <= residual


@pytest.mark.parametrize("p", SAMPLE_PS)
@pytest.mark.parametrize("g", [1, 3, 8])
def test_long_jump_bound_covers_one_step_tail(p, g):
    """单步 |Y| > g 的概率不超过 2e^{-c(g-1)}，c = -log(1-p)"""
    law = kernel_lr(p, 0.5, "l")
    tail = law.probs[np.abs(law.support) > g].sum()
    assert tail <= 2.0 * math.exp(math.log(1.0 - p) * (g - 1))


def test_kernel_lr_rejects_unknown_kind():
    with pytest.raises(ValueError):
        kernel_lr(0.5, 0.1, "x")
    with pytest.raises(ValueError):
        enumerate_step_law(0.5, 0.1, "x")


def test_branch_correction_law():
    p, eps = 0.5, 0.6
    law = branch_correction_law(p, eps)
    assert law.total == pytest.approx(1.0, abs=1e-12)
    assert law.mean == pytest.approx(-eps * (1 - p) / (2 - p) ** 2, abs=1e-10)
    assert np.all(law.support <= 0) and np.all(law.support % 2 == 0)


def test_geometric_difference():
    law = geometric_difference_pmf(0.5)
    assert law.total == pytest.approx(1.0, abs=1e-11)
    assert law.prob(0) == pytest.approx(0.5 / 1.5)


def test_theory_constants_at_one_half():
    c = TheoryConstants.compute(0.5, 1.0, 50)
    assert c.b_p == pytest.approx(2.0 / 9.0)
    assert c.tie_prob == pytest.approx(1.0 / 6.0)
    assert c.epsilon == pytest.approx(0.02)
    assert c.branch_prob == pytest.approx(0.02 / 6.0)
    assert c.step_drift * 50 == pytest.approx(c.b_p)


def test_model_params():
    params = ModelParams(p=0.5, b=2.0, n=100, alpha=2.0)
    assert params.eps == pytest.approx(2e-4)
    assert ModelParams(epsilon=0.3).eps == 0.3
    assert params.env(7).seed == 7 and params.env().seed == params.seed
    with pytest.raises(ValueError):
        ModelParams(p=1.0)
    with pytest.raises(ValueError):
        ModelParams(b=5.0, n=2)          # ε = 2.5
    with pytest.raises(ValueError):
        ModelParams(n=0)


def test_survival_probability():
    assert survival_probability(0.0, 1.0, 1.0) == 0.0
    assert survival_probability(1e9, 1.0, 1.0) == pytest.approx(1.0)
    # δ/√(2tλ²) = 1
    assert survival_probability(math.sqrt(2.0), 1.0, 1.0) == pytest.approx(0.682689492, abs=1e-9)
    for bad in ((0.5, 0.0, 1.0), (-0.1, 1.0, 1.0), (0.5, 1.0, 0.0)):
        with pytest.raises(ValueError):
            survival_probability(*bad)


@pytest.mark.parametrize("gap,t", [(0.5, 1.0), (1.0, 0.2), (0.1, 3.0)])
def test_first_meeting_cdf_complements_survival(gap, t):
    lam2 = 10.0 / 9.0
    assert first_meeting_cdf(gap, t, lam2) == pytest.approx(1.0 - survival_probability(gap, t, lam2), abs=1e-12)
    assert first_meeting_cdf(0.0, t, lam2) == 1.0


def test_lr_pair_clocks_and_order():
    """T + S 等于已走时间；相遇之后 L ≤ R"""
    traj = simulate_lr_pair(0.0, 0.5, lam=1.0, b_p=0.2, dt=1e-3, T=0.5, seed=4, replicas=50)
    assert np.array_equal(traj.apart_steps + traj.together_steps,
                          np.broadcast_to(traj.steps[:, None], traj.apart_steps.shape))
    assert np.allclose(traj.T_clock + traj.S_clock, traj.times[:, None])
    assert np.all(traj.gap[traj.met] >= 0)
    state = traj.state(len(traj.steps) - 1, 0)
    assert state.T_clock + state.S_clock == pytest.approx(0.5)


def test_lr_pair_same_start_has_met():
    traj = simulate_lr_pair(0.0, 0.0, lam=1.0, b_p=0.5, dt=1e-2, T=1.0, seed=1, replicas=20,
                            checkpoints=[0.5, 1.0])
    assert traj.steps.tolist() == [0, 50, 100]
    assert np.all(traj.met)
    assert np.all(traj.meet_time == 0.0)
    assert np.all(traj.gap >= 0)


def test_lr_pair_without_drift_shares_noise():
    """b_p = 0 且同点出发：始终共用噪声，L 与 R 完全重合"""
    traj = simulate_lr_pair(0.2, 0.2, lam=1.3, b_p=0.0, dt=1e-2, T=2.0, seed=6, replicas=30)
    assert np.array_equal(traj.L, traj.R)
    assert np.all(traj.apart_steps == 0)


def test_lr_pair_marginals_before_meeting_are_normal():
    """起点相距很远（T 内不会相遇）时，L(T)、R(T) 是漂移 ∓b_p、方差 λ²T 的正态"""
    lam, b_p, T = 1.2, 0.4, 1.0
    traj = simulate_lr_pair(0.0, 50.0, lam=lam, b_p=b_p, dt=0.01, T=T, seed=21, replicas=2000,
                            checkpoints=[T])
    assert not traj.met.any()
    sd = lam * math.sqrt(T)
    assert kstest(traj.L[-1], "norm", args=(-b_p * T, sd)).pvalue > 1e-3
    assert kstest(traj.R[-1], "norm", args=(50.0 + b_p * T, sd)).pvalue > 1e-3


def test_lr_pair_meeting_time_follows_levy_law():
    """无漂移时首次相遇时间的经验分布函数与 first_meeting_cdf 的 KS 距离很小"""
    gap, lam, T, replicas = 0.5, 1.0, 1.0, 2000
    traj = simulate_lr_pair(0.0, gap, lam=lam, b_p=0.0, dt=2e-4, T=T, seed=17, replicas=replicas,
                            checkpoints=[T])
    times = np.sort(traj.meet_time[np.isfinite(traj.meet_time)])
    model = np.array([first_meeting_cdf(gap, t, lam * lam) for t in times])
    upper = np.arange(1, times.size + 1) / replicas
    lower = np.arange(times.size) / replicas
    distance = max(np.max(np.abs(upper - model)), np.max(np.abs(lower - model)))
    # 离散监测让相遇略晚，容差包含 O(√dt) 的偏差
    assert distance < 0.06
    assert abs(times.size / replicas - first_meeting_cdf(gap, T, lam * lam)) < 0.05


def test_lr_pair_validation_and_reproducibility():
    with pytest.raises(InvalidStep):
        simulate_lr_pair(0.0, 1.0, 1.0, 0.1, dt=0.0, T=1.0, seed=1)
    with pytest.raises(ValueError):
        simulate_lr_pair(0.0, 1.0, 1.0, 0.1, dt=0.1, T=0.1, seed=1)
    a = simulate_lr_pair(0.0, 1.0, 1.0, 0.1, dt=0.01, T=1.0, seed=9, replicas=5)
    b = simulate_lr_pair(0.0, 1.0, 1.0, 0.1, dt=0.01, T=1.0, seed=9, replicas=5)
    assert np.array_equal(a.L, b.L) and np.array_equal(a.R, b.R)


def test_pmf_tv():
    a = Pmf([0, 1], [0.5, 0.5])
    b = Pmf([1, 2], [0.5, 0.5])
    assert a.tv(b) == pytest.approx(0.5)
    assert a.tv(a) == 0.0
    assert Pmf.from_samples([1, 1, 2, 4]).prob(1) == 0.5


if __name__ == "__main__":
    test_lambda_at_one_half()
    test_theory_constants_at_one_half()
    print("✅ reference 测试通过")
