"""
Reference: 理论目标值与连续参照模拟器

负责：
- 无分叉单步核 P_v、分叉修正律、l/r 单步核以及穷举校验
- 派生常数 λ_p²、b_p、平局概率、分叉率
- 左右 Brownian 对 (L, R) 的 Euler 离散模拟（粘连边界 + 时钟分解 T + S = t）
- 合并 Brownian 运动的存活概率 2Φ(δ/√(2tλ²)) - 1

所有级数都按尾部质量截断，不使用固定项数。
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.stats import levy, norm

from core.environment import EnvParams
from core.exceptions import InvalidStep
from core.lattice_paths import explicit_step

DEFAULT_TAIL = 1e-12


# ---------------------------------------------------------
# 概率质量函数
# ---------------------------------------------------------

@dataclass
class Pmf:
    """整数支撑上的概率质量函数（支撑严格递增）"""
    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=np.int64)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.support.shape != self.probs.shape:
            raise ValueError("support 与 probs 长度不一致")

    @property
    def total(self) -> float:
        return float(self.probs.sum())

    @property
    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))

    @property
    def second_moment(self) -> float:
        return float(np.dot(self.support.astype(np.float64) ** 2, self.probs))

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean ** 2

    def prob(self, y: int) -> float:
        idx = np.searchsorted(self.support, y)
        if idx < self.support.size and self.support[idx] == y:
            return float(self.probs[idx])
        return 0.0

    def tv(self, other: "Pmf") -> float:
        """总变差距离 ½Σ|P - Q|（在两者支撑的并集上）"""
        union = np.union1d(self.support, other.support)
        a = np.zeros(union.size)
        b = np.zeros(union.size)
        a[np.searchsorted(union, self.support)] = self.probs
        b[np.searchsorted(union, other.support)] = other.probs
        return 0.5 * float(np.abs(a - b).sum())

    @classmethod
    def from_samples(cls, values) -> "Pmf":
        values = np.asarray(values, dtype=np.int64)
        support, counts = np.unique(values, return_counts=True)
        return cls(support, counts / values.size)


def tail_radius(q: float, tail: float, exponent: int, offset: int = 0, coeff: float = 1.0) -> int:
    """最小的 M 使 coeff·q^{exponent·M + offset} < tail"""
    if q <= 0.0:
        return 1
    m = (math.log(tail / coeff) / math.log(q) - offset) / exponent
    return max(1, int(math.ceil(m)) + 1)


def geometric_difference_pmf(p: float, tail: float = DEFAULT_TAIL) -> Pmf:
    """G₁ - G₂ 的分布，G₁, G₂ 独立同 Geometric(p) 于 {1,2,...}：P(m) = p q^{|m|}/(2-p)"""
    q = 1.0 - p
    radius = tail_radius(q, tail, exponent=1, offset=1, coeff=2.0 / (2.0 - p))
    m = np.arange(-radius, radius + 1)
    return Pmf(m, p * q ** np.abs(m) / (2.0 - p))


# ---------------------------------------------------------
# 前向单步核
# ---------------------------------------------------------

def _check_p(p: float) -> None:
    if not 0.0 < p < 1.0:
        raise ValueError(f"p 必须在 (0, 1) 内，收到 {p}")


def kernel_pv(p: float, tail: float = DEFAULT_TAIL) -> Pmf:
    """
    无分叉 (ε=0) 单步位移律 P_v(0, y)

    P_v(0) = p，y ≠ 0 时 P_v(y) = p q^{2|y|} + (p²/2) q^{2|y|-1}。
    截断半径 M 满足尾部质量 P(|Y| > M) = q^{2M+1} < tail。
    """
    _check_p(p)
    q = 1.0 - p
    radius = tail_radius(q, tail, exponent=2, offset=1)
    y = np.arange(-radius, radius + 1)
    a = np.abs(y)
    probs = p * q ** (2 * a) + 0.5 * p * p * q ** (2 * a - 1)
    probs[radius] = p
    return Pmf(y, probs)


def lambda_p2(p: float, tol: float = 1e-13) -> float:
    """λ_p² = Σ y² P_v(0, y)，按二阶矩尾部上界截断"""
    _check_p(p)
    q = 1.0 - p
    r = q * q
    radius = 1
    while 2.0 * (radius + 1) ** 2 * q ** (2 * radius + 1) / (1.0 - r) ** 3 >= tol:
        radius += max(1, radius // 4)
    return kernel_pv(p, tail=q ** (2 * radius + 1) * 0.5).second_moment


def lambda_p2_closed_form(p: float) -> float:
    """λ_p² 的闭式 q(1+q²) / (p²(1+q)²)，仅用于交叉校验"""
    q = 1.0 - p
    return q * (1.0 + q * q) / (p * p * (1.0 + q) ** 2)


def branch_correction_law(p: float, epsilon: float, tail: float = DEFAULT_TAIL) -> Pmf:
    """
    l-路径在平局事件上的分叉修正位移律，支撑 {0, -2, -4, ...}

    P(-2k) = (ε/2) p² q^{2k-1}，剩余质量在 0；均值 -ε q/(2-p)²
    """
    _check_p(p)
    q = 1.0 - p
    radius = tail_radius(q, tail, exponent=2, coeff=max(epsilon, 1e-300))
    k = np.arange(1, radius + 1)
    jumps = 0.5 * epsilon * p * p * q ** (2 * k - 1)
    support = np.concatenate([-2 * k[::-1], [0]])
    probs = np.concatenate([jumps[::-1], [1.0 - jumps.sum()]])
    return Pmf(support, probs)


def kernel_lr(p: float, epsilon: float, kind: str, tail: float = DEFAULT_TAIL) -> Pmf:
    """
    l/r-路径单步律：P_v 在平局事件上施加分叉修正

    距离 d 的平局原本左右各半；θ=0 时 l-路径改走左侧，
    即 (ε/2) p² q^{2d-1} 的质量从 +d 移到 -d（r-路径相反）。
    """
    if kind not in ("l", "r"):
        raise ValueError(f"kind 只能是 'l' 或 'r'，收到 {kind!r}")
    base = kernel_pv(p, tail)
    q = 1.0 - p
    y = base.support
    probs = base.probs.copy()
    a = np.abs(y)
    moved = np.where(a > 0, 0.5 * epsilon * p * p * q ** (2 * a - 1), 0.0)
    toward = -1 if kind == "l" else 1
    probs = probs - np.where(np.sign(y) == -toward, moved, 0.0) + np.where(np.sign(y) == toward, moved, 0.0)
    return Pmf(y, probs)


def enumerate_step_law(p: float, epsilon: float, kind: str, radius: int = 60) -> Tuple[Pmf, float]:
    """
    穷举 ω 窗口与 θ，逐个交给前向步规则 explicit_step，按概率累加位移律

    一步只看行 t+1 每侧第一个开放格点，所以窗口按 (左侧首个开放距离 a, 右侧首个开放距离 b)
    分成互不相交的类，每类用最小代表行（只有 a、b 处开放）求位移，
    概率 q·p q^{a-1}·p q^{b-1}；某侧半径内全关闭时该侧概率为 q^R。
    本列开放单独成类（质量 p）。两侧半径内都关闭的类去向不定，计入剩余质量 q^{2R+1}。

    Returns:
        (pmf, residual)
    """
    _check_p(p)
    if kind not in ("l", "r"):
        raise ValueError(f"kind 只能是 'l' 或 'r'，收到 {kind!r}")
    if radius < 1:
        raise ValueError(f"radius 必须 >= 1，收到 {radius}")
    q = 1.0 - p
    width = 2 * radius + 1

    first = np.arange(1, radius + 2)                    # radius+1 表示该侧半径内全关闭
    side_prob = np.where(first <= radius, p * q ** (first - 1), q ** radius)
    a, b = (g.ravel() for g in np.meshgrid(first, first, indexing="ij"))
    keep = (a <= radius) | (b <= radius)
    a, b = a[keep], b[keep]
    weight = q * side_prob[a - 1] * side_prob[b - 1]

    rows = np.zeros((a.size + 1, width), dtype=bool)
    idx = np.arange(a.size)
    rows[idx[a <= radius], radius - a[a <= radius]] = True
    rows[idx[b <= radius], radius + b[b <= radius]] = True
    rows[-1, radius] = True
    weight = np.append(weight, p)

    probs = np.zeros(width)
    for theta, w_theta in ((0, epsilon), (-1, (1.0 - epsilon) / 2.0), (1, (1.0 - epsilon) / 2.0)):
        if w_theta == 0.0:
            continue
        inc, _ = explicit_step(rows, np.int8(theta), kind)
        np.add.at(probs, inc + radius, weight * w_theta)
    return Pmf(np.arange(-radius, radius + 1), probs), q ** width


# ---------------------------------------------------------
# 理论常数
# ---------------------------------------------------------

@dataclass(frozen=True)
class TheoryConstants:
    p: float
    b: float
    n: int
    epsilon: float
    b_p: float              # 极限漂移 b(1-p)/(2-p)²
    lambda_p2: float        # 单步增量方差（核求和）
    tie_prob: float         # p(1-p)/(2-p)
    branch_prob: float      # tie_prob·ε

    @classmethod
    def compute(cls, p: float, b: float, n: int, epsilon: Optional[float] = None) -> "TheoryConstants":
        _check_p(p)
        q = 1.0 - p
        eps = b / n if epsilon is None else epsilon
        tie = p * q / (2.0 - p)
        return cls(p=p, b=b, n=n, epsilon=eps,
                   b_p=b * q / (2.0 - p) ** 2,
                   lambda_p2=lambda_p2(p),
                   tie_prob=tie,
                   branch_prob=tie * eps)

    @property
    def step_drift(self) -> float:
        """r-路径每步平均位移 ε q/(2-p)²（l-路径取负）"""
        q = 1.0 - self.p
        return self.epsilon * q / (2.0 - self.p) ** 2


@dataclass(frozen=True)
class ModelParams:
    """
    一次实验的模型参数

    n 是扩散尺度；epsilon 为 None 时取 b/n^α，否则直接使用给定的 ε。
    """
    p: float = 0.5
    b: float = 1.0
    n: int = 50
    epsilon: Optional[float] = None
    alpha: float = 1.0
    seed: int = 1

    def __post_init__(self):
        _check_p(self.p)
        if self.b < 0:
            raise ValueError(f"b 必须 >= 0，收到 {self.b}")
        if self.n < 1:
            raise ValueError(f"n 必须 >= 1，收到 {self.n}")
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError(f"ε = {self.eps} 不在 [0, 1] 内")

    @property
    def eps(self) -> float:
        if self.epsilon is not None:
            return self.epsilon
        return self.b / self.n ** self.alpha

    def env(self, seed: Optional[int] = None) -> EnvParams:
        return EnvParams(p=self.p, epsilon=self.eps, seed=self.seed if seed is None else seed)

    def theory(self) -> TheoryConstants:
        return TheoryConstants.compute(self.p, self.b, self.n, self.eps)

    def snapshot(self) -> dict:
        return {"p": self.p, "b": self.b, "n": self.n, "epsilon": self.eps, "alpha": self.alpha}


# ---------------------------------------------------------
# 左右 Brownian 对
# ---------------------------------------------------------

@dataclass(frozen=True)
class LRPairState:
    L: float
    R: float
    T_clock: float   # 分开时累计的时间
    S_clock: float   # 粘在一起时累计的时间
    met: bool


@dataclass
class LRPairTrajectory:
    """记录点上的 (L, R) 与时钟；行对应记录时刻，列对应副本"""
    steps: np.ndarray            # 记录时刻对应的步数
    L: np.ndarray
    R: np.ndarray
    apart_steps: np.ndarray
    together_steps: np.ndarray
    met: np.ndarray
    meet_time: np.ndarray        # 首次相遇时刻，从未相遇为 nan
    dt: float

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.dt

    @property
    def gap(self) -> np.ndarray:
        return self.R - self.L

    @property
    def T_clock(self) -> np.ndarray:
        return self.apart_steps * self.dt

    @property
    def S_clock(self) -> np.ndarray:
        return self.together_steps * self.dt

    def state(self, index: int, replica: int = 0) -> LRPairState:
        return LRPairState(L=float(self.L[index, replica]), R=float(self.R[index, replica]),
                           T_clock=float(self.T_clock[index, replica]),
                           S_clock=float(self.S_clock[index, replica]),
                           met=bool(self.met[index, replica]))


def simulate_lr_pair(start_L: float, start_R: float, lam: float, b_p: float, dt: float, T: float,
                     seed: int, replicas: int = 1, meet_threshold: Optional[float] = None,
                     checkpoints: Optional[Sequence[float]] = None) -> LRPairTrajectory:
    """
    左右 Brownian 对的 Euler 格式

    分开时 L、R 用独立噪声，漂移分别为 -b_p、+b_p；首次相遇之后距离在阈值内时
    共用同一噪声，漂移仍为 ∓b_p；首次相遇后任何 L > R 的步都夹回中点。
    T_clock 与 S_clock 以整数步计数，两者之和恒等于已走步数。

    Args:
        lam: 扩散系数 λ（单位时间标准差）
        meet_threshold: 相遇阈值，默认 √dt·λ/10
        checkpoints: 需要记录的时刻；None 表示记录每一步
    """
    if dt <= 0:
        raise InvalidStep(f"dt 必须 > 0，收到 {dt}")
    if T <= dt:
        raise ValueError(f"T 必须大于 dt，收到 T={T}, dt={dt}")

    steps = int(round(T / dt))
    thr = math.sqrt(dt) * lam / 10.0 if meet_threshold is None else meet_threshold
    if checkpoints is None:
        record = np.arange(steps + 1)
    else:
        record = np.unique(np.concatenate([[0], np.rint(np.asarray(checkpoints) / dt)]).astype(np.int64))
        record = record[record <= steps]
    rows = {int(k): i for i, k in enumerate(record)}

    rng = np.random.default_rng(seed)
    L = np.full(replicas, float(start_L))
    R = np.full(replicas, float(start_R))
    met = np.abs(R - L) <= thr
    meet_time = np.where(met, 0.0, np.nan)
    apart = np.zeros(replicas, dtype=np.int64)
    together_n = np.zeros(replicas, dtype=np.int64)

    shape = (record.size, replicas)
    out_L, out_R = np.empty(shape), np.empty(shape)
    out_a = np.empty(shape, dtype=np.int64)
    out_s = np.empty(shape, dtype=np.int64)
    out_m = np.empty(shape, dtype=bool)

    def _save(i):
        out_L[i], out_R[i], out_a[i], out_s[i], out_m[i] = L, R, apart, together_n, met

    _save(0)
    sd = lam * math.sqrt(dt)
    drift = b_p * dt
    for k in range(1, steps + 1):
        z = rng.standard_normal((2, replicas))
        prev_gap = R - L
        together = met & (np.abs(prev_gap) <= thr)
        L = L - drift + sd * z[0]
        R = R + drift + sd * np.where(together, z[0], z[1])
        together_n += together
        apart += ~together

        gap = R - L
        new_meet = ~met & ((np.abs(gap) <= thr) | (np.sign(gap) != np.sign(prev_gap)))
        meet_time[new_meet] = k * dt
        met |= new_meet

        crossed = met & (L > R)
        if crossed.any():
            mid = 0.5 * (L + R)
            L = np.where(crossed, mid, L)
            R = np.where(crossed, mid, R)
        if k in rows:
            _save(rows[k])

    return LRPairTrajectory(steps=record, L=out_L, R=out_R, apart_steps=out_a,
                            together_steps=out_s, met=out_m, meet_time=meet_time, dt=dt)


# ---------------------------------------------------------
# 合并 Brownian 运动
# ---------------------------------------------------------

def survival_probability(delta: float, t: float, lambda2: float) -> float:
    """距离 δ 的两条合并 Brownian 运动在时间 t 前不相遇的概率 2Φ(δ/√(2tλ²)) - 1"""
    if t <= 0:
        raise ValueError(f"t 必须 > 0，收到 {t}")
    if delta < 0:
        raise ValueError(f"delta 必须 >= 0，收到 {delta}")
    if lambda2 <= 0:
        raise ValueError(f"lambda2 必须 > 0，收到 {lambda2}")
    return float(2.0 * norm.cdf(delta / math.sqrt(2.0 * t * lambda2)) - 1.0)


def first_meeting_cdf(gap: float, t: float, lambda2: float) -> float:
    """
    两条独立、方差各为 λ² 的无漂移 Brownian 运动从距离 gap 出发，t 之前相遇的概率

    首次相遇时间服从尺度 gap²/(2λ²) 的 Lévy 律，与 1 - survival_probability 相同。
    """
    if t <= 0:
        raise ValueError(f"t 必须 > 0，收到 {t}")
    if gap < 0 or lambda2 <= 0:
        raise ValueError(f"需要 gap >= 0 且 lambda2 > 0，收到 gap={gap}, lambda2={lambda2}")
    if gap == 0:
        return 1.0
    return float(levy.cdf(t, scale=gap * gap / (2.0 * lambda2)))
