"""
Dual: 逆时间对偶系统

对偶顶点是同一行相邻开放格点的中点，位置用倍坐标 x2 保存（偶数为整数位置，
奇数为半整数位置），所有相等判断都是精确整数比较。

- dual_step: 按定义计算 a^l / a^r 后给出 Γ̂^l / Γ̂^r（单个顶点）
- dual_advance: 等价的局部规则，批量推进大量对偶路径
- verify_duality: 在窗口内检查 l 对 l̂、r 对 r̂ 不交叉以及分叉一一对应
- dual_kernel: 对偶单步增量的精确分布

对偶分叉处左右与前向相反：Γ̂^l 走到 a 右侧的对偶邻点，Γ̂^r 走到左侧。
"""

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from core.environment import EnvParams, broadcast_cells, is_open, scan_distance, scan_distances, theta_values
from core.exceptions import NotDualVertex, RadiusExceeded
from core.lattice_paths import Censored, FirstPassage, FirstTime, advance, advance_lr, first_passage_batch
from core.reference import DEFAULT_TAIL, Pmf, tail_radius


@dataclass(frozen=True, order=True)
class DualVertex:
    x2: int   # 倍坐标：偶数 ⇔ 整数位置
    t: int

    @property
    def position(self) -> float:
        return self.x2 / 2.0

    @property
    def is_integer(self) -> bool:
        return self.x2 % 2 == 0


@dataclass
class DualPath:
    """从 start 出发向过去走的倍坐标序列，positions[k] 对应时间 start.t - k"""
    start: DualVertex
    positions: np.ndarray

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def times(self) -> np.ndarray:
        return self.start.t - np.arange(len(self.positions), dtype=np.int64)

    @property
    def end(self) -> DualVertex:
        return DualVertex(int(self.positions[-1]), self.start.t - len(self.positions) + 1)


def flanking_opens(params: EnvParams, z_hat: DualVertex) -> Tuple[int, int]:
    """从对偶顶点精确还原两侧相邻的开放格点 (a, b)，a + b = x2"""
    left_from = (z_hat.x2 - 1) // 2
    right_from = z_hat.x2 // 2 + 1
    a = left_from - scan_distance(params, left_from, z_hat.t, -1)
    b = right_from + scan_distance(params, right_from, z_hat.t, 1)
    centre_open = z_hat.is_integer and bool(is_open(params.seed, params.p, z_hat.x2 // 2, z_hat.t))
    if a + b != z_hat.x2 or centre_open:
        raise NotDualVertex(z_hat.x2, z_hat.t)
    return a, b


def dual_vertices_in_row(params: EnvParams, t: int, x_lo: float, x_hi: float) -> List[DualVertex]:
    """行 t 中位置落在 [x_lo, x_hi] 的全部对偶顶点（按位置排序）"""
    if not x_lo < x_hi:
        raise ValueError(f"需要 x_lo < x_hi，收到 {x_lo}, {x_hi}")
    lo, hi = math.floor(x_lo), math.ceil(x_hi)
    first = lo - scan_distance(params, lo, t, -1)
    last = hi + scan_distance(params, hi, t, 1)
    cols = np.arange(first, last + 1, dtype=np.int64)
    opens = cols[is_open(params.seed, params.p, cols, t)]
    x2 = opens[:-1] + opens[1:]
    keep = (x2 >= 2 * x_lo) & (x2 <= 2 * x_hi)
    return [DualVertex(int(v), t) for v in x2[keep]]


def _anchor(params: EnvParams, z_hat: DualVertex, which: str) -> int:
    """
    a^l = sup{k 开放 : 2Γ^l(k) < x2}，a^r = inf{k 开放 : 2Γ^r(k) > x2}（行 t-1）

    Γ^l、Γ^r 在开放格点上单调，所以从中点向外扫描时第一个满足条件的就是上/下确界。
    """
    s = z_hat.t - 1
    if which == "l":
        start = z_hat.x2 // 2
        cols = np.arange(start, start - params.r_max - 1, -1, dtype=np.int64)
    else:
        start = (z_hat.x2 + 1) // 2
        cols = np.arange(start, start + params.r_max + 1, dtype=np.int64)
    opens = cols[is_open(params.seed, params.p, cols, s)]
    if opens.size:
        g, _ = advance(params.seed, params.p, params.epsilon, opens, s, which, params.r_max)
        ok = 2 * g < z_hat.x2 if which == "l" else 2 * g > z_hat.x2
        if ok.any():
            return int(opens[ok.argmax()])
    raise RadiusExceeded(start, s, params.r_max)


def dual_step(params: EnvParams, z_hat: DualVertex, which: str) -> DualVertex:
    """
    Γ̂^which(ẑ)

    a^l ≠ a^r 时两种都走到 ((a^l + a^r)/2, t-1)；
    a^l = a^r = a 时为对偶分叉：l 走到 a 右侧对偶邻点，r 走到左侧对偶邻点。
    """
    if which not in ("l", "r"):
        raise ValueError(f"which 只能是 'l' 或 'r'，收到 {which!r}")
    flanking_opens(params, z_hat)
    s = z_hat.t - 1
    a_l = _anchor(params, z_hat, "l")
    a_r = _anchor(params, z_hat, "r")
    if a_l != a_r:
        return DualVertex(a_l + a_r, s)
    if which == "l":
        return DualVertex(2 * a_l + scan_distance(params, a_l, s, 1, include_self=False), s)
    return DualVertex(2 * a_l - scan_distance(params, a_l, s, -1, include_self=False), s)


def dual_advance(seed, p: float, epsilon: float, x2, t, which, r_max=None):
    """
    对偶一步的局部规则（批量）

    u = ⌊x2/2⌋，在行 t-1 中：
    - 半整数位置：走到 u 左侧（含 u）与 u+1 右侧（含 u+1）最近开放格点的中点
    - 整数位置且 u 关闭：走到 u 两侧最近开放格点的中点
    - 整数位置且 u 开放：θ=0 为对偶分叉（l 向右、r 向左），θ=-1 向右，θ=+1 向左

    Returns:
        (new_x2, branch)
    """
    shape, seeds, x2s, ts = broadcast_cells(seed, x2, t)
    seeds, x2s, ts = (a.reshape(-1) for a in (seeds, x2s, ts))
    s = ts - 1

    if isinstance(which, str) and which not in ("l", "r"):
        raise ValueError(f"which 只能是 'l' 或 'r'，收到 {which!r}")

    u = x2s // 2
    even = x2s % 2 == 0
    left_from = np.where(even, u - 1, u)
    left = left_from - scan_distances(seeds, p, left_from, s, -1, True, r_max)
    right = (u + 1) + scan_distances(seeds, p, u + 1, s, 1, True, r_max)

    if isinstance(which, str):
        use_l = np.full(x2s.shape, which == "l")
    else:
        use_l = np.broadcast_to(np.asarray(which, dtype=bool), shape).reshape(-1)

    centre_open = even & is_open(seeds, p, u, s)
    theta = theta_values(seeds, epsilon, u, s)
    up = u + right
    down = u + left
    jump = np.where(theta == 0, np.where(use_l, up, down), np.where(theta == -1, up, down))
    new_x2 = np.where(centre_open, jump, left + right)
    return new_x2.reshape(shape), (centre_open & (theta == 0)).reshape(shape)


def dual_walk(params: EnvParams, z_hat: DualVertex, which: str, steps: int) -> DualPath:
    if steps < 1:
        raise ValueError(f"steps 必须 >= 1，收到 {steps}")
    positions = np.empty(steps + 1, dtype=np.int64)
    positions[0] = z_hat.x2
    current = z_hat
    for k in range(steps):
        current = dual_step(params, current, which)
        positions[k + 1] = current.x2
    return DualPath(start=z_hat, positions=positions)


# ---------------------------------------------------------
# 对偶转移核
# ---------------------------------------------------------

def dual_kernel(p: float, epsilon: float, at_integer: bool, kind: str = "l",
                tail: float = DEFAULT_TAIL) -> Pmf:
    """
    对偶单步增量的分布，支撑为倍坐标增量 m = 2v

    非整数位置：P(m) = P(G₁ - G₂ = m) = p q^{|m|}/(2-p)
    整数位置 (l)：(1-p)P(G₁-G₂=m) + pε·P(G₁=m) + (p/2)(1-ε)·P(G₁=|m|)；r 把分叉项镜像到 -m
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p 必须在 (0, 1) 内，收到 {p}")
    if kind not in ("l", "r"):
        raise ValueError(f"kind 只能是 'l' 或 'r'，收到 {kind!r}")
    q = 1.0 - p
    # 三项之和的尾部不超过 3q^M
    radius = tail_radius(q, tail, exponent=1, coeff=3.0)
    m = np.arange(-radius, radius + 1)
    a = np.abs(m)
    diff = p * q ** a / (2.0 - p)
    if not at_integer:
        return Pmf(m, diff)

    geo_abs = np.where(a >= 1, p * q ** (a - 1), 0.0)
    branch_side = m >= 1 if kind == "l" else m <= -1
    probs = (1.0 - p) * diff + p * epsilon * np.where(branch_side, geo_abs, 0.0) \
        + 0.5 * p * (1.0 - epsilon) * geo_abs
    return Pmf(m, probs)


# ---------------------------------------------------------
# 对偶性校验
# ---------------------------------------------------------

@dataclass(frozen=True)
class Window:
    """时空窗口 [x_lo, x_hi] × [t_lo, t_hi]"""
    x_lo: int
    x_hi: int
    t_lo: int
    t_hi: int

    def __post_init__(self):
        if not (self.x_lo < self.x_hi and self.t_lo < self.t_hi):
            raise ValueError(f"窗口为空: {self}")

    @classmethod
    def square(cls, size: int, x0: int = 0, t0: int = 0) -> "Window":
        return cls(x0, x0 + size, t0, t0 + size)


@dataclass
class DualityReport:
    crossings_l: int = 0      # l-路径与对偶 l̂-路径的交叉数
    crossings_r: int = 0      # r-路径与对偶 r̂-路径的交叉数
    dnb_branches: int = 0
    dual_branches: int = 0

    @property
    def crossings(self) -> int:
        return self.crossings_l + self.crossings_r

    @property
    def consistent(self) -> bool:
        return self.crossings == 0 and self.dnb_branches == self.dual_branches


def _row_opens(params: EnvParams, row: int, lo: int, hi: int) -> np.ndarray:
    cols = np.arange(lo, hi + 1, dtype=np.int64)
    return cols[is_open(params.seed, params.p, cols, row)]


def _count_crossings(k, g, w2, z2) -> int:
    """前向边 k→g（行 s→s+1）与对偶边 ŵ→ẑ（行 s+1→s）相对次序翻转即为交叉"""
    below = 2 * k[:, None] > z2[None, :]
    above = 2 * g[:, None] > w2[None, :]
    return int(np.count_nonzero(below != above))


def verify_duality(params: EnvParams, window: Window) -> DualityReport:
    """
    穷举窗口内每一对相邻行 (s, s+1)：

    - 前向边：行 s 中开放格点的 Γ^l、Γ^r
    - 对偶边：行 s+1 中位置在窗口内的对偶顶点，按定义算 a^l、a^r 后得到 Γ̂^l、Γ̂^r
    - 统计 l 对 l̂、r 对 r̂ 的交叉，以及窗口内前向分叉与对偶分叉个数

    前向分叉 (k, s) 对应行 s+1 上位置 k 的对偶分叉，所以同一 x 范围内两者精确相等。
    """
    margin = int(math.ceil(30.0 / params.p))
    lo, hi = window.x_lo - margin, window.x_hi + margin
    report = DualityReport()

    for s in range(window.t_lo, window.t_hi):
        opens = _row_opens(params, s, lo, hi)
        upper = _row_opens(params, s + 1, lo, hi)
        if opens.size < 3 or upper.size < 2 or opens[0] > window.x_lo or opens[-1] < window.x_hi \
                or upper[0] > window.x_lo or upper[-1] < window.x_hi:
            raise RadiusExceeded(window.x_lo, s, margin)

        g_l, g_r, branch = advance_lr(params.seed, params.p, params.epsilon, opens, s, params.r_max)
        inside = (opens >= window.x_lo) & (opens <= window.x_hi)
        report.dnb_branches += int(np.count_nonzero(branch & inside))

        w2 = upper[:-1] + upper[1:]
        w2 = w2[(w2 >= 2 * window.x_lo) & (w2 <= 2 * window.x_hi)]
        if w2.size == 0:
            continue

        idx_l = np.searchsorted(2 * g_l, w2, side="left") - 1
        idx_r = np.searchsorted(2 * g_r, w2, side="right")
        if idx_l.min() < 1 or idx_r.max() > opens.size - 2:
            raise RadiusExceeded(window.x_lo, s, margin)
        a_l, a_r = opens[idx_l], opens[idx_r]
        dual_branch = a_l == a_r
        report.dual_branches += int(np.count_nonzero(dual_branch))

        z2_l = np.where(dual_branch, a_l + opens[np.minimum(idx_l + 1, opens.size - 1)], a_l + a_r)
        z2_r = np.where(dual_branch, a_l + opens[np.maximum(idx_l - 1, 0)], a_l + a_r)

        report.crossings_l += _count_crossings(opens, g_l, w2, z2_l)
        report.crossings_r += _count_crossings(opens, g_r, w2, z2_r)

    return report


# ---------------------------------------------------------
# 对偶首达时间
# ---------------------------------------------------------

def _dual_step_fn(p: float, epsilon: float, kind: str, r_max):
    def step(seeds, x2, k):
        new_x2, _ = dual_advance(seeds, p, epsilon, x2, -k, kind, r_max)
        return new_x2
    return step


def dual_coalescence_time(params: EnvParams, u_hat: DualVertex, v_hat: DualVertex,
                          kind: str, t_max: int) -> FirstTime:
    """两条同类对偶路径向过去第一次重合的步数；t_max 内未重合返回 Censored"""
    if kind not in ("l", "r"):
        raise ValueError(f"kind 只能是 'l' 或 'r'，收到 {kind!r}")
    if u_hat.t != v_hat.t:
        raise ValueError("两个对偶顶点必须在同一行")
    flanking_opens(params, u_hat)
    flanking_opens(params, v_hat)
    if u_hat.x2 == v_hat.x2:
        return 0

    x2 = np.array([u_hat.x2, v_hat.x2], dtype=np.int64)
    t = u_hat.t
    for k in range(1, t_max + 1):
        x2, _ = dual_advance(params.seed, params.p, params.epsilon, x2, t, kind, params.r_max)
        t -= 1
        if x2[0] == x2[1]:
            return k
    return Censored(t_max)


def dual_coalescence_times_batch(seeds, p: float, epsilon: float, gap: int, kind: str,
                                 t_max: int, r_max=None) -> FirstPassage:
    """每个副本从行 0 的倍坐标 1 与 1 + 2·gap 出发的两条对偶路径的合并时间"""
    return first_passage_batch(_dual_step_fn(p, epsilon, kind, r_max),
                               seeds, 1, 1 + 2 * gap, t_max, np.equal)


def integer_return_times_batch(seeds, p: float, epsilon: float, gap: int, kind: str,
                               t_max: int, r_max=None) -> FirstPassage:
    """两条从整数位置 0 与 gap 出发的对偶路径，此后第一次同时位于整数位置的步数"""
    step = _dual_step_fn(p, epsilon, kind, r_max)
    seeds = np.asarray(seeds, dtype=np.uint64)
    n = seeds.size
    # 起点本身都是整数位置，先走一步再开始判断
    first = step(np.concatenate([seeds, seeds]),
                 np.concatenate([np.zeros(n, dtype=np.int64), np.full(n, 2 * gap, dtype=np.int64)]), 0)
    fp = first_passage_batch(lambda s, x, k: step(s, x, k + 1), seeds, first[:n], first[n:],
                             t_max - 1, _both_integer)
    return FirstPassage(times=fp.times + 1, observed=fp.observed, t_max=t_max)


def _both_integer(a, b):
    return (a % 2 == 0) & (b % 2 == 0)
