"""
Metrics: 扩散尺度变换与紧化路径空间度量

- rescale: 格点路径 (x, t) -> (x/n, t/n²)，相邻点之间线性插值
- point_metric: 紧化平面上的 ρ
- path_metric: 路径度量 d，起点之前按起点值延拓，终点之后按终点值延拓
- hausdorff: 有限路径集合之间的 Hausdorff 距离

path_metric 的上确界用分支定界计算：每个区间用一阶 (Lipschitz) 与二阶曲率上界
估计区间内可能的最大值，不可能超过当前最大值 + tol 的区间直接丢弃，
其余区间二分。返回值 v 满足 sup - tol <= v <= sup。
"""

import math
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from core.dual import DualPath
from core.exceptions import EmptyPath, EmptySet
from core.lattice_paths import LatticePath

DEFAULT_TOL = 1e-9

# sup |tanh''| = 4/(3√3)
_TANH2_MAX = 4.0 / (3.0 * math.sqrt(3.0))

Point = Tuple[float, float]


@dataclass
class RescaledPath:
    """[sigma, T_end] 上的分段线性路径，knots 严格递增"""
    times: np.ndarray
    values: np.ndarray
    backward: bool = False     # 由对偶路径在反射时间下得到

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.times.size == 0:
            raise EmptyPath("路径没有任何节点")
        if self.times.shape != self.values.shape:
            raise ValueError("times 与 values 长度不一致")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("节点时间必须严格递增")

    @property
    def sigma(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def value_at(self, t):
        """任意实数时刻的取值；定义域之外取端点值"""
        return np.interp(t, self.times, self.values)

    def slope_on(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """区间 [a, b] 上的斜率（要求区间不跨越节点）"""
        return (self.value_at(b) - self.value_at(a)) / (b - a)


def rescale(path: Union[LatticePath, DualPath], n: int) -> RescaledPath:
    """
    扩散尺度变换

    对偶路径在反射时间下变换：时间取 -t/n²，位置取 x2/(2n)，
    这样节点时间仍然递增，可以直接使用同一个度量。
    """
    if n < 1:
        raise ValueError(f"n 必须 >= 1，收到 {n}")
    if len(path.positions) == 0:
        raise EmptyPath("路径没有任何位置")
    scale2 = float(n) * n
    if isinstance(path, DualPath):
        return RescaledPath(times=-path.times / scale2,
                            values=np.asarray(path.positions) / (2.0 * n), backward=True)
    return RescaledPath(times=path.times / scale2, values=np.asarray(path.positions) / float(n))


def _space(x: float, t: float) -> float:
    if math.isinf(t):
        return 0.0
    return math.tanh(x) / (1.0 + abs(t))


def point_metric(a: Point, b: Point) -> float:
    """ρ(a, b) = |tanh t₁ - tanh t₂| ∨ |tanh(x₁)/(1+|t₁|) - tanh(x₂)/(1+|t₂|)|，允许 ±∞"""
    (x1, t1), (x2, t2) = a, b
    return max(abs(math.tanh(t1) - math.tanh(t2)), abs(_space(x1, t1) - _space(x2, t2)))


def _gap(p1: RescaledPath, p2: RescaledPath, t: np.ndarray) -> np.ndarray:
    return np.abs(np.tanh(p1.value_at(t)) - np.tanh(p2.value_at(t))) / (1.0 + np.abs(t))


def path_metric(p1: RescaledPath, p2: RescaledPath, tol: float = DEFAULT_TOL) -> float:
    """
    d(π₁, π₂) = |tanh σ₁ - tanh σ₂| ∨ sup_{t >= σ₁∧σ₂} |tanh π₁(t∨σ₁) - tanh π₂(t∨σ₂)| / (1+|t|)

    最后一个节点之后分子为常数，t >= 0 时分母递增，所以只需在节点并集（加上 t=0）
    之间搜索。
    """
    start_term = abs(math.tanh(p1.sigma) - math.tanh(p2.sigma))
    lo = min(p1.sigma, p2.sigma)
    knots = np.union1d(p1.times, p2.times)
    if lo <= 0.0:
        knots = np.union1d(knots, [0.0])
    knots = knots[knots >= lo]

    vals = _gap(p1, p2, knots)
    best = max(start_term, float(vals.max()))
    if knots.size < 2:
        return best

    a, b = knots[:-1], knots[1:]
    fa, fb = vals[:-1], vals[1:]
    s = np.abs(p1.slope_on(a, b)) + np.abs(p2.slope_on(a, b))
    lip = s + 2.0
    curv = _TANH2_MAX * (np.abs(p1.slope_on(a, b)) ** 2 + np.abs(p2.slope_on(a, b)) ** 2) + 2.0 * s + 4.0

    while a.size:
        h = b - a
        first_order = 0.5 * (fa + fb) + 0.5 * lip * h
        second_order = np.maximum(fa, fb) + curv * h * h / 8.0
        keep = np.minimum(first_order, second_order) > best + tol
        if not keep.any():
            break
        a, b, fa, fb, lip, curv = a[keep], b[keep], fa[keep], fb[keep], lip[keep], curv[keep]
        mid = 0.5 * (a + b)
        fm = _gap(p1, p2, mid)
        best = max(best, float(fm.max()))
        a, b = np.concatenate([a, mid]), np.concatenate([mid, b])
        fa, fb = np.concatenate([fa, fm]), np.concatenate([fm, fb])
        lip, curv = np.concatenate([lip, lip]), np.concatenate([curv, curv])

    return best


def hausdorff(K1: Sequence[RescaledPath], K2: Sequence[RescaledPath],
              tol: float = DEFAULT_TOL) -> float:
    """d_H(K₁, K₂) = sup_{π₁∈K₁} inf_{π₂∈K₂} d ∨ sup_{π₂∈K₂} inf_{π₁∈K₁} d"""
    if len(K1) == 0 or len(K2) == 0:
        raise EmptySet("Hausdorff 距离需要两个非空集合")
    dist = np.array([[path_metric(a, b, tol) for b in K2] for a in K1])
    return float(max(dist.min(axis=1).max(), dist.min(axis=0).max()))
