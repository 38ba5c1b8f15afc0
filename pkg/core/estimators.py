"""
Estimators: Monte Carlo 估计量与判定

每个函数都接收 ModelParams，按 (seed, stream, 副本编号) 派生环境种子，
分块并行模拟后与 reference 给出的理论目标比较，返回 ExperimentReport。

判定规则见 core.report.Target：等式目标用 max(3σ, 容差)，
上/下界目标要求单侧 95% 置信下成立，诊断性目标只报告不计入退出码。
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import ks_2samp, linregress

from core.dual import (DualityReport, Window, dual_advance, dual_coalescence_times_batch, dual_kernel,
                       dual_vertices_in_row, dual_walk, integer_return_times_batch, verify_duality)
from core.environment import Cell, default_r_max, nearest_open
from core.exceptions import InsufficientUncensored, InvariantViolation
from core.lattice_paths import (FirstPassage, Selector, advance, coalescence_times_batch,
                                count_branch_events, crossing_times_batch, walk)
from core.metrics import hausdorff, rescale
from core.parallel import replica_seeds, run_chunked
from core.reference import (ModelParams, Pmf, enumerate_step_law, first_meeting_cdf, kernel_lr, kernel_pv,
                            lambda_p2, lambda_p2_closed_form, simulate_lr_pair, survival_probability)
from core.report import SIGMA_BAND, ExperimentReport, Target

logger = logging.getLogger(__name__)

Z95 = 1.96

# 穷举校验半径：p=0.2 时剩余质量 0.8^121 ≈ 2e-12
ENUM_RADIUS = 60
ENUM_PS = (0.2, 0.5, 0.8)

# 各实验的种子流
STREAM_DRIFT = 1
STREAM_VARIANCE = 2
STREAM_BRANCH = 3
STREAM_KERNEL = 4
STREAM_DUAL_INT = 5
STREAM_DUAL_HALF = 6
STREAM_DUALITY = 7
STREAM_LONG_JUMP = 8
STREAM_OVERSHOOT = 9
STREAM_SURVIVAL = 10
STREAM_INT_RETURN = 11
STREAM_COAL = 100          # + k
STREAM_DUAL_COAL = 200     # + k
STREAM_LR = 300            # + 起点编号
STREAM_LR_REF = 400        # + 起点编号
STREAM_COLLAPSE = 10_000   # + n


# ---------------------------------------------------------
# 增量统计
# ---------------------------------------------------------

@dataclass
class IncrementStats:
    """整数增量的直方图（偏移 radius）、分叉次数与每个副本的最大跳跃"""
    radius: int
    counts: np.ndarray
    branches: int = 0
    max_jump: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @classmethod
    def empty(cls, radius: int, replicas: int = 0) -> "IncrementStats":
        return cls(radius, np.zeros(2 * radius + 1, dtype=np.int64),
                   max_jump=np.zeros(replicas, dtype=np.int64))

    def add(self, increments: np.ndarray) -> None:
        inc = np.asarray(increments, dtype=np.int64)
        if np.abs(inc).max(initial=0) > self.radius:
            raise InvariantViolation(f"单步增量超出半径 {self.radius}")
        self.counts += np.bincount((inc + self.radius).ravel(), minlength=self.counts.size)

    @property
    def values(self) -> np.ndarray:
        return np.arange(-self.radius, self.radius + 1)

    @property
    def count(self) -> int:
        return int(self.counts.sum())

    def moment(self, order: int, centre: float = 0.0) -> float:
        return float(np.dot((self.values - centre) ** order, self.counts)) / self.count

    @property
    def mean(self) -> float:
        return self.moment(1)

    @property
    def variance(self) -> float:
        return self.moment(2, self.mean)

    @property
    def mean_ci(self) -> float:
        return Z95 * math.sqrt(self.variance / self.count)

    @property
    def variance_ci(self) -> float:
        m4 = self.moment(4, self.mean)
        return Z95 * math.sqrt(max(m4 - self.variance ** 2, 0.0) / self.count)

    def pmf(self) -> Pmf:
        keep = self.counts > 0
        return Pmf(self.values[keep], self.counts[keep] / self.count)

    @classmethod
    def merge(cls, parts: Sequence["IncrementStats"]) -> "IncrementStats":
        return cls(parts[0].radius, np.sum([s.counts for s in parts], axis=0),
                   branches=sum(s.branches for s in parts),
                   max_jump=np.concatenate([s.max_jump for s in parts]))


def _stats_radius(p: float) -> int:
    # 对偶倍坐标增量至多 2R_max + 2
    return 2 * default_r_max(p) + 2


def walk_increments(seeds, p: float, epsilon: float, kind: str, steps: int) -> IncrementStats:
    """每个副本从 (0, 0) 出发走 steps 步同类路径，累计增量直方图"""
    seeds = np.asarray(seeds, dtype=np.uint64)
    stats = IncrementStats.empty(_stats_radius(p), seeds.size)
    x = np.zeros(seeds.size, dtype=np.int64)
    for k in range(steps):
        new_x, branch = advance(seeds, p, epsilon, x, k, kind)
        inc = new_x - x
        stats.add(inc)
        stats.branches += int(branch.sum())
        np.maximum(stats.max_jump, np.abs(inc), out=stats.max_jump)
        x = new_x
    return stats


def dual_increments(seeds, p: float, epsilon: float, kind: str, rows: int, parity: int) -> IncrementStats:
    """
    从倍坐标 parity（0 为整数位置，1 为半整数位置）在行 0, -1, ..., -(rows-1) 各走一步对偶，
    不同的行互相独立
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    stats = IncrementStats.empty(_stats_radius(p), seeds.size)
    t = -np.arange(rows, dtype=np.int64)
    new_x2, branch = dual_advance(seeds[:, None], p, epsilon, parity, t[None, :], kind)
    stats.add(new_x2 - parity)
    stats.branches = int(branch.sum())
    return stats


@dataclass
class GapRecord:
    """l-路径与 r-路径之差在记录时刻的值 (checkpoints, replicas)、最大值与是否相遇"""
    gaps: np.ndarray
    maximum: np.ndarray
    met: np.ndarray

    @classmethod
    def concat(cls, parts: Sequence["GapRecord"]) -> "GapRecord":
        return cls(np.concatenate([g.gaps for g in parts], axis=1),
                   np.concatenate([g.maximum for g in parts]),
                   np.concatenate([g.met for g in parts], axis=1))


def _lr_advance(seeds, p, epsilon, xl, xr, k):
    m = xl.size
    use_l = np.concatenate([np.ones(m, dtype=bool), np.zeros(m, dtype=bool)])
    moved, _ = advance(np.concatenate([seeds, seeds]), p, epsilon, np.concatenate([xl, xr]), k, use_l)
    return moved[:m], moved[m:]


def lr_gaps(seeds, p: float, epsilon: float, start_l: int, start_r: int,
            checkpoints: Sequence[int]) -> GapRecord:
    """l-路径从 (start_l, 0)、r-路径从 (start_r, 0) 出发，记录 R - L"""
    seeds = np.asarray(seeds, dtype=np.uint64)
    m = seeds.size
    xl = np.full(m, start_l, dtype=np.int64)
    xr = np.full(m, start_r, dtype=np.int64)
    marks = sorted(set(int(c) for c in checkpoints))
    rows = {c: i for i, c in enumerate(marks)}
    gaps = np.empty((len(marks), m), dtype=np.int64)
    met_at = np.empty((len(marks), m), dtype=bool)
    met = xr <= xl
    maximum = xr - xl

    if 0 in rows:
        gaps[rows[0]] = xr - xl
        met_at[rows[0]] = met
    for k in range(marks[-1]):
        xl, xr = _lr_advance(seeds, p, epsilon, xl, xr, k)
        gap = xr - xl
        met |= gap <= 0
        np.maximum(maximum, gap, out=maximum)
        if k + 1 in rows:
            gaps[rows[k + 1]] = gap
            met_at[rows[k + 1]] = met
    return GapRecord(gaps[[rows[int(c)] for c in checkpoints]], maximum,
                     met_at[[rows[int(c)] for c in checkpoints]])


def overshoots(seeds, p: float, epsilon: float, start_gap: int, lower: float,
               level: int, t_max: int) -> np.ndarray:
    """R - L 从 start_gap 出发，首次 >= level 时的超出量；先跌到 lower 以下或截尾的副本丢弃"""
    seeds = np.asarray(seeds, dtype=np.uint64)
    xl = np.zeros(seeds.size, dtype=np.int64)
    xr = np.full(seeds.size, start_gap, dtype=np.int64)
    active = np.arange(seeds.size)
    found = []
    for k in range(t_max):
        if not active.size:
            break
        xl_a, xr_a = _lr_advance(seeds[active], p, epsilon, xl[active], xr[active], k)
        xl[active], xr[active] = xl_a, xr_a
        gap = xr_a - xl_a
        up = gap >= level
        found.append(gap[up] - level)
        active = active[~up & (gap > lower)]
    return np.concatenate(found) if found else np.zeros(0, dtype=np.int64)


# ---------------------------------------------------------
# 通用工具
# ---------------------------------------------------------

def _mean_ci(values) -> tuple:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return float("nan"), float("nan")
    if values.size == 1:
        return float(values[0]), 0.0
    return float(values.mean()), Z95 * float(values.std(ddof=1)) / math.sqrt(values.size)


def _proportion_ci(p_hat: float, n: int) -> float:
    return Z95 * math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / n)


def _first_passage(func, params: ModelParams, replicas: int, stream: int, workers, **kwargs) -> FirstPassage:
    return FirstPassage.concat(run_chunked(func, replicas, params.seed, stream, workers, **kwargs))


def default_t_grid(t_max: int, points: int = 10) -> np.ndarray:
    """尾部拟合用的时间网格：[t_max/100, t_max] 上的对数等距整数"""
    lo = max(1.0, t_max / 100.0)
    return np.unique(np.rint(np.geomspace(lo, t_max, points)).astype(np.int64))


def _weighted_slope(x, y, var_y) -> tuple:
    """OLS 斜率及其 95% 半宽（y 的方差已知、互相独立）"""
    x = np.asarray(x, dtype=np.float64)
    weights = (x - x.mean()) / np.sum((x - x.mean()) ** 2)
    slope = float(np.dot(weights, y))
    return slope, Z95 * math.sqrt(float(np.dot(weights ** 2, var_y)))


# ---------------------------------------------------------
# 漂移、方差、分叉率
# ---------------------------------------------------------

def _walk_stats(params: ModelParams, kind: str, steps: int, replicas: int, stream: int,
                workers=None, epsilon: Optional[float] = None) -> IncrementStats:
    eps = params.eps if epsilon is None else epsilon
    logger.info(f"🚶 [{kind}] {replicas} 个副本 × {steps} 步, p={params.p}, ε={eps:.4g}")
    parts = run_chunked(walk_increments, replicas, params.seed, stream, workers,
                        p=params.p, epsilon=eps, kind=kind, steps=steps)
    return IncrementStats.merge(parts)


def estimate_drift(params: ModelParams, kind: str, steps: int, replicas: int,
                   workers=None) -> ExperimentReport:
    """每步平均位移 ×n，目标 l: -n·εq/(2-p)²，r: +n·εq/(2-p)²（ε = b/n 时即 ∓b_p）"""
    if kind not in ("l", "r"):
        raise ValueError(f"kind 只能是 'l' 或 'r'，收到 {kind!r}")
    stats = _walk_stats(params, kind, steps, replicas, STREAM_DRIFT, workers)
    sign = -1.0 if kind == "l" else 1.0
    target = sign * params.n * params.theory().step_drift
    return ExperimentReport.evaluate("estimate-drift", stats.mean * params.n, stats.mean_ci * params.n,
                                     Target.equal(target), stats.count, params.seed,
                                     params.snapshot(), kind=kind)


def estimate_variance(params: ModelParams, steps: int, replicas: int, kind: str = "l",
                      workers=None) -> ExperimentReport:
    """
    单步增量的样本方差

    目标是 l/r 单步核的方差，ε = 0 时就是 λ_p²；相对容差 1%。
    """
    stats = _walk_stats(params, kind, steps, replicas, STREAM_VARIANCE, workers)
    target = kernel_lr(params.p, params.eps, kind).variance
    return ExperimentReport.evaluate("estimate-variance", stats.variance, stats.variance_ci,
                                     Target.equal(target, 0.01 * target), stats.count, params.seed,
                                     params.snapshot(), kind=kind)


def estimate_branch_rate(params: ModelParams, steps: int, replicas: int,
                         workers=None) -> ExperimentReport:
    """路径经过的开放格点中分叉的比例，目标 ε·p(1-p)/(2-p)"""
    stats = _walk_stats(params, "l", steps, replicas, STREAM_BRANCH, workers)
    rate = stats.branches / stats.count
    return ExperimentReport.evaluate("estimate-branchrate", rate, _proportion_ci(rate, stats.count),
                                     Target.equal(params.theory().branch_prob), stats.count,
                                     params.seed, params.snapshot(), kind="l")


# ---------------------------------------------------------
# 单步核
# ---------------------------------------------------------

def kernel_experiment(params: ModelParams, replicas: int, steps: int, workers=None) -> List[ExperimentReport]:
    """
    - 穷举律与 P_v 闭式（ε=0，p ∈ {0.2, 0.5, 0.8} 及当前 p）、与 l/r 核（当前 ε）的 TV
    - λ_p² 求和与闭式之差
    - Monte Carlo 前向单步律与 P_v、对偶单步律与 dual_kernel 的 TV
    """
    reports = []
    base = params.snapshot()
    for p in sorted(set(ENUM_PS) | {params.p}):
        law, residual = enumerate_step_law(p, 0.0, "l", ENUM_RADIUS)
        reports.append(ExperimentReport.evaluate(
            "kernel-enumeration", law.tv(kernel_pv(p)), residual, Target.at_most(1e-9),
            law.support.size, params.seed, {**base, "p": p, "epsilon": 0.0}))

    for kind in ("l", "r"):
        law, residual = enumerate_step_law(params.p, params.eps, kind, ENUM_RADIUS)
        reports.append(ExperimentReport.evaluate(
            "kernel-enumeration-lr", law.tv(kernel_lr(params.p, params.eps, kind)), residual,
            Target.at_most(1e-9), law.support.size, params.seed, base, kind=kind))

    gap = abs(lambda_p2(params.p) - lambda_p2_closed_form(params.p))
    reports.append(ExperimentReport.evaluate("kernel-lambda", gap, 0.0, Target.at_most(1e-10),
                                             1, params.seed, base))

    forward = _walk_stats(params, "l", steps, replicas, STREAM_KERNEL, workers, epsilon=0.0)
    reports.append(ExperimentReport.evaluate(
        "kernel-mc-forward", forward.pmf().tv(kernel_pv(params.p)), 0.0, Target.at_most(0.005),
        forward.count, params.seed, {**base, "epsilon": 0.0}, kind="l"))

    for name, parity, stream in (("kernel-mc-dual-integer", 0, STREAM_DUAL_INT),
                                 ("kernel-mc-dual-half", 1, STREAM_DUAL_HALF)):
        stats = IncrementStats.merge(run_chunked(dual_increments, replicas, params.seed, stream, workers,
                                                 p=params.p, epsilon=params.eps, kind="l",
                                                 rows=steps, parity=parity))
        exact = dual_kernel(params.p, params.eps, at_integer=parity == 0, kind="l")
        reports.append(ExperimentReport.evaluate(name, stats.pmf().tv(exact), 0.0, Target.at_most(0.005),
                                                 stats.count, params.seed, base, kind="l"))
    return reports


def dual_mean_experiment(params: ModelParams, replicas: int, steps: int, workers=None) -> List[ExperimentReport]:
    """对偶 l-步的条件平均增量：整数位置 ε/2，半整数位置 0"""
    reports = []
    for parity, stream, target in ((0, STREAM_DUAL_INT, params.eps / 2.0), (1, STREAM_DUAL_HALF, 0.0)):
        stats = IncrementStats.merge(run_chunked(dual_increments, replicas, params.seed, stream, workers,
                                                 p=params.p, epsilon=params.eps, kind="l",
                                                 rows=steps, parity=parity))
        # 倍坐标增量换算成位置增量
        reports.append(ExperimentReport.evaluate(
            "dual-mean", stats.mean / 2.0, stats.mean_ci / 2.0, Target.equal(target),
            stats.count, params.seed, params.snapshot(), kind="l", delta=parity / 2.0))
    return reports


# ---------------------------------------------------------
# 对偶性
# ---------------------------------------------------------

def duality_experiment(params: ModelParams, windows: int = 10, size: int = 200) -> List[ExperimentReport]:
    """在 windows 个独立环境的 size×size 窗口上穷举检查对偶性"""
    total = DualityReport()
    for i, seed in enumerate(replica_seeds(params.seed, STREAM_DUALITY, windows)):
        rep = verify_duality(params.env(int(seed)), Window.square(size))
        logger.info(f"🪞 [verify-duality] 窗口 {i}: 交叉 {rep.crossings}, "
                    f"分叉 {rep.dnb_branches}/{rep.dual_branches}")
        total.crossings_l += rep.crossings_l
        total.crossings_r += rep.crossings_r
        total.dnb_branches += rep.dnb_branches
        total.dual_branches += rep.dual_branches

    base = params.snapshot()
    return [
        ExperimentReport.evaluate("duality-crossings-l", total.crossings_l, 0.0, Target.equal(0.0),
                                  windows, params.seed, base, kind="l", k=size),
        ExperimentReport.evaluate("duality-crossings-r", total.crossings_r, 0.0, Target.equal(0.0),
                                  windows, params.seed, base, kind="r", k=size),
        ExperimentReport.evaluate("duality-branch-mismatch", total.dnb_branches - total.dual_branches, 0.0,
                                  Target.equal(0.0), total.dnb_branches, params.seed, base, k=size),
    ]


# ---------------------------------------------------------
# 合并时间尾部
# ---------------------------------------------------------

def _check_censoring(fp: FirstPassage, label: str) -> None:
    if fp.censored_fraction > 0.5:
        raise InsufficientUncensored(f"{label}: t_max={fp.t_max} 时仍有 {fp.censored_fraction:.1%} 的样本截尾")


def _tail_reports(name: str, curves: Dict[int, FirstPassage], grid: np.ndarray,
                  params: ModelParams, kind: str) -> List[ExperimentReport]:
    """生存曲线、对数斜率、k 线性比值以及拟合常数 Ĉ 的控制检查"""
    reports = []
    base = params.snapshot()
    surv, se = {}, {}
    for k, fp in curves.items():
        surv[k] = fp.survival(grid)
        se[k] = np.sqrt(surv[k] * (1.0 - surv[k]) / len(fp))
        for t, s, e in zip(grid, surv[k], se[k]):
            reports.append(ExperimentReport.evaluate(f"{name}-survival", s, Z95 * e, None, len(fp),
                                                     params.seed, base, kind=kind, k=k, t=float(t)))
        positive = surv[k] > 0
        if positive.sum() >= 2:
            fit = linregress(np.log(grid[positive]), np.log(surv[k][positive]))
            slope, ci = fit.slope, Z95 * fit.stderr
        else:
            logger.warning(f"⚠️ [{name}] k={k}: 正的生存概率不足两个点，无法拟合斜率")
            slope, ci = float("nan"), float("nan")
        reports.append(ExperimentReport.evaluate(f"{name}-slope", slope, ci, Target.between(-0.6, -0.4),
                                                 len(fp), params.seed, base, kind=kind, k=k))

    ks = sorted(curves)
    k0 = ks[0]
    last = -1
    for k in ks[1:]:
        s0, sk = surv[k0][last], surv[k][last]
        if s0 > 0 and sk > 0:
            ratio = sk / s0
            ci = Z95 * ratio * math.sqrt((se[k][last] / sk) ** 2 + (se[k0][last] / s0) ** 2)
        else:
            ratio, ci = float("nan"), float("nan")
        expected = k / k0
        reports.append(ExperimentReport.evaluate(f"{name}-ratio", ratio, ci, Target.equal(expected, 0.3 * expected),
                                                 len(curves[k]), params.seed, base, kind=kind, k=k,
                                                 t=float(grid[last])))

    # Ĉ：S ≈ Ĉ·k/√t 的过原点最小二乘；报告最大相对超出量
    x = np.concatenate([k / np.sqrt(grid) for k in ks])
    y = np.concatenate([surv[k] for k in ks])
    c_hat = float(np.dot(x, y) / np.dot(x, x))
    excess = (y - c_hat * x) / (c_hat * x) if c_hat > 0 else np.full_like(y, np.nan)
    logger.info(f"📈 [{name}] 拟合常数 Ĉ = {c_hat:.4g}")
    reports.append(ExperimentReport.evaluate(f"{name}-domination", float(np.max(excess)), 0.0,
                                             Target.at_most(0.3), sum(len(f) for f in curves.values()),
                                             params.seed, base, kind=kind))
    return reports


def coalescence_tail_experiment(params: ModelParams, k_list: Sequence[int] = (1, 2, 4),
                                t_grid: Optional[Sequence[int]] = None, replicas: int = 10_000,
                                t_max: int = 10_000, workers=None) -> List[ExperimentReport]:
    """
    前向 l-路径合并时间 τ_k 的尾部：P(τ_k > t) ≤ C₀k/√t

    同时给出交叉时间推论 P(τ^c_1 > t) ≤ P(τ_1 > t)。
    """
    grid = default_t_grid(t_max) if t_grid is None else np.asarray(sorted(t_grid), dtype=np.int64)
    curves = {}
    for k in k_list:
        logger.info(f"🔍 [coal-tail] k={k}: {replicas} 个副本, t_max={t_max}")
        fp = _first_passage(coalescence_times_batch, params, replicas, STREAM_COAL + k, workers,
                            p=params.p, epsilon=params.eps, gap=k, kind="l", t_max=t_max)
        _check_censoring(fp, f"coal-tail k={k}")
        curves[k] = fp
    reports = _tail_reports("coal-tail", curves, grid, params, "l")
    reports.extend(crossing_experiment(params, grid, replicas, t_max, workers, coalescence=curves.get(1)))
    return reports


def crossing_experiment(params: ModelParams, t_grid: Sequence[int], replicas: int, t_max: int,
                        workers=None, coalescence: Optional[FirstPassage] = None) -> List[ExperimentReport]:
    """
    P̂(τ^c_1 > t) ≤ P̂(τ_1 > t)

    两者使用同一批环境：r-路径不会在 l-路径左侧，所以 τ^c_1 ≤ τ_1 对每个副本成立。
    """
    grid = np.asarray(t_grid, dtype=np.int64)
    cross = _first_passage(crossing_times_batch, params, replicas, STREAM_COAL + 1, workers,
                           p=params.p, epsilon=params.eps, gap=1, t_max=t_max)
    if coalescence is None:
        coalescence = _first_passage(coalescence_times_batch, params, replicas, STREAM_COAL + 1, workers,
                                     p=params.p, epsilon=params.eps, gap=1, kind="l", t_max=t_max)
    s_cross = cross.survival(grid)
    s_coal = coalescence.survival(grid)
    diff = s_cross - s_coal
    i = int(np.argmax(diff))
    ci = Z95 * math.sqrt((s_cross[i] * (1 - s_cross[i]) + s_coal[i] * (1 - s_coal[i])) / replicas)
    return [ExperimentReport.evaluate("crossing-tail", float(diff[i]), ci,
                                      Target.at_most(0.0, tolerance=ci * SIGMA_BAND), replicas,
                                      params.seed, params.snapshot(), k=1, t=float(grid[i]))]


def dual_coalescence_tail_experiment(params: ModelParams, k_list: Sequence[int] = (1, 2, 4),
                                     t_grid: Optional[Sequence[int]] = None, replicas: int = 10_000,
                                     t_max: int = 10_000, return_steps: int = 30,
                                     workers=None) -> List[ExperimentReport]:
    """对偶 l-路径的合并尾部，以及同时回到整数位置的几何尾部界 (1 - p⁴q²)^m"""
    grid = default_t_grid(t_max) if t_grid is None else np.asarray(sorted(t_grid), dtype=np.int64)
    curves = {}
    for k in k_list:
        logger.info(f"🔍 [dual-coal-tail] k={k}: {replicas} 个副本, t_max={t_max}")
        fp = _first_passage(dual_coalescence_times_batch, params, replicas, STREAM_DUAL_COAL + k, workers,
                            p=params.p, epsilon=params.eps, gap=k, kind="l", t_max=t_max)
        _check_censoring(fp, f"dual-coal-tail k={k}")
        curves[k] = fp
    reports = _tail_reports("dual-coal-tail", curves, grid, params, "l")

    fp = _first_passage(integer_return_times_batch, params, replicas, STREAM_INT_RETURN, workers,
                        p=params.p, epsilon=params.eps, gap=1, kind="l", t_max=return_steps)
    q = 1.0 - params.p
    m = np.arange(1, return_steps + 1)
    surv = fp.survival(m)
    excess = surv - (1.0 - params.p ** 4 * q ** 2) ** m
    i = int(np.argmax(excess))
    reports.append(ExperimentReport.evaluate("dual-integer-return", float(excess[i]),
                                             _proportion_ci(surv[i], replicas), Target.at_most(0.0),
                                             replicas, params.seed, params.snapshot(), kind="l",
                                             k=1, t=float(m[i])))
    return reports


# ---------------------------------------------------------
# 坍缩区间、存活概率、LR 对、超出量、长跳跃
# ---------------------------------------------------------

def collapse_experiment(params: ModelParams, T: float = 1.0, n_list: Sequence[int] = (50, 100),
                        replicas: int = 10_000, alpha: Optional[float] = None, gamma: float = 0.5,
                        slack: float = 0.1, workers=None) -> List[ExperimentReport]:
    """
    α > 1 时同一点出发的 l/r 路径之差 S 在 Tn² 步的均值 2b_pTn^{2-α}

    ε 按 b/n^α 随 n 变化。另外报告 log 均值对 log n 的斜率（目标 2-α）
    以及 Doob 不等式 P(max S ≥ n^γ) ≤ E S/n^γ 的检查。
    """
    alpha = params.alpha if alpha is None else alpha
    if alpha <= 1:
        raise ValueError(f"collapse 需要 alpha > 1，收到 {alpha}")
    reports, log_n, log_mean, log_var = [], [], [], []

    for n in n_list:
        mp = replace(params, n=int(n), alpha=alpha, epsilon=None)
        steps = int(round(T * n * n))
        logger.info(f"🔍 [collapse] n={n}: ε={mp.eps:.3g}, {steps} 步, {replicas} 个副本")
        rec = GapRecord.concat(run_chunked(lr_gaps, replicas, params.seed, STREAM_COLLAPSE + int(n), workers,
                                           p=mp.p, epsilon=mp.eps, start_l=0, start_r=0, checkpoints=(steps,)))
        gaps = rec.gaps[-1]
        if (gaps < 0).any():
            raise InvariantViolation("同一点出发的 r-路径跑到了 l-路径左侧")
        mean, ci = _mean_ci(gaps)
        target = 2.0 * steps * mp.theory().step_drift
        reports.append(ExperimentReport.evaluate("collapse-mean", mean, ci, Target.equal(target, 0.1 * target),
                                                 replicas, params.seed, mp.snapshot(), t=T))

        level = n ** gamma
        hit = float(np.mean(rec.maximum >= level))
        reports.append(ExperimentReport.evaluate("collapse-doob", hit, _proportion_ci(hit, replicas),
                                                 Target.at_most(target / level * (1.0 + slack)),
                                                 replicas, params.seed, mp.snapshot(), t=T))
        if mean > 0:
            log_n.append(math.log(n))
            log_mean.append(math.log(mean))
            log_var.append((ci / Z95 / mean) ** 2)

    if len(log_n) >= 2:
        slope, ci = _weighted_slope(log_n, log_mean, log_var)
        reports.append(ExperimentReport.evaluate("collapse-slope", slope, ci, Target.equal(2.0 - alpha, 0.15),
                                                 replicas, params.seed, {**params.snapshot(), "alpha": alpha},
                                                 t=T))
    else:
        logger.warning("⚠️ [collapse] 正均值的 n 少于两个，跳过斜率检查")
    return reports


def survival_vs_formula(params: ModelParams, delta: float = 0.5, t: float = 1.0, n: int = 100,
                        replicas: int = 10_000, workers=None) -> ExperimentReport:
    """从 (0,0) 与 (⌊δn⌋,0) 出发的两条 r-路径在 tn² 步内未相遇的比例，对比 2Φ(δ/√(2tλ_p²)) - 1"""
    mp = replace(params, n=int(n))
    gap = int(math.floor(delta * n))
    steps = int(math.floor(t * n * n))
    logger.info(f"🔍 [survival] δ={delta}, t={t}, n={n}: 间距 {gap}, {steps} 步")
    fp = _first_passage(coalescence_times_batch, mp, replicas, STREAM_SURVIVAL, workers,
                        p=mp.p, epsilon=mp.eps, gap=gap, kind="r", t_max=steps)
    alive = fp.censored_fraction
    target = survival_probability(delta, t, lambda_p2(mp.p))
    return ExperimentReport.evaluate("survival", alive, _proportion_ci(alive, replicas),
                                     Target.equal(target, 0.03), replicas, params.seed, mp.snapshot(),
                                     kind="r", t=t, delta=delta)


def lr_pair_comparison(params: ModelParams, n: int = 100, start_offsets: Sequence[float] = (0.0,),
                       times: Sequence[float] = (1.0,), replicas: int = 10_000, dt: float = 1e-3,
                       workers=None) -> List[ExperimentReport]:
    """
    DNB 的 (R - L)/n 与左右 Brownian 对参照模拟的 KS 距离（诊断）

    参照模拟的扩散系数取 λ_p²，漂移取 n·εq/(2-p)²；起点分开时另外报告
    t 之前相遇的比例与无漂移 Lévy 律的对比。
    """
    mp = replace(params, n=int(n))
    theory = mp.theory()
    drift = n * theory.step_drift
    lam = math.sqrt(theory.lambda_p2)
    checkpoints = [int(round(t * n * n)) for t in times]
    reports = []

    for idx, offset in enumerate(start_offsets):
        start_r = int(math.floor(offset * n))
        logger.info(f"🔍 [lr-compare] 起点间距 {start_r}, 记录时刻 {list(times)}")
        rec = GapRecord.concat(run_chunked(lr_gaps, replicas, params.seed, STREAM_LR + idx, workers,
                                           p=mp.p, epsilon=mp.eps, start_l=0, start_r=start_r,
                                           checkpoints=checkpoints))
        T = max(times)
        ref = None
        if T > dt:
            ref_seed = int(replica_seeds(params.seed, STREAM_LR_REF + idx, 1)[0])
            ref = simulate_lr_pair(0.0, start_r / n, lam, drift, dt, T, ref_seed, replicas, checkpoints=times)

        for j, t in enumerate(times):
            dnb = rec.gaps[j] / n
            if ref is None or t == 0:
                ks = 0.0 if np.all(dnb == start_r / n) else 1.0
            else:
                row = int(np.searchsorted(ref.steps, int(round(t / dt))))
                ks = float(ks_2samp(dnb, ref.gap[row]).statistic)
            reports.append(ExperimentReport.evaluate("lr-compare", ks, 0.0, Target.at_most(0.05, diagnostic=True),
                                                     replicas, params.seed, mp.snapshot(), t=t, delta=offset))
            if start_r > 0 and t > 0:
                met = float(np.mean(rec.met[j]))
                reports.append(ExperimentReport.evaluate(
                    "lr-compare-meeting", met, _proportion_ci(met, replicas),
                    Target.equal(first_meeting_cdf(start_r / n, t, theory.lambda_p2), diagnostic=True),
                    replicas, params.seed, mp.snapshot(), t=t, delta=offset))
    return reports


def overshoot_experiment(params: ModelParams, n: Optional[int] = None, replicas: int = 10_000,
                         t_max: int = 10_000, workers=None) -> List[ExperimentReport]:
    """
    R - L 从 (n^{3/4}, n) 的中点出发，首次越过 n 时的超出量

    目标 E[ξ₊] ≤ 5/p；另以跳跃律给出的 2/p·1.25 作为经验合理性检查。
    """
    n = params.n if n is None else int(n)
    mp = replace(params, n=n)
    lower = n ** 0.75
    start_gap = int(round((lower + n) / 2.0))
    logger.info(f"🔍 [overshoot] n={n}: 起点间距 {start_gap}, 下界 {lower:.1f}")
    parts = run_chunked(overshoots, replicas, params.seed, STREAM_OVERSHOOT, workers,
                        p=mp.p, epsilon=mp.eps, start_gap=start_gap, lower=lower, level=n, t_max=t_max)
    values = np.concatenate(parts)
    if (values < 0).any():
        raise InvariantViolation("超出量出现负值")
    if values.size == 0:
        logger.warning(f"⚠️ [overshoot] n={n}: 没有副本向上越过水平 n")
    mean, ci = _mean_ci(values)
    return [
        ExperimentReport.evaluate("overshoot", mean, ci, Target.at_most(5.0 / mp.p), values.size,
                                  params.seed, mp.snapshot()),
        ExperimentReport.evaluate("overshoot-jump-sanity", mean, ci, Target.at_most(2.0 / mp.p * 1.25),
                                  values.size, params.seed, mp.snapshot()),
    ]


def long_jump_experiment(params: ModelParams, s: float = 1.0, g: Optional[int] = None,
                         replicas: int = 10_000, workers=None) -> ExperimentReport:
    """sn² 步内出现长度 > g 的跳跃的概率 ≤ 2sn²e^{-c(g-1)}，c = -log(1-p)"""
    n = params.n
    c = -math.log(1.0 - params.p)
    horizon = s * n * n
    if g is None:
        g = 1 + int(math.ceil(math.log(4.0 * horizon) / c))
    stats = _walk_stats(params, "l", int(math.ceil(horizon)), replicas, STREAM_LONG_JUMP, workers)
    hit = float(np.mean(stats.max_jump > g))
    bound = 2.0 * horizon * math.exp(-c * (g - 1))
    return ExperimentReport.evaluate("long-jumps", hit, _proportion_ci(hit, replicas), Target.at_most(bound),
                                     replicas, params.seed, params.snapshot(), kind="l", k=g, t=s)


# ---------------------------------------------------------
# 单条路径
# ---------------------------------------------------------

def simulate_path_reports(params: ModelParams, steps: Optional[int] = None) -> List[ExperimentReport]:
    """原点附近开放格点出发的 l/r 路径：终点、分叉数、两者的 Hausdorff 距离，以及一条对偶 l-路径"""
    n = params.n
    steps = n * n if steps is None else steps
    env = params.env()
    start = nearest_open(env, Cell(0, -1), "either")
    theory = params.theory()
    base = params.snapshot()
    reports, scaled = [], {}

    for kind, selector in (("l", Selector.always_left()), ("r", Selector.always_right())):
        path = walk(env, start, selector, steps)
        scaled[kind] = rescale(path, n)
        branches = count_branch_events(env, path)
        logger.info(f"🚶 [simulate-path] {kind}-路径终点 {path.end}, 分叉 {branches} 次")
        reports.append(ExperimentReport.evaluate("simulate-path", path.end.x / n, 0.0, None, steps + 1,
                                                 params.seed, base, kind=kind, t=steps / n ** 2))
        reports.append(ExperimentReport.evaluate("simulate-path-branches", branches, 0.0,
                                                 Target.equal(theory.branch_prob * (steps + 1), diagnostic=True),
                                                 steps + 1, params.seed, base, kind=kind))

    reports.append(ExperimentReport.evaluate("simulate-path-hausdorff", hausdorff([scaled["l"]], [scaled["r"]]),
                                             0.0, None, 2, params.seed, base, t=steps / n ** 2))

    top = start.t + steps
    vertices = dual_vertices_in_row(env, top, -n, n)
    if vertices:
        z_hat = min(vertices, key=lambda v: abs(v.x2))
        dual = dual_walk(env, z_hat, "l", steps)
        logger.info(f"🪞 [simulate-path] 对偶 l-路径 {z_hat} -> {dual.end}")
        reports.append(ExperimentReport.evaluate("simulate-path-dual", rescale(dual, n).values[-1], 0.0, None,
                                                 steps + 1, params.seed, base, kind="l", t=steps / n ** 2))
    return reports
