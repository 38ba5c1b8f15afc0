"""
Lattice Paths: 前向 DNB 路径动力学

Γ^l / Γ^r 单步、选择器驱动的路径、合并时间与交叉时间，以及分叉事件计数。

一步 Γ 只读取下一行 (t+1) 的 ω 和当前格点的 θ，不读取当前格点自身的 ω。
因此批量引擎可以直接从固定列出发，路径的分布与从开放格点出发时相同；
对外的单条路径接口仍然要求起点开放。
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from core.environment import Cell, EnvParams, broadcast_cells, is_open, scan_distances, theta_values
from core.exceptions import InvariantViolation, NotOpen, SelectorExhausted

KINDS = ("l", "r")


def _check_kind(which: str) -> None:
    if which not in KINDS:
        raise ValueError(f"which 只能是 'l' 或 'r'，收到 {which!r}")


# ---------------------------------------------------------
# 向量化单步
# ---------------------------------------------------------

def step_geometry(seed, p: float, epsilon: float, x, t, r_max: Optional[int] = None):
    """
    计算从 (x, t) 出发一步所需的局部信息

    Returns:
        (dl, dr, theta)：行 t+1 中左右最近开放格点的距离（含本列，本列开放时均为 0）
        以及 θ(x, t)
    """
    shape, seeds, xs, ts = broadcast_cells(seed, x, t)
    # 展平处理，标量起点也按长度 1 的数组索引
    seeds, xs, ts = (a.reshape(-1) for a in (seeds, xs, ts))

    dl = np.zeros(xs.shape, dtype=np.int64)
    dr = np.zeros(xs.shape, dtype=np.int64)
    closed = ~is_open(seeds, p, xs, ts + 1)
    if closed.any():
        dl[closed] = scan_distances(seeds[closed], p, xs[closed], ts[closed] + 1, -1, False, r_max)
        dr[closed] = scan_distances(seeds[closed], p, xs[closed], ts[closed] + 1, 1, False, r_max)
    theta = theta_values(seeds, epsilon, xs, ts)
    return dl.reshape(shape), dr.reshape(shape), np.asarray(theta).reshape(shape)


def _use_left(which, shape) -> np.ndarray:
    if isinstance(which, str):
        return np.full(shape, which == "l")
    return np.broadcast_to(np.asarray(which, dtype=bool), shape)


def resolve_step(xs, dl, dr, theta, use_l):
    """
    由左右距离与 θ 决定一步的去向

    严格更近的一侧直接走；平局时 l 规则在 θ ≤ 0 时向左，r 规则只在 θ = -1 时向左。

    Returns:
        (new_x, branch)：branch 为平局且 θ=0
    """
    tie = (dl == dr) & (dl > 0)
    tie_left = np.where(use_l, theta <= 0, theta == -1)
    left = (dl < dr) | (tie & tie_left)
    return np.where(left, xs - dl, xs + dr), tie & (theta == 0)


def row_distances(row_open) -> Tuple[np.ndarray, np.ndarray]:
    """
    显式给出的行 t+1 开放窗口（最后一维长 2R+1，中心为本列）-> (dl, dr)

    本列开放时两者为 0；某侧窗口内没有开放格点时该侧记为 R+1。
    """
    row_open = np.asarray(row_open, dtype=bool)
    width = row_open.shape[-1]
    if width < 3 or width % 2 == 0:
        raise ValueError(f"窗口长度必须是 >= 3 的奇数，收到 {width}")
    radius = width // 2

    def first_open(side):
        return np.where(side.any(axis=-1), side.argmax(axis=-1) + 1, radius + 1)

    centre = row_open[..., radius]
    dl = np.where(centre, 0, first_open(row_open[..., radius - 1::-1]))
    dr = np.where(centre, 0, first_open(row_open[..., radius + 1:]))
    return dl.astype(np.int64), dr.astype(np.int64)


def explicit_step(row_open, theta, which):
    """在显式给出的 ω 窗口与 θ 上执行一步，返回 (位移, branch)"""
    dl, dr = row_distances(row_open)
    theta = np.broadcast_to(np.asarray(theta), dl.shape)
    if isinstance(which, str):
        _check_kind(which)
    return resolve_step(np.zeros_like(dl), dl, dr, theta, _use_left(which, dl.shape))


def advance(seed, p: float, epsilon: float, x, t, which, r_max: Optional[int] = None):
    """
    批量执行一步 Γ

    Args:
        which: "l"、"r"，或布尔数组（True 表示按 Γ^l 规则）

    Returns:
        (new_x, branch)：新位置与分叉标记（平局且 θ=0）
    """
    if isinstance(which, str):
        _check_kind(which)
    dl, dr, theta = step_geometry(seed, p, epsilon, x, t, r_max)
    xs = np.broadcast_to(np.asarray(x, dtype=np.int64), dl.shape)
    return resolve_step(xs, dl, dr, theta, _use_left(which, dl.shape))


def advance_lr(seed, p: float, epsilon: float, x, t, r_max: Optional[int] = None):
    """同一组格点同时给出 Γ^l 与 Γ^r 的结果，返回 (x_l, x_r, branch)"""
    dl, dr, theta = step_geometry(seed, p, epsilon, x, t, r_max)
    xs = np.broadcast_to(np.asarray(x, dtype=np.int64), dl.shape)
    x_l, branch = resolve_step(xs, dl, dr, theta, True)
    x_r, _ = resolve_step(xs, dl, dr, theta, False)
    return x_l, x_r, branch


# ---------------------------------------------------------
# 领域类型
# ---------------------------------------------------------

class SelectorPolicy(Enum):
    """选择器策略"""
    ALWAYS_LEFT = "always-left"
    ALWAYS_RIGHT = "always-right"
    EXPLICIT = "explicit"       # 显式 {l, r} 序列，每步消耗一个符号
    UNIFORM = "uniform"         # 每步公平抛硬币（带种子）


@dataclass(frozen=True)
class Selector:
    policy: SelectorPolicy
    sequence: Tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self):
        bad = [s for s in self.sequence if s not in KINDS]
        if bad:
            raise ValueError(f"显式序列只能包含 'l'/'r'，收到 {bad[:3]}")

    @classmethod
    def always_left(cls) -> "Selector":
        return cls(SelectorPolicy.ALWAYS_LEFT)

    @classmethod
    def always_right(cls) -> "Selector":
        return cls(SelectorPolicy.ALWAYS_RIGHT)

    @classmethod
    def explicit(cls, sequence: Sequence[str]) -> "Selector":
        return cls(SelectorPolicy.EXPLICIT, tuple(sequence))

    @classmethod
    def uniform(cls, seed: int) -> "Selector":
        return cls(SelectorPolicy.UNIFORM, seed=seed)

    def choices(self, steps: int) -> Tuple[str, ...]:
        if self.policy is SelectorPolicy.ALWAYS_LEFT:
            return ("l",) * steps
        if self.policy is SelectorPolicy.ALWAYS_RIGHT:
            return ("r",) * steps
        if self.policy is SelectorPolicy.UNIFORM:
            coins = np.random.default_rng(self.seed).random(steps) < 0.5
            return tuple("l" if c else "r" for c in coins)
        if len(self.sequence) < steps:
            raise SelectorExhausted(f"显式序列长度 {len(self.sequence)} 不足 {steps} 步")
        return self.sequence[:steps]


@dataclass
class LatticePath:
    """从 start 出发的整数位置序列，positions[k] 对应时间 start.t + k"""
    start: Cell
    positions: np.ndarray

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def times(self) -> np.ndarray:
        return self.start.t + np.arange(len(self.positions), dtype=np.int64)

    @property
    def end(self) -> Cell:
        return Cell(int(self.positions[-1]), self.start.t + len(self.positions) - 1)


@dataclass(frozen=True)
class Censored:
    """在 t_max 之前事件没有发生"""
    t_max: int


FirstTime = Union[int, Censored]


def _require_open(params: EnvParams, z: Cell) -> None:
    if not bool(is_open(params.seed, params.p, z.x, z.t)):
        raise NotOpen(z.x, z.t)


# ---------------------------------------------------------
# 单条路径接口
# ---------------------------------------------------------

def gamma(params: EnvParams, z: Cell, which: str) -> Cell:
    """Γ^which(z)：z 必须开放"""
    _check_kind(which)
    _require_open(params, z)
    new_x, _ = advance(params.seed, params.p, params.epsilon, z.x, z.t, which, params.r_max)
    return Cell(int(new_x), z.t + 1)


def walk(params: EnvParams, z: Cell, selector: Selector, steps: int) -> LatticePath:
    """按选择器依次复合 Γ^{a_k}，返回整数位置序列（插值留给 metrics）"""
    if steps < 1:
        raise ValueError(f"steps 必须 >= 1，收到 {steps}")
    _require_open(params, z)
    choices = selector.choices(steps)

    positions = np.empty(steps + 1, dtype=np.int64)
    positions[0] = z.x
    x = z.x
    for k, which in enumerate(choices):
        new_x, _ = advance(params.seed, params.p, params.epsilon, x, z.t + k, which, params.r_max)
        x = int(new_x)
        positions[k + 1] = x
    return LatticePath(start=z, positions=positions)


def coalescence_time(params: EnvParams, u: Cell, v: Cell, kind: str, t_max: int) -> FirstTime:
    """两条同类路径第一次重合的步数；重合后再走一步确认仍然重合"""
    _check_kind(kind)
    _require_open(params, u)
    _require_open(params, v)
    if u.t != v.t:
        raise ValueError("两个起点必须在同一行")
    if u.x == v.x:
        return 0

    xs = np.array([u.x, v.x], dtype=np.int64)
    t = u.t
    for k in range(1, t_max + 1):
        xs, _ = advance(params.seed, params.p, params.epsilon, xs, t, kind, params.r_max)
        t += 1
        if xs[0] == xs[1]:
            nxt, _ = advance(params.seed, params.p, params.epsilon, xs, t, kind, params.r_max)
            if nxt[0] != nxt[1]:
                raise InvariantViolation(f"同类路径在 t={t} 重合后又分开")
            return k
    return Censored(t_max)


def crossing_time(params: EnvParams, u: Cell, v: Cell, t_max: int) -> FirstTime:
    """
    l-路径从 u 出发、r-路径从 v 出发 (v.x <= u.x)，
    返回 r-路径位置第一次 >= l-路径位置的步数
    """
    _require_open(params, u)
    _require_open(params, v)
    if u.t != v.t:
        raise ValueError("两个起点必须在同一行")
    if v.x > u.x:
        raise ValueError("r-路径起点必须在 l-路径起点左侧")
    if v.x == u.x:
        return 0

    xl, xr, t = u.x, v.x, u.t
    for k in range(1, t_max + 1):
        new_l, _ = advance(params.seed, params.p, params.epsilon, xl, t, "l", params.r_max)
        new_r, _ = advance(params.seed, params.p, params.epsilon, xr, t, "r", params.r_max)
        xl, xr = int(new_l), int(new_r)
        t += 1
        if xr >= xl:
            return k
    return Censored(t_max)


def count_branch_events(params: EnvParams, path: LatticePath) -> int:
    """路径经过的格点中 Γ^l ≠ Γ^r 的个数"""
    _, branch = advance(params.seed, params.p, params.epsilon,
                        path.positions, path.times, "l", params.r_max)
    return int(branch.sum())


# ---------------------------------------------------------
# 批量首达时间引擎
# ---------------------------------------------------------

@dataclass
class FirstPassage:
    """一批副本的首达时间；截尾样本的 times 记为 t_max，observed=False"""
    times: np.ndarray
    observed: np.ndarray
    t_max: int

    def __len__(self) -> int:
        return len(self.times)

    def survival(self, t_grid) -> np.ndarray:
        """经验尾概率 P̂(τ > t)，截尾样本在所有 t <= t_max 上都计为存活"""
        t = np.asarray(t_grid, dtype=np.float64)[:, None]
        alive = ~self.observed[None, :] | (self.times[None, :] > t)
        return alive.mean(axis=1)

    @property
    def censored_fraction(self) -> float:
        return float(np.mean(~self.observed))

    @classmethod
    def concat(cls, parts: Sequence["FirstPassage"]) -> "FirstPassage":
        return cls(times=np.concatenate([f.times for f in parts]),
                   observed=np.concatenate([f.observed for f in parts]),
                   t_max=parts[0].t_max)


StepFn = Callable[[np.ndarray, np.ndarray, int], np.ndarray]


def first_passage_batch(step: StepFn, seeds: np.ndarray, start_a, start_b,
                        t_max: int, reached: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> FirstPassage:
    """
    通用首达时间引擎：两条路径 a、b 同步推进，直到 reached(a, b) 成立

    Args:
        step: step(seeds, x, k) 把第 k 步之前的位置推进一步，
              x 是 a、b 两组位置拼接后的数组，seeds 与之对齐
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    n = seeds.size
    a = np.broadcast_to(np.asarray(start_a, dtype=np.int64), (n,)).copy()
    b = np.broadcast_to(np.asarray(start_b, dtype=np.int64), (n,)).copy()

    times = np.full(n, t_max, dtype=np.int64)
    observed = reached(a, b)
    times[observed] = 0
    active = np.flatnonzero(~observed)

    k = 0
    while active.size and k < t_max:
        m = active.size
        s = seeds[active]
        moved = step(np.concatenate([s, s]), np.concatenate([a[active], b[active]]), k)
        a[active] = moved[:m]
        b[active] = moved[m:]
        k += 1
        hit = reached(a[active], b[active])
        times[active[hit]] = k
        observed[active[hit]] = True
        active = active[~hit]

    return FirstPassage(times=times, observed=observed, t_max=t_max)


def _forward_step(p: float, epsilon: float, kind_a: str, kind_b: str,
                  r_max: Optional[int]) -> StepFn:
    def step(seeds, x, k):
        m = x.size // 2
        use_l = np.concatenate([np.full(m, kind_a == "l"), np.full(m, kind_b == "l")])
        new_x, _ = advance(seeds, p, epsilon, x, k, use_l, r_max)
        return new_x
    return step


def coalescence_times_batch(seeds, p: float, epsilon: float, gap: int, kind: str,
                            t_max: int, r_max: Optional[int] = None) -> FirstPassage:
    """每个副本从 (0,0) 与 (gap,0) 出发的两条同类路径的合并时间 τ_gap"""
    _check_kind(kind)
    return first_passage_batch(_forward_step(p, epsilon, kind, kind, r_max),
                               seeds, 0, gap, t_max, np.equal)


def crossing_times_batch(seeds, p: float, epsilon: float, gap: int,
                         t_max: int, r_max: Optional[int] = None) -> FirstPassage:
    """l-路径从 (gap,0)、r-路径从 (0,0) 出发的交叉时间 τ^c_gap"""
    return first_passage_batch(_forward_step(p, epsilon, "l", "r", r_max),
                               seeds, gap, 0, t_max, lambda xl, xr: xr >= xl)
