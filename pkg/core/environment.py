"""
Environment: 无状态随机环境

整个 ℤ² 格点上的 (ω(z), θ(z)) 由 (seed, x, t) 的计数器哈希直接算出，
不需要存储，也不依赖调用顺序，任意多个进程看到的是同一个环境。

所有底层函数都接受 numpy 数组并按广播规则逐元素计算，
这样成千上万条独立副本（每个副本一个 seed）可以同步推进。
"""

import math
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from core.exceptions import RadiusExceeded

# 哈希流编号：ω 与 θ 各用一条独立的流
STREAM_OPEN = 0
STREAM_THETA = 1

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_X_KEY = np.uint64(_GOLDEN)
_T_KEY = np.uint64((2 * _GOLDEN) & _MASK64)
_SHIFT30 = np.uint64(30)
_SHIFT27 = np.uint64(27)
_SHIFT31 = np.uint64(31)
_SHIFT11 = np.uint64(11)
_UNIT = 2.0 ** -53

# 默认搜索半径系数：R_max = ceil(60/p)，单次查询失败概率 (1-p)^{R_max} < 1e-25
R_MAX_FACTOR = 60.0

Side = Literal["left", "right", "either"]


def _stream_key(stream: int) -> np.uint64:
    return np.uint64((_GOLDEN * (stream + 1) + 0x632BE59BD9B4E019) & _MASK64)


def _mix64(z):
    """splitmix64 的终结混合函数"""
    z = (z ^ (z >> _SHIFT30)) * _MIX1
    z = (z ^ (z >> _SHIFT27)) * _MIX2
    return z ^ (z >> _SHIFT31)


def _as_u64(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype == np.uint64:
        return arr
    # 负坐标按补码解释
    return arr.astype(np.int64).astype(np.uint64)


def default_r_max(p: float) -> int:
    return int(math.ceil(R_MAX_FACTOR / p))


def hash_uniform(seed, x, t, stream: int) -> np.ndarray:
    """
    计数器哈希：(seed, x, t, stream) -> [0, 1) 上的均匀变量

    Args:
        seed: uint64 种子（标量或数组）
        x, t: 整数坐标（标量或数组，按广播规则组合）
        stream: 哈希流编号 (STREAM_OPEN / STREAM_THETA)
    """
    with np.errstate(over="ignore"):
        h = _mix64(_as_u64(seed) ^ _stream_key(stream))
        h = _mix64(h ^ _mix64(_as_u64(x) + _X_KEY))
        h = _mix64(h ^ _mix64(_as_u64(t) + _T_KEY))
        return np.asarray(h >> _SHIFT11).astype(np.float64) * _UNIT


def is_open(seed, p: float, x, t) -> np.ndarray:
    """ω(z) = 1 当且仅当该格点的均匀变量 < p"""
    return hash_uniform(seed, x, t, STREAM_OPEN) < p


def theta_values(seed, epsilon: float, x, t) -> np.ndarray:
    """
    θ(z) ∈ {-1, 0, +1}：P(θ=0)=ε，P(θ=-1)=P(θ=+1)=(1-ε)/2
    每个格点都采样 θ，不管是否开放。
    """
    u = hash_uniform(seed, x, t, STREAM_THETA)
    half = epsilon + (1.0 - epsilon) / 2.0
    theta = np.where(u < epsilon, 0, np.where(u < half, -1, 1))
    return theta.astype(np.int8)


def broadcast_cells(seed, x, t):
    shape = np.broadcast_shapes(np.shape(seed), np.shape(x), np.shape(t))
    seeds = np.broadcast_to(_as_u64(seed), shape)
    xs = np.broadcast_to(np.asarray(x, dtype=np.int64), shape)
    ts = np.broadcast_to(np.asarray(t, dtype=np.int64), shape)
    return shape, seeds, xs, ts


def scan_distances(seed, p: float, x, row, direction: int,
                   include_self: bool = True, r_max: Optional[int] = None) -> np.ndarray:
    """
    在行 row 中从列 x 出发向 direction (-1 左 / +1 右) 搜索最近的开放格点，返回距离。

    按块批量检查候选列，未命中的元素进入下一块；超过 r_max 抛出 RadiusExceeded。

    Args:
        include_self: True 时距离从 0 开始（h 查询），False 时从 1 开始（K^l / K^r 查询）
    """
    if direction not in (-1, 1):
        raise ValueError(f"direction 只能是 -1 或 +1，收到 {direction}")
    if r_max is None:
        r_max = default_r_max(p)

    shape, seeds, xs, rows = broadcast_cells(seed, x, row)
    seeds = seeds.reshape(-1)
    xs = xs.reshape(-1)
    rows = rows.reshape(-1)

    out = np.empty(xs.size, dtype=np.int64)
    pending = np.arange(xs.size)
    start = 0 if include_self else 1
    block = max(4, int(math.ceil(2.0 / p)))

    while pending.size:
        if start > r_max:
            i = pending[0]
            raise RadiusExceeded(int(xs[i]), int(rows[i]), r_max)
        offsets = np.arange(start, min(start + block, r_max + 1), dtype=np.int64)
        cols = xs[pending, None] + direction * offsets[None, :]
        hit = is_open(seeds[pending, None], p, cols, rows[pending, None])
        found = hit.any(axis=1)
        out[pending[found]] = offsets[hit[found].argmax(axis=1)]
        pending = pending[~found]
        start += offsets.size
        block *= 2

    return out.reshape(shape)


# ---------------------------------------------------------
# 领域类型
# ---------------------------------------------------------

@dataclass(frozen=True, order=True)
class Cell:
    """格点 z = (x, t)"""
    x: int
    t: int


@dataclass(frozen=True)
class EnvParams:
    """环境参数：开放概率 p、分叉参数 ε、64 位种子与搜索半径"""
    p: float
    epsilon: float = 0.0
    seed: int = 0
    r_max: Optional[int] = field(default=None)

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p 必须在 (0, 1) 内，收到 {self.p}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon 必须在 [0, 1] 内，收到 {self.epsilon}")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError(f"seed 必须是 64 位无符号整数，收到 {self.seed}")
        if self.r_max is None:
            object.__setattr__(self, "r_max", default_r_max(self.p))
        elif self.r_max < 1:
            raise ValueError(f"r_max 必须 >= 1，收到 {self.r_max}")


@dataclass(frozen=True)
class CellState:
    open: bool   # ω(z) = 1
    theta: int   # θ(z) ∈ {-1, 0, +1}


def cell_state(params: EnvParams, z: Cell) -> CellState:
    """纯函数：同一 (params, z) 永远返回同一个 CellState"""
    opened = bool(is_open(params.seed, params.p, z.x, z.t))
    theta = int(theta_values(params.seed, params.epsilon, z.x, z.t))
    return CellState(open=opened, theta=theta)


def scan_distance(params: EnvParams, x: int, row: int, direction: int,
                  include_self: bool = True) -> int:
    return int(scan_distances(params.seed, params.p, x, row, direction,
                              include_self, params.r_max))


def nearest_open(params: EnvParams, z: Cell, side: Side, row: Optional[int] = None) -> Cell:
    """
    最近开放格点查询

    Args:
        side: "left"/"right" 为 K^l/K^r 查询（不含 z 本列，默认行 z.t）；
              "either" 为 h 查询（含 z 本列，默认行 z.t+1）
        row: 显式指定搜索的行

    两侧距离相等时 "either" 返回左侧候选。
    """
    if side not in ("left", "right", "either"):
        raise ValueError(f"未知的 side: {side}")
    if row is None:
        row = z.t + 1 if side == "either" else z.t

    if side == "left":
        return Cell(z.x - scan_distance(params, z.x, row, -1, include_self=False), row)
    if side == "right":
        return Cell(z.x + scan_distance(params, z.x, row, 1, include_self=False), row)

    dl = scan_distance(params, z.x, row, -1)
    dr = scan_distance(params, z.x, row, 1)
    if dl <= dr:
        return Cell(z.x - dl, row)
    return Cell(z.x + dr, row)
