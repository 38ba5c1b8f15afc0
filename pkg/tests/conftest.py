import os
import sys

import numpy as np
import pytest

# ---------------------------------------------------------
# 环境设置：确保能导入 core 模块与根目录下的 config / app
# ---------------------------------------------------------
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from core.environment import Cell, EnvParams, is_open, nearest_open  # noqa: E402


@pytest.fixture
def env():
    return EnvParams(p=0.5, epsilon=0.3, seed=12345)


def open_cell(params: EnvParams, x: int = 0, t: int = 0) -> Cell:
    """行 t 中离 x 最近的开放格点"""
    return nearest_open(params, Cell(x, t - 1), "either")


def find_seed(p: float, pattern, row: int = 1, start: int = 0) -> int:
    """找到行 row 中列 -k..k 的开放状态与 pattern 一致的种子"""
    k = len(pattern) // 2
    cols = np.arange(-k, k + 1)
    for seed in range(start, start + 100_000):
        if is_open(seed, p, cols, row).tolist() == list(pattern):
            return seed
    pytest.fail(f"没有找到满足 {pattern} 的种子")
