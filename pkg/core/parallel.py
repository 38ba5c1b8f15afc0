"""
Parallel: 副本种子派生与分块多进程执行

每个副本的环境种子只由 (seed, stream, 副本编号) 决定，分块大小固定，
结果按块的顺序拼接，所以输出与 worker 数量无关。
"""

import logging
import multiprocessing
import os
from functools import partial
from typing import Callable, List, Optional, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

CHUNK_SIZE = 2048

T = TypeVar("T")


def replica_seeds(seed: int, stream: int, count: int, start: int = 0) -> np.ndarray:
    """第 start .. start+count-1 个副本的 64 位环境种子"""
    out = np.empty(count, dtype=np.uint64)
    for i in range(count):
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream, start + i))
        out[i] = ss.generate_state(1, np.uint64)[0]
    return out


def thread_cap() -> int:
    """DRAINET_THREADS 给出的 worker 上限，未设置时为 CPU 数"""
    raw = os.getenv("DRAINET_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            logger.warning(f"⚠️ DRAINET_THREADS={raw!r} 不是整数，改用 CPU 数")
    return max(1, os.cpu_count() or 1)


def worker_count(requested: Optional[int] = None) -> int:
    cap = thread_cap()
    if requested is None:
        return cap
    return max(1, min(int(requested), cap))


def _run_chunk(func: Callable, seed: int, stream: int, bounds, kwargs: dict):
    start, stop = bounds
    seeds = replica_seeds(seed, stream, stop - start, start)
    return func(seeds, **kwargs)


def run_chunked(func: Callable[..., T], replicas: int, seed: int, stream: int,
                workers: Optional[int] = None, **kwargs) -> List[T]:
    """
    把 replicas 个副本按 CHUNK_SIZE 分块，对每块调用 func(seeds, **kwargs)

    func 必须是模块级函数（子进程需要 pickle）。返回值按块顺序排列。
    """
    if replicas < 1:
        raise ValueError(f"replicas 必须 >= 1，收到 {replicas}")
    bounds = [(i, min(i + CHUNK_SIZE, replicas)) for i in range(0, replicas, CHUNK_SIZE)]
    job = partial(_run_chunk, func, seed, stream, kwargs=kwargs)
    n_workers = min(worker_count(workers), len(bounds))

    if n_workers == 1:
        return [job(b) for b in bounds]

    logger.debug(f"⚙️ {len(bounds)} 个分块, {n_workers} 个进程")
    with multiprocessing.Pool(n_workers) as pool:
        return pool.map(job, bounds)
