import os
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Optional

from dotenv import dotenv_values, load_dotenv

from core.reference import ModelParams

# 加载 .env 文件
load_dotenv()


class Config:
    # 模型参数
    P = 0.5
    B = 1.0
    N = 50
    ALPHA = 1.0
    COLLAPSE_ALPHA = 2.0     # collapse 子命令未指定 --alpha 时使用
    LIMIT_N = 100            # survival / lr-compare 未指定 --n 或 --epsilon 时的尺度
    SEED = 1

    # 实验规模
    REPLICAS = 10_000
    T_MAX = 10_000
    STEPS = 100
    DELTA = 0.5
    T = 1.0

    # 输出与日志
    FORMAT = "csv"
    LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

    @staticmethod
    def log_level() -> str:
        """读取 DRAINET_LOG_LEVEL（不区分大小写），默认 INFO"""
        level = os.getenv("DRAINET_LOG_LEVEL", "INFO").strip().upper()
        if level not in Config.LOG_LEVELS:
            raise ValueError(f"DRAINET_LOG_LEVEL 必须是 {Config.LOG_LEVELS} 之一，收到 {level!r}")
        return level

    @staticmethod
    def defaults() -> Dict[str, Any]:
        return {"p": Config.P, "b": Config.B, "n": None, "epsilon": None, "alpha": None,
                "seed": Config.SEED, "replicas": Config.REPLICAS, "t_max": Config.T_MAX,
                "steps": None, "delta": Config.DELTA, "t": Config.T, "out": None,
                "format": Config.FORMAT, "workers": None}


@dataclass
class RunConfig:
    """一次运行的完整配置；n 与 epsilon 最多给出一个，都未给出时 n 取 Config.N"""
    p: float = Config.P
    b: float = Config.B
    n: Optional[int] = None
    epsilon: Optional[float] = None
    alpha: Optional[float] = None
    seed: int = Config.SEED
    replicas: int = Config.REPLICAS
    t_max: int = Config.T_MAX
    steps: Optional[int] = None
    delta: float = Config.DELTA
    t: float = Config.T
    out: Optional[str] = None
    format: str = Config.FORMAT
    workers: Optional[int] = None

    def validate(self):
        """启动时检查参数取值"""
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p 必须在 (0, 1) 内，收到 {self.p}")
        if self.b < 0:
            raise ValueError(f"b 必须 >= 0，收到 {self.b}")
        if self.n is not None and self.epsilon is not None:
            raise ValueError("n 与 epsilon 只能给出一个")
        if self.n is not None and self.n < 1:
            raise ValueError(f"n 必须 >= 1，收到 {self.n}")
        if self.epsilon is not None and not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon 必须在 [0, 1] 内，收到 {self.epsilon}")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError(f"alpha 必须 > 0，收到 {self.alpha}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed 必须是 64 位无符号整数，收到 {self.seed}")
        for name in ("replicas", "t_max"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} 必须 >= 1，收到 {getattr(self, name)}")
        if self.steps is not None and self.steps < 1:
            raise ValueError(f"steps 必须 >= 1，收到 {self.steps}")
        if self.delta < 0 or self.t <= 0:
            raise ValueError(f"需要 delta >= 0 且 t > 0，收到 delta={self.delta}, t={self.t}")
        if self.format not in ("csv", "json"):
            raise ValueError(f"format 只能是 csv 或 json，收到 {self.format}")
        if self.workers is not None and self.workers < 1:
            raise ValueError(f"workers 必须 >= 1，收到 {self.workers}")
        return self

    @property
    def scale_given(self) -> bool:
        return self.n is not None or self.epsilon is not None

    @property
    def walk_steps(self) -> int:
        return Config.STEPS if self.steps is None else self.steps

    def model_params(self, alpha: Optional[float] = None) -> ModelParams:
        """只给出 epsilon 时，n 取 round((b/ε)^{1/α})，无法推出时取 1"""
        alpha = alpha or self.alpha or Config.ALPHA
        n = self.n
        if n is None and self.epsilon is None:
            n = Config.N
        elif n is None:
            n = 1
            if self.b > 0 and self.epsilon > 0:
                n = max(1, int(round((self.b / self.epsilon) ** (1.0 / alpha))))
        return ModelParams(p=self.p, b=self.b, n=n, epsilon=self.epsilon, alpha=alpha, seed=self.seed)

    def snapshot(self) -> Dict[str, Any]:
        return asdict(self)


_FIELDS = {f.name for f in fields(RunConfig)}
_CASTS = {"p": float, "b": float, "n": int, "epsilon": float, "alpha": float, "seed": int,
          "replicas": int, "t_max": int, "steps": int, "delta": float, "t": float,
          "out": str, "format": str, "workers": int}


def load_config_file(path: str) -> Dict[str, Any]:
    """
    读取扁平 key=value 配置文件（dotenv 语法）

    键名大小写不敏感，'-' 与 '_' 等价；未知键或无法转换的值抛出 ValueError。
    """
    if not os.path.isfile(path):
        raise ValueError(f"配置文件不存在: {path}")
    values = {}
    for raw_key, raw in dotenv_values(path).items():
        key = raw_key.strip().lower().replace("-", "_")
        if key not in _CASTS:
            raise ValueError(f"配置文件中有未知的键: {raw_key}")
        if raw is None or raw.strip() == "":
            continue
        try:
            values[key] = _CASTS[key](raw.strip())
        except ValueError:
            raise ValueError(f"配置项 {raw_key}={raw!r} 无法解析") from None
    return values


def build_run_config(file_values: Optional[Dict[str, Any]] = None,
                     flags: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    合并配置：默认值 < 配置文件 < 命令行参数

    n 与 epsilon 视为同一个设置：优先级最高、给出其中之一的那一层决定两者，
    同一层同时给出两者视为错误。
    """
    values = Config.defaults()
    for layer in (file_values or {}, flags or {}):
        layer = {k: v for k, v in layer.items() if v is not None}
        unknown = set(layer) - _FIELDS
        if unknown:
            raise ValueError(f"未知的配置项: {sorted(unknown)}")
        if "n" in layer and "epsilon" in layer:
            raise ValueError("n 与 epsilon 只能给出一个")
        if "n" in layer or "epsilon" in layer:
            values["n"] = layer.pop("n", None)
            values["epsilon"] = layer.pop("epsilon", None)
        values.update(layer)
    return RunConfig(**values).validate()
