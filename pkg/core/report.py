"""
Report: 实验结果、判定规则与输出

每个估计量产出一行 ExperimentReport；所有行共用同一组列
（不适用的列留空），用 pandas 写成 CSV 或结构等价的 JSON。
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence

import pandas as pd

# 等式目标用 3σ 带：95% 半宽 × 3/1.96
SIGMA_BAND = 3.0 / 1.96

COLUMNS = ["experiment", "p", "b", "n", "epsilon", "alpha", "kind", "k", "t", "delta",
           "estimate", "ci", "target", "verdict", "samples", "seed"]


class Verdict(Enum):
    PASS = "pass"
    FAIL = "fail"
    DIAGNOSTIC = "diagnostic"


@dataclass(frozen=True)
class Target:
    """
    判定目标

    - equal: |估计 - value| <= max(ci·3/1.96, tolerance)
    - upper: 估计 <= value + max(ci, tolerance)
    - lower: 估计 >= value - max(ci, tolerance)
    - within: value <= 估计 <= upper
    diagnostic=True 的目标只报告，不参与退出码。
    """
    kind: str
    value: float
    tolerance: float = 0.0
    upper: Optional[float] = None
    diagnostic: bool = False

    def __post_init__(self):
        if self.kind not in ("equal", "upper", "lower", "within"):
            raise ValueError(f"未知的目标类型: {self.kind}")
        if self.kind == "within" and (self.upper is None or self.upper < self.value):
            raise ValueError("within 目标需要 upper >= value")

    @classmethod
    def equal(cls, value: float, tolerance: float = 0.0, diagnostic: bool = False) -> "Target":
        return cls("equal", value, tolerance, diagnostic=diagnostic)

    @classmethod
    def at_most(cls, value: float, tolerance: float = 0.0, diagnostic: bool = False) -> "Target":
        return cls("upper", value, tolerance, diagnostic=diagnostic)

    @classmethod
    def at_least(cls, value: float, tolerance: float = 0.0, diagnostic: bool = False) -> "Target":
        return cls("lower", value, tolerance, diagnostic=diagnostic)

    @classmethod
    def between(cls, lo: float, hi: float, diagnostic: bool = False) -> "Target":
        return cls("within", lo, upper=hi, diagnostic=diagnostic)

    def holds(self, estimate: float, ci: float) -> bool:
        if math.isnan(estimate):
            return False
        if self.kind == "equal":
            return abs(estimate - self.value) <= max(ci * SIGMA_BAND, self.tolerance)
        if self.kind == "upper":
            return estimate <= self.value + max(ci, self.tolerance)
        if self.kind == "lower":
            return estimate >= self.value - max(ci, self.tolerance)
        return self.value <= estimate <= self.upper

    def describe(self) -> str:
        if self.kind == "equal":
            return f"{self.value:.6g}" if self.tolerance == 0 else f"{self.value:.6g}±{self.tolerance:.3g}"
        if self.kind == "upper":
            return f"<={self.value:.6g}"
        if self.kind == "lower":
            return f">={self.value:.6g}"
        return f"[{self.value:.6g},{self.upper:.6g}]"


@dataclass
class ExperimentReport:
    name: str
    estimate: float
    ci_half_width: float
    target: Optional[Target]
    verdict: Verdict
    samples: int
    seed: int
    params: Dict[str, float] = field(default_factory=dict)
    kind: Optional[str] = None
    k: Optional[int] = None
    t: Optional[float] = None
    delta: Optional[float] = None

    @classmethod
    def evaluate(cls, name: str, estimate: float, ci_half_width: float, target: Optional[Target],
                 samples: int, seed: int, params: Dict[str, float], **labels) -> "ExperimentReport":
        """按目标给出判定；没有目标或目标为诊断性时判定为 diagnostic"""
        if target is None or target.diagnostic:
            verdict = Verdict.DIAGNOSTIC
        else:
            verdict = Verdict.PASS if target.holds(estimate, ci_half_width) else Verdict.FAIL
        return cls(name=name, estimate=float(estimate), ci_half_width=float(ci_half_width),
                   target=target, verdict=verdict, samples=int(samples), seed=int(seed),
                   params=dict(params), **labels)

    def row(self) -> dict:
        row = {c: None for c in COLUMNS}
        row.update({k: v for k, v in self.params.items() if k in COLUMNS})
        row.update(experiment=self.name, kind=self.kind, k=self.k, t=self.t, delta=self.delta,
                   estimate=self.estimate, ci=self.ci_half_width,
                   target=self.target.describe() if self.target else None,
                   verdict=self.verdict.value, samples=self.samples, seed=self.seed)
        return row


def reports_to_frame(reports: Sequence[ExperimentReport]) -> pd.DataFrame:
    frame = pd.DataFrame([r.row() for r in reports], columns=COLUMNS)
    for col in ("n", "k", "samples"):
        frame[col] = frame[col].astype("Int64")
    return frame


def render_reports(reports: Sequence[ExperimentReport], fmt: str = "csv") -> str:
    frame = reports_to_frame(reports)
    if fmt == "csv":
        return frame.to_csv(index=False, float_format="%.10g", lineterminator="\n")
    if fmt == "json":
        return frame.to_json(orient="records", indent=2, double_precision=10) + "\n"
    raise ValueError(f"不支持的输出格式: {fmt}")


def write_reports(reports: Sequence[ExperimentReport], path: str, fmt: str = "csv") -> None:
    text = render_reports(reports, fmt)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)


def exit_code(reports: List[ExperimentReport]) -> int:
    """任一非诊断判定为 fail 时返回 2，否则 0"""
    return 2 if any(r.verdict is Verdict.FAIL for r in reports) else 0
