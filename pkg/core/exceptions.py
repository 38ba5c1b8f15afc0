"""
Exceptions: 模拟器统一异常层

所有领域错误都继承 DrainetError，CLI 入口统一捕获后返回退出码 1。
参数取值非法仍然抛出 ValueError（与 Config.validate 的约定一致）。
"""


class DrainetError(Exception):
    """模拟器领域错误基类"""


class RadiusExceeded(DrainetError):
    """在 R_max 范围内找不到开放格点"""

    def __init__(self, x: int, t: int, r_max: int):
        self.x = x
        self.t = t
        self.r_max = r_max
        super().__init__(f"行 t={t} 中距离 x={x} 在 R_max={r_max} 内没有开放格点")


class NotOpen(DrainetError):
    """路径起点必须是开放格点"""

    def __init__(self, x: int, t: int):
        self.x = x
        self.t = t
        super().__init__(f"格点 ({x}, {t}) 是关闭的 (ω=0)")


class NotDualVertex(DrainetError):
    """给定的倍坐标点不在对偶顶点集 V̂ 中"""

    def __init__(self, x2: int, t: int):
        self.x2 = x2
        self.t = t
        super().__init__(f"({x2}/2, {t}) 不是相邻开放格点的中点")


class SelectorExhausted(DrainetError):
    """显式选择序列被用完"""


class EmptyPath(DrainetError):
    """路径没有任何位置"""


class EmptySet(DrainetError):
    """Hausdorff 距离的路径集合为空"""


class InvalidStep(DrainetError):
    """SDE 离散步长非法 (dt <= 0)"""


class InsufficientUncensored(DrainetError):
    """最大观测时间处截尾样本超过一半，尾部估计不可用"""


class InvariantViolation(DrainetError):
    """模型的确定性性质被破坏（说明实现有 bug）"""
