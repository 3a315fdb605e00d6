"""
异常定义模块
所有对外抛出的错误都继承自 FiberClusterError，命令行层统一捕获
"""

from typing import Optional


class FiberClusterError(Exception):
    """纤维聚类系统的基础异常"""


class InvalidInputError(FiberClusterError, ValueError):
    """输入不合法（参数越界、形状不一致、非有限坐标等）"""


class SchemaError(InvalidInputError):
    """
    文件内容不符合格式约定

    Args:
        message: 错误描述
        line_number: 出错行号（从1开始，未知时为None）
    """

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"第 {line_number} 行: {message}"
        super().__init__(message)


class AtlasVersionError(InvalidInputError):
    """图谱文件版本与当前程序不兼容"""

    def __init__(self, found, expected):
        self.found = found
        self.expected = expected
        super().__init__(f"图谱版本不兼容: 文件版本={found}, 程序支持版本={expected}")


class InvariantError(FiberClusterError, AssertionError):
    """内部不变量被破坏"""


class NonFiniteGradientError(FiberClusterError, FloatingPointError):
    """梯度中出现 NaN 或 inf，训练中止"""

    def __init__(self, blocks, step: int):
        self.blocks = list(blocks)
        self.step = step
        super().__init__(f"第 {step} 步梯度非有限，参数块: {', '.join(self.blocks)}")
