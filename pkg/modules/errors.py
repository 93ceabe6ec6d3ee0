"""
异常定义
纯逻辑模块只抛出这里的异常，由命令行入口统一转换为退出码
"""


class EratoError(Exception):
    """所有自定义异常的基类"""


class InvalidParameterError(EratoError, ValueError):
    """构造参数非法（如 0 台服务器）"""


class InvalidInputError(EratoError, ValueError):
    """输入数据与前置条件不符（如视图缺少服务器）"""


class InvalidMessageError(EratoError, ValueError):
    """消息字段与消息类型不匹配"""


class InvalidConfigError(EratoError, ValueError):
    """拓扑或故障计划不一致"""


class ConfigError(EratoError):
    """场景配置错误，一次性汇报所有问题"""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class InvalidHistoryError(EratoError, ValueError):
    """历史记录不合法（同一进程的操作区间重叠、缺少标签等）"""


class HistoryTooLargeError(EratoError):
    """暴力线性化检查超出规模上限"""


class UnreachableError(EratoError):
    """两节点之间没有路径"""


class AccountingError(EratoError):
    """消息无法归属到任何操作"""


class SweepError(EratoError):
    """批量实验中有单元失败"""

    def __init__(self, report):
        self.report = list(report)
        super().__init__(f"{len(self.report)} 个实验单元失败: " + "; ".join(self.report))
