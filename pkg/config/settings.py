"""
配置文件
存储模拟器、协议与实验批处理的默认参数
支持 .env 文件与环境变量覆盖（键名统一使用 ERATO_ 前缀）
"""

import os

# 尝试加载 .env（本地开发）
try:
    from dotenv import load_dotenv
    load_dotenv()
    HAS_DOTENV = True
except ImportError:
    HAS_DOTENV = False


def get_setting(key, default=None, cast=None):
    """
    获取配置值，优先级：
    1. 环境变量（含 .env 中加载的值）
    2. 默认值

    Args:
        key: 配置键名（不含 ERATO_ 前缀）
        default: 默认值
        cast: 类型转换函数，如 float / int

    Returns:
        配置值
    """
    env_value = os.getenv(f"ERATO_{key}")
    if env_value:
        if cast is None:
            return env_value
        try:
            return cast(env_value)
        except (TypeError, ValueError):
            print(f"[配置加载] ERATO_{key}={env_value!r} 无法解析，使用默认值 {default!r}")
            return default

    return default


# 网络模拟
JITTER_MAX = get_setting("JITTER_MAX", 0.001, float)  # 秒
CAP_SECONDS = get_setting("CAP_SECONDS", 300.0, float)  # 模拟时间上限
LOOPBACK_DELAY = get_setting("LOOPBACK_DELAY", 1e-6, float)  # 服务器发给自己的消息

# 消息大小模型：固定报头 + 值负载
HEADER_OCTETS = get_setting("HEADER_OCTETS", 64, int)
VALUE_SIZE = get_setting("VALUE_SIZE", 64, int)
MIN_VALUE_SIZE = 16

# 工作负载与批处理（桌面规模）
OPS_PER_CLIENT = get_setting("OPS_PER_CLIENT", 25, int)
SEEDS_PER_CELL = get_setting("SEEDS_PER_CELL", 10, int)
READ_INTERVAL = get_setting("READ_INTERVAL", 2.0, float)
WRITE_INTERVAL = get_setting("WRITE_INTERVAL", 4.0, float)

# 暴力线性化检查的规模上限（阶乘搜索）
BRUTE_FORCE_MAX_OPS = 10

# 输出与日志
OUT_DIR = get_setting("OUT_DIR", "results")
LOG_LEVEL = get_setting("LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"

# 进程退出码
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_ATOMICITY_VIOLATION = 3
EXIT_LIVENESS_CAP = 4

# CSV 列（版本化，变更时递增 RESULT_SCHEMA_VERSION）
RESULT_SCHEMA_VERSION = 1
RESULT_COLUMNS = [
    "algorithm", "topology", "n_servers", "n_readers", "n_writers", "scheme",
    "seed", "op_id", "process", "op_kind", "invoked_at", "latency_s",
    "exchanges", "messages",
]
COMPUTE_COLUMN = "compute_s"
