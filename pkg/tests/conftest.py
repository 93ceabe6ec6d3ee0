"""
测试公共夹具
"""
import sys
from pathlib import Path

import pytest

# 添加父目录到路径
sys.path.append(str(Path(__file__).parent.parent))

from modules.core_types import EMPTY_VALUE, INITIAL_TAG, OperationRecord, OpKind  # noqa: E402
from modules.quorum import build_majority, build_square_matrix  # noqa: E402


@pytest.fixture
def majority3():
    return build_majority(3)


@pytest.fixture
def majority5():
    return build_majority(5)


@pytest.fixture
def matrix9():
    return build_square_matrix(9)


@pytest.fixture
def make_op():
    """构造操作记录：make_op(op_id, process, kind, invoked, responded, tag, value)"""
    def factory(op_id, process, kind, invoked, responded=None, tag=None, value=None):
        if kind is OpKind.READ and tag == INITIAL_TAG and value is None:
            value = EMPTY_VALUE
        return OperationRecord(
            op_id=op_id, process=process, kind=kind, invoked_at=invoked,
            responded_at=responded, tag=tag, value=value,
        )
    return factory
