"""
工具函数模块
提供各种辅助功能
"""

import os
import tempfile
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator, Union


def format_number(num: float, decimals: int = 4) -> str:
    """
    格式化数字

    Args:
        num: 数字
        decimals: 小数位数

    Returns:
        格式化后的字符串
    """
    return f"{num:.{decimals}f}"


def format_percentage(num: float, decimals: int = 2) -> str:
    """
    格式化百分比

    Args:
        num: 比例（0-1）
        decimals: 小数位数

    Returns:
        格式化后的百分比字符串
    """
    return f"{num * 100:.{decimals}f}%"


def get_timestamp() -> str:
    """
    获取创建时间戳（ISO 8601，UTC）

    设置了 SOURCE_DATE_EPOCH 环境变量时使用该值，保证同一种子重复训练得到逐字节相同的图谱

    Returns:
        时间戳字符串
    """
    epoch = os.environ.get('SOURCE_DATE_EPOCH')
    if epoch:
        moment = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    else:
        moment = datetime.now(timezone.utc)
    return moment.strftime('%Y-%m-%dT%H:%M:%SZ')


def _current_umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


@contextmanager
def atomic_write(path: Union[str, Path], mode: str = 'w', encoding: str = 'utf-8') -> Iterator[Any]:
    """
    原子写文件：先写同目录临时文件，成功后重命名覆盖目标

    中途出错时目标文件保持原样，临时文件被删除
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix='.tmp', dir=str(path.parent))
    try:
        if 'b' in mode:
            handle = os.fdopen(fd, mode)
        else:
            handle = os.fdopen(fd, mode, encoding=encoding, newline='\n')
        with handle:
            yield handle
        # mkstemp 固定为 0600，改为与普通 open() 相同的权限
        os.chmod(tmp_name, 0o666 & ~_current_umask())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
