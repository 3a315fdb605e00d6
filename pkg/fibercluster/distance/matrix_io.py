"""
距离矩阵二进制读写
格式（小端）：8 字节魔数 "FCDMAT01"，u64 n，随后 n·n 个 float64（行优先）
"""

from pathlib import Path
from typing import Union

import numpy as np

from fibercluster.distance.mdf import DistanceMatrix
from fibercluster.utils.errors import SchemaError
from fibercluster.utils.helpers import atomic_write

MAGIC = b'FCDMAT01'
HEADER_SIZE = len(MAGIC) + 8


def save_distance_matrix(m: DistanceMatrix, path: Union[str, Path]) -> None:
    """写入距离矩阵"""
    with atomic_write(path, mode='wb') as f:
        f.write(MAGIC)
        f.write(np.array([m.n], dtype='<u8').tobytes())
        f.write(np.ascontiguousarray(m.values, dtype='<f8').tobytes())


def load_distance_matrix(path: Union[str, Path]) -> DistanceMatrix:
    """读取距离矩阵"""
    data = Path(path).read_bytes()
    if len(data) < HEADER_SIZE or data[:len(MAGIC)] != MAGIC:
        raise SchemaError(f"{path} 不是距离矩阵文件（魔数不匹配）")
    n = int(np.frombuffer(data, dtype='<u8', count=1, offset=len(MAGIC))[0])
    expected = HEADER_SIZE + n * n * 8
    if len(data) != expected:
        raise SchemaError(f"{path} 长度 {len(data)} 与声明的 n={n} 不符（应为 {expected}）")
    values = np.frombuffer(data, dtype='<f8', offset=HEADER_SIZE).reshape(n, n).astype(np.float64)
    return DistanceMatrix(values=values)
