"""
纤维距离模块
最小平均直接-翻转距离（MDF）及成对距离矩阵、medoid 计算
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from fibercluster.tractogram.fiber import Fiber, fiber_points, fibers_to_array
from fibercluster.utils.errors import InvalidInputError, InvariantError

logger = logging.getLogger(__name__)


@dataclass
class DistanceMatrix:
    """对称、对角为0的 n×n 距离矩阵（mm）"""

    values: np.ndarray

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


def mdf_points(a: np.ndarray, b: np.ndarray) -> float:
    """两组已对齐点数的坐标之间的 MDF"""
    if a.shape != b.shape:
        raise InvariantError(f"MDF 输入点数不一致: {a.shape} vs {b.shape}")
    direct = np.linalg.norm(a - b, axis=1).mean()
    flipped = np.linalg.norm(a - b[::-1], axis=1).mean()
    return float(min(direct, flipped))


def mdf_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    逐对计算 MDF

    Args:
        a: (N, n_p, 3)
        b: (N, n_p, 3)

    Returns:
        (N,) 距离
    """
    if a.shape != b.shape:
        raise InvariantError(f"MDF 输入点数不一致: {a.shape} vs {b.shape}")
    direct = np.linalg.norm(a - b, axis=2).mean(axis=1)
    flipped = np.linalg.norm(a - b[:, ::-1], axis=2).mean(axis=1)
    return np.minimum(direct, flipped)


def mdf(a: Fiber, b: Fiber, n_p: int) -> float:
    """
    最小平均直接-翻转距离

    点数与 n_p 不同时先按弧长重采样

    Args:
        a: 纤维
        b: 纤维
        n_p: 点数

    Returns:
        距离（mm）
    """
    return mdf_points(fiber_points(a, n_p), fiber_points(b, n_p))


def mean_closest_point(a: np.ndarray, b: np.ndarray) -> float:
    """对称的平均最近点距离"""
    d = cdist(a, b)
    return float((d.min(axis=1).mean() + d.min(axis=0).mean()) / 2.0)


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """对称 Hausdorff 距离"""
    d = cdist(a, b)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


# 可选的纤维距离，MDF 是默认且唯一用于伪标签的实现
DISTANCE_KINDS: Dict[str, Callable[[np.ndarray, np.ndarray], float]] = {
    'mdf': mdf_points,
    'mean_closest_point': mean_closest_point,
    'hausdorff': hausdorff,
}


def pairwise_distance_points(points: np.ndarray, kind: str = 'mdf') -> DistanceMatrix:
    """
    已重采样坐标 (N, n_p, 3) 的成对距离矩阵

    每个无序对只计算一次，再镜像写入
    """
    if kind not in DISTANCE_KINDS:
        raise InvalidInputError(f"未知的距离类型: {kind}，可选 {sorted(DISTANCE_KINDS)}")
    n = points.shape[0]
    if n < 1:
        raise InvalidInputError("至少需要 1 根纤维")
    values = np.zeros((n, n), dtype=np.float64)

    if kind == 'mdf':
        flipped = points[:, ::-1]
        for i in range(n - 1):
            rest = points[i + 1:]
            direct = np.linalg.norm(rest - points[i], axis=2).mean(axis=1)
            flip = np.linalg.norm(flipped[i + 1:] - points[i], axis=2).mean(axis=1)
            row = np.minimum(direct, flip)
            values[i, i + 1:] = row
            values[i + 1:, i] = row
    else:
        fn = DISTANCE_KINDS[kind]
        for i in range(n - 1):
            for j in range(i + 1, n):
                values[i, j] = values[j, i] = fn(points[i], points[j])

    return DistanceMatrix(values=values)


def pairwise_mdf(fibers: Sequence[Fiber], n_p: int, kind: str = 'mdf') -> DistanceMatrix:
    """纤维列表的成对距离矩阵"""
    if len(fibers) < 1:
        raise InvalidInputError("至少需要 1 根纤维")
    return pairwise_distance_points(fibers_to_array(fibers, n_p), kind=kind)


def medoid_index(m: DistanceMatrix, members: Iterable[int]) -> int:
    """
    成员中到其他成员平均距离最小者；并列时取较小索引

    Args:
        m: 距离矩阵
        members: 成员索引集合

    Returns:
        medoid 的全局索引
    """
    idx = np.array(sorted(set(int(i) for i in members)), dtype=np.int64)
    if idx.size == 0:
        raise InvalidInputError("成员集合为空，无法计算 medoid")
    if idx[0] < 0 or idx[-1] >= m.n:
        raise InvalidInputError(f"成员索引越界: 矩阵大小 {m.n}")
    if idx.size == 1:
        return int(idx[0])
    sub = m.values[np.ix_(idx, idx)]
    mean_dist = sub.sum(axis=1) / (idx.size - 1)
    # argmin 返回首个最小值，成员已升序排列
    return int(idx[int(np.argmin(mean_dist))])


def pair_distances(a: np.ndarray, b: np.ndarray, kind: str = 'mdf') -> np.ndarray:
    """逐对距离 (N,)；MDF 走向量化实现"""
    if kind not in DISTANCE_KINDS:
        raise InvalidInputError(f"未知的距离类型: {kind}，可选 {sorted(DISTANCE_KINDS)}")
    if kind == 'mdf':
        return mdf_batch(a, b)
    fn = DISTANCE_KINDS[kind]
    return np.array([fn(x, y) for x, y in zip(a, b)], dtype=np.float64)
