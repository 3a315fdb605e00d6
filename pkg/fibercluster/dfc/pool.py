"""
训练样本池
把多个被试的纤维合并、抽样并重采样为定长数组，附带解剖区域与端点分区信息
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from fibercluster.tractogram.fiber import Fiber, Tractogram, fibers_to_array, parcel_array
from fibercluster.utils.errors import InvalidInputError

logger = logging.getLogger(__name__)


@dataclass
class FiberPool:
    """
    Args:
        points: (N, n_p, 3) 重采样坐标
        regions: 每根纤维的区域集合（已去掉标签0）
        parcels: (N, 2) 端点分区
        truth: 真值标签（所有被试都有真值时才保留）
    """

    points: np.ndarray
    regions: List[frozenset]
    parcels: np.ndarray
    truth: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.points.shape[0])


def pool_from_fibers(fibers: Sequence[Fiber], n_p: int, truth: Optional[Sequence[int]] = None) -> FiberPool:
    return FiberPool(
        points=fibers_to_array(fibers, n_p),
        regions=[f.region_set - {0} for f in fibers],
        parcels=parcel_array(fibers),
        truth=None if truth is None else np.asarray(truth, dtype=np.int64),
    )


def build_pool(tractograms: Sequence[Tractogram], n_p: int, fibers_per_subject: Optional[int] = None,
               seed: int = 0) -> FiberPool:
    """
    合并训练被试的纤维

    Args:
        tractograms: 被试纤维集合
        n_p: 重采样点数
        fibers_per_subject: 每个被试随机抽取的纤维数（None 表示全部）
        seed: 抽样种子

    Returns:
        FiberPool
    """
    rng = np.random.default_rng(int(seed))
    fibers: List[Fiber] = []
    truth: List[int] = []
    has_truth = all(t.truth_labels is not None for t in tractograms)

    for t in tractograms:
        index = np.arange(len(t))
        if fibers_per_subject is not None and fibers_per_subject < len(t):
            index = np.sort(rng.choice(len(t), size=int(fibers_per_subject), replace=False))
        fibers.extend(t.fibers[i] for i in index)
        if has_truth:
            truth.extend(t.truth_labels[i] for i in index)
        logger.info("被试 %s: 取 %d / %d 根纤维", t.subject_id or '-', len(index), len(t))

    if len(fibers) == 0:
        raise InvalidInputError("训练样本池为空")
    return pool_from_fibers(fibers, n_p, truth if has_truth else None)
