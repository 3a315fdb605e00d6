"""
新被试的纤维分区
嵌入 → 软分配（融合解剖信息或仅几何）→ 取最大概率的簇 → 簇自适应离群剔除
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from fibercluster.api.atlas import Atlas
from fibercluster.dfc.assignment import anatomy_weights_for, check_anatomy_mode, hard_labels
from fibercluster.dfc.losses import forward_assignment
from fibercluster.dfc.pool import pool_from_fibers
from fibercluster.encoder.network import SiameseEncoder
from fibercluster.parcellation.outliers import (
    ParcellationResult,
    outlier_thresholds,
    remove_outliers,
    remove_outliers_absolute,
)
from fibercluster.tractogram.fiber import Tractogram
from fibercluster.utils.errors import InvalidInputError

logger = logging.getLogger(__name__)


@dataclass
class ParcellationConfig:
    """
    推理参数

    Args:
        outlier_sigma: 阈值系数 n（文献取 0.7 / 0.83 / 0.85）
        anatomy: full 使用区域与端点分区，regions 只用区域，none 只用嵌入距离
        absolute_threshold: 设置后改用全局固定阈值剔除（对照方法）
    """

    outlier_sigma: float = 0.7
    anatomy: str = 'full'
    absolute_threshold: Optional[float] = None

    def validate(self) -> None:
        if self.outlier_sigma < 0:
            raise InvalidInputError(f"outlier_sigma 必须非负，实际 {self.outlier_sigma}")
        check_anatomy_mode(self.anatomy)
        if self.absolute_threshold is not None and not 0.0 <= self.absolute_threshold <= 1.0:
            raise InvalidInputError(f"absolute_threshold 必须在 [0, 1] 内，实际 {self.absolute_threshold}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def soft_assignments(t: Tractogram, atlas: Atlas, anatomy: str = 'full') -> np.ndarray:
    """被试所有纤维的软分配矩阵 (N, n_c)"""
    atlas.validate()
    ecfg = atlas.encoder_config
    if len(t) == 0:
        return np.zeros((0, atlas.n_c), dtype=np.float64)

    pool = pool_from_fibers(t.fibers, ecfg.n_p)
    z = SiameseEncoder(ecfg).embed(pool.points, atlas.params)
    weights = anatomy_weights_for(atlas.model, pool.regions, pool.parcels, anatomy)
    q, _ = forward_assignment(z, atlas.model.centroids, weights)
    return q


def infer_assignments(t: Tractogram, atlas: Atlas,
                      pcfg: Optional[ParcellationConfig] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    每根纤维的簇号与最大分配概率

    簇号即图谱中的簇索引，不同被试之间天然对应

    Returns:
        (labels (N,), q_max (N,))
    """
    pcfg = pcfg or ParcellationConfig()
    pcfg.validate()
    q = soft_assignments(t, atlas, pcfg.anatomy)
    if q.shape[0] == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64)
    labels, q_max = hard_labels(q)
    return labels.astype(np.int64), q_max


def parcellate(t: Tractogram, atlas: Atlas, pcfg: Optional[ParcellationConfig] = None) -> ParcellationResult:
    """
    完整推理流程：分配 + 离群剔除

    阈值按该被试自身的分配结果计算，不存入图谱
    """
    pcfg = pcfg or ParcellationConfig()
    labels, q_max = infer_assignments(t, atlas, pcfg)
    config = pcfg.to_dict()
    if pcfg.absolute_threshold is not None:
        result = remove_outliers_absolute(labels, q_max, pcfg.absolute_threshold, atlas.n_c, config)
    else:
        thresholds = outlier_thresholds(labels, q_max, pcfg.outlier_sigma, atlas.n_c)
        result = remove_outliers(labels, q_max, thresholds, config)
    logger.info("被试 %s: %d 根纤维，%d 个簇非空，剔除 %.2f%%",
                t.subject_id or '-', len(result), int((result.count_after > 0).sum()),
                result.removed_fraction * 100)
    return result
