"""
簇自适应的离群纤维剔除
T_c = m_c − n·s_c，m_c / s_c 为簇内最大分配概率的均值和总体标准差
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from fibercluster.utils.errors import InvalidInputError

logger = logging.getLogger(__name__)

# (m_c, s_c, T_c)，各为 (n_c,)
Thresholds = Tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass
class ParcellationResult:
    """
    单个被试的分区结果

    Args:
        labels: (N,) 簇号
        q_max: (N,) 最大分配概率
        outlier: (N,) 是否被剔除
        count_before / count_after: (n_c,) 剔除前后的簇大小
        mean / std / threshold: (n_c,) m_c, s_c, T_c
        config: 推理参数回显
    """

    labels: np.ndarray
    q_max: np.ndarray
    outlier: np.ndarray
    count_before: np.ndarray
    count_after: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    threshold: np.ndarray
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_c(self) -> int:
        return int(self.count_before.size)

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def kept_index(self) -> np.ndarray:
        return np.flatnonzero(~self.outlier)

    @property
    def removed_fraction(self) -> float:
        return float(self.outlier.mean()) if len(self) else 0.0

    def fiber_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'index': np.arange(len(self)),
            'cluster': self.labels.astype(np.int64),
            'q': self.q_max.astype(np.float64),
            'outlier': self.outlier.astype(bool),
        })

    def cluster_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'cluster': np.arange(self.n_c),
            'count_before': self.count_before,
            'count_after': self.count_after,
            'mean': self.mean,
            'std': self.std,
            'threshold': self.threshold,
        })


def _check_inputs(labels: np.ndarray, q_max: np.ndarray, n_c: int) -> Tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels, dtype=np.int64)
    q_max = np.asarray(q_max, dtype=np.float64)
    if labels.shape != q_max.shape:
        raise InvalidInputError(f"labels 与 q_max 长度不一致: {labels.shape} vs {q_max.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_c):
        raise InvalidInputError(f"簇号超出范围 [0, {n_c})")
    return labels, q_max


def outlier_thresholds(labels: np.ndarray, q_max: np.ndarray, n: float, n_c: int) -> Thresholds:
    """
    每个簇的 (m_c, s_c, T_c)

    空簇为 (0, 0, 0)；簇内概率完全相同时 s_c 取 0、m_c 取该值，保证不剔除任何纤维
    """
    if n < 0:
        raise InvalidInputError(f"离群阈值系数 n 必须非负，实际 {n}")
    labels, q_max = _check_inputs(labels, q_max, n_c)

    mean = np.zeros(n_c, dtype=np.float64)
    std = np.zeros(n_c, dtype=np.float64)
    for c in range(n_c):
        values = q_max[labels == c]
        if values.size == 0:
            continue
        if np.all(values == values[0]):
            mean[c] = values[0]
            continue
        mean[c] = values.mean()
        std[c] = values.std()
    return mean, std, mean - n * std


def _result(labels: np.ndarray, q_max: np.ndarray, outlier: np.ndarray, thresholds: Thresholds,
            config: Optional[Dict[str, Any]]) -> ParcellationResult:
    mean, std, threshold = thresholds
    n_c = threshold.size
    before = np.bincount(labels, minlength=n_c)
    after = np.bincount(labels[~outlier], minlength=n_c)
    result = ParcellationResult(
        labels=labels, q_max=q_max, outlier=outlier,
        count_before=before, count_after=after,
        mean=mean, std=std, threshold=threshold,
        config=dict(config or {}),
    )
    logger.info("离群剔除: %d / %d 根纤维被剔除", int(outlier.sum()), len(result))
    return result


def remove_outliers(labels: np.ndarray, q_max: np.ndarray, thresholds: Thresholds,
                    config: Optional[Dict[str, Any]] = None) -> ParcellationResult:
    """q_max < T_c（严格小于）的纤维标记为离群"""
    threshold = np.asarray(thresholds[2], dtype=np.float64)
    labels, q_max = _check_inputs(labels, q_max, threshold.size)
    outlier = q_max < threshold[labels] if labels.size else np.zeros(0, dtype=bool)
    return _result(labels, q_max, outlier, thresholds, config)


def remove_outliers_absolute(labels: np.ndarray, q_max: np.ndarray, threshold: float, n_c: int,
                             config: Optional[Dict[str, Any]] = None) -> ParcellationResult:
    """
    全局固定阈值的剔除（对照方法）：q_max < threshold 的纤维标记为离群

    簇统计量仍按自适应规则（n=0）记录，阈值列为固定值
    """
    if not 0.0 <= threshold <= 1.0:
        raise InvalidInputError(f"绝对阈值必须在 [0, 1] 内，实际 {threshold}")
    mean, std, _ = outlier_thresholds(labels, q_max, 0.0, n_c)
    labels, q_max = _check_inputs(labels, q_max, n_c)
    outlier = q_max < threshold
    return _result(labels, q_max, outlier, (mean, std, np.full(n_c, float(threshold))), config)
