"""
簇的解剖一致性分析模块
WMPG：被检出（> 20 根纤维）的图谱簇比例
TAPC：纤维区域集合与所在簇 TAP 的 Dice 均值
TSPC：簇 TSP 各分区占比的均值
"""

from typing import Dict, Sequence, Tuple

import numpy as np

from fibercluster.dfc.assignment import dice_regions
from fibercluster.dfc.profiles import tract_anatomical_profile, tract_surface_profile
from fibercluster.tractogram.fiber import Fiber, parcel_array
from fibercluster.utils.errors import InvalidInputError

# 簇大小严格超过该值才算被检出
DETECTION_MIN_FIBERS = 20


def _check(fibers: Sequence[Fiber], labels: Sequence[int]) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size != len(fibers):
        raise InvalidInputError(f"标签数 {labels.size} 与纤维数 {len(fibers)} 不一致")
    return labels


def wmpg(labels: Sequence[int], n_c: int) -> float:
    """
    被检出簇占图谱簇数的比例

    Args:
        labels: 保留纤维（离群剔除后）的簇号
        n_c: 图谱簇数，空簇计入分母
    """
    if n_c < 1:
        raise InvalidInputError(f"n_c 必须 >= 1，实际 {n_c}")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        return 0.0
    if labels.min() < 0 or labels.max() >= n_c:
        raise InvalidInputError(f"簇号超出范围 [0, {n_c})")
    sizes = np.bincount(labels, minlength=n_c)
    return float((sizes > DETECTION_MIN_FIBERS).sum() / n_c)


def tapc_per_cluster(fibers: Sequence[Fiber], labels: Sequence[int]) -> Dict[int, float]:
    """每个非空簇的 TAPC：由成员重新计算 TAP，再取成员 Dice 的均值"""
    labels = _check(fibers, labels)
    scores = {}
    for c in np.unique(labels):
        members = [fibers[i].region_set for i in np.flatnonzero(labels == c)]
        tap = tract_anatomical_profile(members)
        scores[int(c)] = float(np.mean([dice_regions(r, tap) for r in members]))
    return scores


def tspc_per_cluster(fibers: Sequence[Fiber], labels: Sequence[int]) -> Dict[int, float]:
    """每个非空簇的 TSPC：TSP 各分区占比的均值，没有已标记端点时为 0"""
    labels = _check(fibers, labels)
    parcels = parcel_array(fibers)
    scores = {}
    for c in np.unique(labels):
        tsp = tract_surface_profile(parcels[labels == c])
        scores[int(c)] = float(np.mean(list(tsp.values()))) if tsp else 0.0
    return scores


def _mean_over_clusters(scores: Dict[int, float]) -> float:
    if not scores:
        raise InvalidInputError("至少需要 1 个非空簇")
    return float(np.mean(list(scores.values())))


def tapc(fibers: Sequence[Fiber], labels: Sequence[int]) -> float:
    return _mean_over_clusters(tapc_per_cluster(fibers, labels))


def tspc(fibers: Sequence[Fiber], labels: Sequence[int]) -> float:
    return _mean_over_clusters(tspc_per_cluster(fibers, labels))


def cluster_sizes(labels: Sequence[int], n_c: int) -> Tuple[np.ndarray, np.ndarray]:
    """(每簇大小, 是否被检出)"""
    sizes = np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_c)
    return sizes, sizes > DETECTION_MIN_FIBERS
