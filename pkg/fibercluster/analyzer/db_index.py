"""
Davies-Bouldin 指数分析模块
簇中心取 medoid 纤维，簇内离散度为成员到 medoid 的平均距离，越小越好
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence

import numpy as np

from fibercluster.distance.mdf import DISTANCE_KINDS, medoid_index, pairwise_distance_points
from fibercluster.tractogram.fiber import Fiber, fibers_to_array
from fibercluster.utils.errors import InvalidInputError

logger = logging.getLogger(__name__)


@dataclass
class DBResult:
    """DB 指数及每个非空簇的分量"""

    db: float
    per_cluster: List[Dict[str, Any]] = field(default_factory=list)


def analyze_db(fibers: Sequence[Fiber], labels: Sequence[int], n_p: int, kind: str = 'mdf') -> DBResult:
    """
    DB = (1/n) Σ_i max_{j≠i} (α_i + α_j) / d(c_i, c_j)

    Args:
        fibers: 纤维
        labels: 每根纤维的簇号（空簇不计入 n）
        n_p: 重采样点数
        kind: 纤维距离类型

    Returns:
        DBResult；medoid 纤维几何重合（d = 0）时对应比值记为 +inf
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size != len(fibers):
        raise InvalidInputError(f"标签数 {labels.size} 与纤维数 {len(fibers)} 不一致")
    clusters = np.unique(labels)
    if clusters.size < 2:
        raise InvalidInputError(f"DB 指数至少需要 2 个非空簇，实际 {clusters.size}")

    if kind not in DISTANCE_KINDS:
        raise InvalidInputError(f"未知的距离类型: {kind}，可选 {sorted(DISTANCE_KINDS)}")
    distance = DISTANCE_KINDS[kind]
    points = fibers_to_array(fibers, n_p)
    medoids: List[int] = []
    alphas: List[float] = []
    for c in clusters:
        members = np.flatnonzero(labels == c)
        sub = pairwise_distance_points(points[members], kind=kind)
        local = medoid_index(sub, range(members.size))
        medoids.append(int(members[local]))
        alphas.append(float(sub.values[local].mean()))

    n = clusters.size
    ratios = np.full(n, -np.inf)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            d = distance(points[medoids[i]], points[medoids[j]])
            if d == 0:
                logger.warning("簇 %d 与簇 %d 的 medoid 纤维重合，DB 比值记为 +inf", clusters[i], clusters[j])
                ratio = np.inf
            else:
                ratio = (alphas[i] + alphas[j]) / d
            ratios[i] = max(ratios[i], ratio)

    per_cluster = [
        {
            'cluster': int(c),
            'size': int((labels == c).sum()),
            'medoid': medoids[i],
            'alpha': alphas[i],
            'ratio': float(ratios[i]),
        }
        for i, c in enumerate(clusters)
    ]
    return DBResult(db=float(ratios.mean()), per_cluster=per_cluster)


def db_index(fibers: Sequence[Fiber], labels: Sequence[int], n_p: int) -> float:
    """基于 MDF 的 DB 指数"""
    return analyze_db(fibers, labels, n_p).db
