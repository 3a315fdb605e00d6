"""
簇的解剖画像
解剖区域画像（TAP）：被超过 40% 纤维经过的区域
皮层表面画像（TSP）：每个皮层分区上的端点占比
"""

from collections import Counter
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from fibercluster.dfc.assignment import UNLABELED
from fibercluster.tractogram.fiber import Fiber, parcel_array
from fibercluster.utils.errors import InvalidInputError

# 区域被超过该比例的纤维经过才计入 TAP（严格大于）
TAP_FRACTION = 0.4


def tract_anatomical_profile(regions: Sequence[Iterable[int]]) -> frozenset:
    """一组纤维的 TAP；空组返回空集"""
    size = len(regions)
    if size == 0:
        return frozenset()
    counts = Counter(label for r in regions for label in set(r) if label != UNLABELED)
    return frozenset(label for label, c in counts.items() if c / size > TAP_FRACTION)


def tract_surface_profile(parcels: np.ndarray) -> Dict[int, float]:
    """一组纤维 (m, 2) 端点分区的 TSP；分母为全部端点数 2m（含未标记端点）"""
    parcels = np.asarray(parcels, dtype=np.int64).reshape(-1, 2)
    size = parcels.shape[0]
    if size == 0:
        return {}
    counts = Counter(int(p) for p in parcels.ravel() if p != UNLABELED)
    return {label: c / (2.0 * size) for label, c in sorted(counts.items())}


def profiles_from_arrays(labels: np.ndarray, regions: Sequence[Iterable[int]], parcels: np.ndarray,
                         n_c: int) -> Tuple[List[frozenset], List[Dict[int, float]]]:
    """
    按硬标签计算每个簇的 (TAP, TSP)

    Args:
        labels: (N,) 簇号，范围 [0, n_c)
        regions: 每根纤维的区域集合
        parcels: (N, 2) 端点分区
        n_c: 簇数

    Returns:
        (tap 列表, tsp 列表)，空簇得到空画像
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_c):
        raise InvalidInputError(f"簇号超出范围 [0, {n_c})")
    parcels = np.asarray(parcels, dtype=np.int64).reshape(-1, 2)

    tap: List[frozenset] = []
    tsp: List[Dict[int, float]] = []
    for j in range(n_c):
        members = np.flatnonzero(labels == j)
        tap.append(tract_anatomical_profile([regions[i] for i in members]))
        tsp.append(tract_surface_profile(parcels[members]))
    return tap, tsp


def compute_profiles(assignments: Sequence[int], fibers: Sequence[Fiber],
                     n_c: Optional[int] = None) -> Tuple[List[frozenset], List[Dict[int, float]]]:
    """
    由硬标签和纤维计算每个簇的 TAP / TSP

    n_c 缺省时取 max(label) + 1
    """
    labels = np.asarray(assignments, dtype=np.int64)
    if len(labels) != len(fibers):
        raise InvalidInputError(f"标签数 {len(labels)} 与纤维数 {len(fibers)} 不一致")
    if n_c is None:
        n_c = int(labels.max()) + 1 if labels.size else 0
    return profiles_from_arrays(labels, [f.region_set for f in fibers], parcel_array(fibers), n_c)
