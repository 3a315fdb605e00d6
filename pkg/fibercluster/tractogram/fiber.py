"""
纤维数据模型
定义 Fiber / Tractogram，提供重采样、反转、长度过滤等纯函数
"""

from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from fibercluster.utils.errors import InvalidInputError


@dataclass(frozen=True, eq=False)
class Fiber:
    """
    单根纤维：有序三维折线 + 解剖区域集合 + 两端皮层分区标签

    Args:
        points: (n, 3) 坐标数组，单位 mm，n >= 2
        region_set: 经过的解剖区域标签集合
        endpoint_parcels: 两个端点的皮层分区标签，0 表示未标记
        source_id: 可选的来源索引
    """

    points: np.ndarray
    region_set: FrozenSet[int] = field(default_factory=frozenset)
    endpoint_parcels: Tuple[int, int] = (0, 0)
    source_id: Optional[int] = None

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise InvalidInputError(f"纤维坐标必须是 (n, 3) 数组，实际形状 {points.shape}")
        if points.shape[0] < 2:
            raise InvalidInputError("纤维至少需要 2 个点")
        if not np.all(np.isfinite(points)):
            raise InvalidInputError("纤维坐标包含非有限值")
        points.setflags(write=False)

        regions = frozenset(int(r) for r in self.region_set)
        if any(r < 0 for r in regions):
            raise InvalidInputError(f"区域标签必须非负: {sorted(regions)}")

        parcels = tuple(int(p) for p in self.endpoint_parcels)
        if len(parcels) != 2 or any(p < 0 for p in parcels):
            raise InvalidInputError(f"端点分区必须是两个非负整数: {self.endpoint_parcels}")

        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'region_set', regions)
        object.__setattr__(self, 'endpoint_parcels', parcels)

    @property
    def n_points(self) -> int:
        return int(self.points.shape[0])

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, Fiber):
            return NotImplemented
        return (
            np.array_equal(self.points, other.points)
            and self.region_set == other.region_set
            and self.endpoint_parcels == other.endpoint_parcels
            and self.source_id == other.source_id
        )

    __hash__ = None


@dataclass
class Tractogram:
    """
    一个被试的全脑纤维集合

    Args:
        fibers: 纤维列表
        subject_id: 被试ID
        truth_labels: 合成数据的真值束编号（可选，长度与 fibers 相同）
    """

    fibers: List[Fiber]
    subject_id: str = ''
    truth_labels: Optional[List[int]] = None

    def __post_init__(self):
        self.fibers = list(self.fibers)
        if self.truth_labels is not None:
            self.truth_labels = [int(t) for t in self.truth_labels]
            if len(self.truth_labels) != len(self.fibers):
                raise InvalidInputError(
                    f"truth_labels 长度 {len(self.truth_labels)} 与纤维数 {len(self.fibers)} 不一致"
                )

    def __len__(self) -> int:
        return len(self.fibers)


def arc_length(points: np.ndarray) -> float:
    """折线总弧长（mm）"""
    return float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())


def resample_points(points: np.ndarray, n_p: int) -> np.ndarray:
    """
    按弧长均匀重采样折线坐标

    Args:
        points: (n, 3) 坐标
        n_p: 目标点数

    Returns:
        (n_p, 3) 坐标，首末点与输入端点相同
    """
    if n_p < 2:
        raise InvalidInputError(f"重采样点数必须 >= 2，实际 {n_p}")
    points = np.asarray(points, dtype=np.float64)
    if not np.all(np.isfinite(points)):
        raise InvalidInputError("纤维坐标包含非有限值")

    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cumulative = np.concatenate(([0.0], np.cumsum(seg)))
    total = cumulative[-1]
    if total == 0.0:
        # 退化纤维：所有点重合
        return np.repeat(points[:1], n_p, axis=0)

    targets = np.linspace(0.0, total, n_p)
    out = np.empty((n_p, 3), dtype=np.float64)
    for axis in range(3):
        out[:, axis] = np.interp(targets, cumulative, points[:, axis])
    out[0] = points[0]
    out[-1] = points[-1]
    return out


def resample_fiber(f: Fiber, n_p: int) -> Fiber:
    """重采样为 n_p 个点；区域集合和端点分区原样保留"""
    return Fiber(
        points=resample_points(f.points, n_p),
        region_set=f.region_set,
        endpoint_parcels=f.endpoint_parcels,
        source_id=f.source_id,
    )


def reverse_fiber(f: Fiber) -> Fiber:
    """点序反转，端点分区随之交换"""
    return Fiber(
        points=f.points[::-1].copy(),
        region_set=f.region_set,
        endpoint_parcels=(f.endpoint_parcels[1], f.endpoint_parcels[0]),
        source_id=f.source_id,
    )


def filter_by_length(t: Tractogram, min_len: float) -> Tractogram:
    """
    删除弧长小于 min_len 的纤维，保持原有顺序

    Args:
        t: 纤维集合
        min_len: 最小弧长（mm）

    Returns:
        过滤后的新纤维集合（truth_labels 同步过滤）
    """
    if min_len < 0:
        raise InvalidInputError(f"min_len 必须非负，实际 {min_len}")
    keep = [i for i, f in enumerate(t.fibers) if arc_length(f.points) >= min_len]
    truth = None if t.truth_labels is None else [t.truth_labels[i] for i in keep]
    return Tractogram(fibers=[t.fibers[i] for i in keep], subject_id=t.subject_id, truth_labels=truth)


def fiber_points(f: Fiber, n_p: int) -> np.ndarray:
    """n_p 个点的坐标；点数已等于 n_p 时原样使用，否则按弧长重采样"""
    if f.n_points == n_p:
        return f.points
    return resample_points(f.points, n_p)


def fibers_to_array(fibers: Sequence[Fiber], n_p: int) -> np.ndarray:
    """把纤维列表重采样并堆叠成 (N, n_p, 3) 数组"""
    out = np.empty((len(fibers), n_p, 3), dtype=np.float64)
    for i, f in enumerate(fibers):
        out[i] = fiber_points(f, n_p)
    return out


def parcel_array(fibers: Iterable[Fiber]) -> np.ndarray:
    """端点分区 (N, 2) 整数数组"""
    rows = [f.endpoint_parcels for f in fibers]
    return np.array(rows, dtype=np.int64).reshape(-1, 2)


def validate_tractogram(t: Tractogram, min_len: float = 0.0) -> Dict[str, Any]:
    """
    检查纤维集合的完整性

    Args:
        t: 纤维集合
        min_len: 低于此弧长的纤维记为警告

    Returns:
        验证结果字典
        {
            'is_valid': 是否可用于训练/推理,
            'errors': 错误列表,
            'warnings': 警告列表
        }
    """
    validation_result = {
        'is_valid': True,
        'errors': [],
        'warnings': []
    }

    if len(t.fibers) == 0:
        validation_result['is_valid'] = False
        validation_result['errors'].append("纤维集合为空")
        return validation_result

    short = sum(1 for f in t.fibers if arc_length(f.points) < min_len)
    if short > 0:
        validation_result['warnings'].append(f"发现 {short} 根短于 {min_len} mm 的纤维")

    unlabeled = sum(1 for f in t.fibers if not (f.region_set - {0}))
    if unlabeled > 0:
        validation_result['warnings'].append(f"发现 {unlabeled} 根没有解剖区域标签的纤维")

    no_parcel = sum(1 for f in t.fibers if f.endpoint_parcels == (0, 0))
    if no_parcel > 0:
        validation_result['warnings'].append(f"发现 {no_parcel} 根两端均无皮层分区的纤维")

    return validation_result
