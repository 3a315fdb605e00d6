"""
聚类层：软标签分配
Student-t 核（仅几何）与融合解剖信息的加权版本，以及 DEC 目标分布
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from fibercluster.utils.errors import InvalidInputError

# 区域 / 分区标签 0 表示未标记，不参与任何 profile 和 Dice 计算
UNLABELED = 0
# 解剖信息使用方式：none 只用嵌入距离，regions 只用区域 Dice（D^c 视为 0），full 两者都用
ANATOMY_MODES = ('none', 'regions', 'full')


@dataclass
class ClusterModel:
    """
    聚类层参数与簇的解剖画像

    Args:
        centroids: (n_c, n_e) 质心 μ
        tap: 每个簇的解剖区域画像（被超过 40% 纤维经过的区域集合）
        tsp: 每个簇的皮层表面画像（分区 -> 端点占比）
    """

    centroids: np.ndarray
    tap: List[frozenset] = field(default_factory=list)
    tsp: List[Dict[int, float]] = field(default_factory=list)

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if not self.tap:
            self.tap = [frozenset() for _ in range(self.n_c)]
        if not self.tsp:
            self.tsp = [{} for _ in range(self.n_c)]
        self.validate()

    @property
    def n_c(self) -> int:
        return int(self.centroids.shape[0])

    def validate(self) -> None:
        if self.centroids.ndim != 2 or self.n_c < 1:
            raise InvalidInputError(f"质心必须是 (n_c, n_e) 矩阵，实际形状 {self.centroids.shape}")
        if not np.all(np.isfinite(self.centroids)):
            raise InvalidInputError("质心包含非有限值")
        if len(self.tap) != self.n_c or len(self.tsp) != self.n_c:
            raise InvalidInputError(
                f"画像数量与簇数不一致: tap={len(self.tap)}, tsp={len(self.tsp)}, n_c={self.n_c}"
            )
        for profile in self.tsp:
            if any(not 0.0 <= v <= 1.0 for v in profile.values()):
                raise InvalidInputError("tsp 占比必须在 [0, 1] 内")

    def anatomy_factors(self, regions: Sequence[Iterable[int]],
                        parcels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """批量计算 (D^a, D^c)，形状均为 (N, n_c)"""
        return region_dice_matrix(regions, self.tap), endpoint_agreement_matrix(parcels, self.tsp)


def dice_regions(fiber_regions: Iterable[int], tap_j: Iterable[int]) -> float:
    """
    区域集合的 Dice 系数 2|A∩B| / (|A|+|B|)；两者都为空时为 0
    """
    a = set(fiber_regions) - {UNLABELED}
    b = set(tap_j) - {UNLABELED}
    denom = len(a) + len(b)
    if denom == 0:
        return 0.0
    return 2.0 * len(a & b) / denom


def endpoint_agreement(fiber_parcels: Sequence[int], cluster_endpoint_parcels: Sequence[Sequence[int]]) -> float:
    """
    簇内端点落在该纤维端点分区集合 E 中的比例

    Args:
        fiber_parcels: 纤维的两个端点分区
        cluster_endpoint_parcels: 簇内每根纤维的端点分区对

    Returns:
        D^c；E 为空时为 0
    """
    pairs = list(cluster_endpoint_parcels)
    if not pairs:
        raise InvalidInputError("簇为空，无法计算端点一致性")
    endpoints = {int(p) for p in fiber_parcels} - {UNLABELED}
    if not endpoints:
        return 0.0
    hits = sum(1 for pair in pairs for p in pair if int(p) in endpoints)
    return hits / (2.0 * len(pairs))


def region_dice_matrix(regions: Sequence[Iterable[int]], tap: Sequence[Iterable[int]]) -> np.ndarray:
    """批量区域 Dice (N, n_c)"""
    fiber_sets = [set(r) - {UNLABELED} for r in regions]
    tap_sets = [set(t) - {UNLABELED} for t in tap]
    vocab = sorted(set().union(*tap_sets)) if tap_sets else []
    position = {label: i for i, label in enumerate(vocab)}

    fiber_hot = np.zeros((len(fiber_sets), len(vocab)), dtype=np.float64)
    for i, labels in enumerate(fiber_sets):
        cols = [position[label] for label in labels if label in position]
        fiber_hot[i, cols] = 1.0
    tap_hot = np.zeros((len(tap_sets), len(vocab)), dtype=np.float64)
    for j, labels in enumerate(tap_sets):
        tap_hot[j, [position[label] for label in labels]] = 1.0

    intersection = fiber_hot @ tap_hot.T
    sizes = (np.array([len(s) for s in fiber_sets], dtype=np.float64)[:, None]
             + np.array([len(s) for s in tap_sets], dtype=np.float64)[None, :])
    safe = np.where(sizes > 0, sizes, 1.0)
    return np.where(sizes > 0, 2.0 * intersection / safe, 0.0)


def endpoint_agreement_matrix(parcels: np.ndarray, tsp: Sequence[Dict[int, float]]) -> np.ndarray:
    """
    批量端点一致性 (N, n_c)

    D^c_ij = Σ_{e ∈ E_i} tsp_j[e]，与按端点计数的定义等价
    """
    parcels = np.asarray(parcels, dtype=np.int64).reshape(-1, 2)
    vocab = sorted(set().union(*[set(p) for p in tsp]) - {UNLABELED}) if tsp else []
    position = {label: i for i, label in enumerate(vocab)}

    fiber_hot = np.zeros((parcels.shape[0], len(vocab)), dtype=np.float64)
    for i, (a, b) in enumerate(parcels):
        for label in {int(a), int(b)} - {UNLABELED}:
            if label in position:
                fiber_hot[i, position[label]] = 1.0
    profile = np.zeros((len(tsp), len(vocab)), dtype=np.float64)
    for j, fractions in enumerate(tsp):
        for label, value in fractions.items():
            if label != UNLABELED:
                profile[j, position[label]] = value
    return fiber_hot @ profile.T


def squared_distances(z: np.ndarray, centroids: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """返回 (z_i − μ_j 差 (N, n_c, n_e), 平方距离 (N, n_c))"""
    diff = z[:, None, :] - centroids[None, :, :]
    return diff, (diff * diff).sum(axis=2)


def student_t(dist_sq: np.ndarray, weights: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Student-t 核软分配

    Args:
        dist_sq: (N, n_c) 平方距离
        weights: (N, n_c) 解剖权重 (1 − D^a)(1 − D^c)，None 表示全1

    Returns:
        (q, 未归一化核 u)
    """
    scaled = dist_sq if weights is None else dist_sq * weights
    u = 1.0 / (1.0 + scaled)
    q = u / u.sum(axis=1, keepdims=True)
    return q, u


def anatomy_weights(d_a: np.ndarray, d_c: np.ndarray) -> np.ndarray:
    return (1.0 - d_a) * (1.0 - d_c)


def check_anatomy_mode(mode: str) -> None:
    if mode not in ANATOMY_MODES:
        raise InvalidInputError(f"未知的解剖模式: {mode}，可选 {list(ANATOMY_MODES)}")


def anatomy_weights_for(model: ClusterModel, regions: Sequence[Iterable[int]], parcels,
                        mode: str = 'full') -> Optional[np.ndarray]:
    """
    按解剖模式计算 (N, n_c) 权重；mode 为 none 时返回 None（纯几何分配）
    """
    check_anatomy_mode(mode)
    if mode == 'none':
        return None
    d_a, d_c = model.anatomy_factors(regions, np.asarray(parcels))
    if mode == 'regions':
        d_c = np.zeros_like(d_c)
    return anatomy_weights(d_a, d_c)


def soft_assign_geometric(z: np.ndarray, model: ClusterModel) -> np.ndarray:
    """
    几何软分配（只用嵌入距离）

    Args:
        z: (n_e,) 单个嵌入或 (N, n_e) 批量

    Returns:
        与输入批维一致的概率行
    """
    single = np.ndim(z) == 1
    batch = np.atleast_2d(np.asarray(z, dtype=np.float64))
    _, dist_sq = squared_distances(batch, model.centroids)
    q, _ = student_t(dist_sq)
    return q[0] if single else q


def soft_assign_anatomical(z: np.ndarray, fiber_regions, fiber_parcels, model: ClusterModel) -> np.ndarray:
    """
    融合解剖信息的软分配：q_j ∝ (1 + ‖z − μ_j‖² (1 − D^a_j)(1 − D^c_j))^(−1)

    Args:
        z: (n_e,) 单个嵌入；或 (N, n_e) 批量，此时 fiber_regions / fiber_parcels 也是批量

    Returns:
        与输入批维一致的概率行
    """
    single = np.ndim(z) == 1
    batch = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if single:
        fiber_regions = [fiber_regions]
        fiber_parcels = [fiber_parcels]
    d_a, d_c = model.anatomy_factors(fiber_regions, np.asarray(fiber_parcels))
    _, dist_sq = squared_distances(batch, model.centroids)
    q, _ = student_t(dist_sq, anatomy_weights(d_a, d_c))
    return q[0] if single else q


def target_distribution(q: np.ndarray) -> np.ndarray:
    """
    DEC 目标分布 p_ij ∝ q_ij² / f_j，f_j = Σ_i q_ij；f_j = 0 的列不参与
    """
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    f = q.sum(axis=0)
    safe = np.where(f > 0, f, 1.0)
    weight = np.where(f > 0, q * q / safe, 0.0)
    return weight / weight.sum(axis=1, keepdims=True)


def hard_labels(q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """argmax 标签（并列取最小簇号）及最大概率"""
    labels = np.argmax(q, axis=1)
    return labels, q[np.arange(q.shape[0]), labels]


def model_to_dict(model: ClusterModel) -> Dict[str, Any]:
    return {
        'n_c': model.n_c,
        'centroids': model.centroids.tolist(),
        'tap': [sorted(int(r) for r in t) for t in model.tap],
        'tsp': [{str(k): float(v) for k, v in sorted(p.items())} for p in model.tsp],
    }


def model_from_dict(data: Dict[str, Any]) -> ClusterModel:
    model = ClusterModel(
        centroids=np.array(data['centroids'], dtype=np.float64),
        tap=[frozenset(int(r) for r in t) for t in data['tap']],
        tsp=[{int(k): float(v) for k, v in p.items()} for p in data['tsp']],
    )
    if 'n_c' in data and int(data['n_c']) != model.n_c:
        raise InvalidInputError(f"n_c={data['n_c']} 与质心数 {model.n_c} 不一致")
    return model
