"""
合成纤维束生成模块
用平面圆弧作为束中心线，生成带真值标签的小规模纤维集合，供训练和测试使用
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from fibercluster.tractogram.fiber import Fiber, Tractogram, reverse_fiber
from fibercluster.utils.errors import InvalidInputError

logger = logging.getLogger(__name__)

# 离群纤维的真值标签
OUTLIER_TRUTH = -1

# 圆弧几何参数（mm / 弧度），保证弧长 >= 47 mm，高于默认长度阈值 40 mm
RADIUS_RANGE = (30.0, 60.0)
SPAN_RANGE = (np.pi / 2, np.pi)
# 每根中心线的放置尝试次数上限
MAX_PLACEMENT_ATTEMPTS = 2000
# 离群纤维中心所在立方体相对束立方体的边长倍数：与束同一尺度，但离所有中心线 >= 3 × 间距
OUTLIER_BOX_FACTOR = 1.5
# 区域/分区标签的起始编号
REGION_LABEL_BASE = 100
PARCEL_LABEL_BASE = 1000
OUTLIER_REGION_BASE = 9000
OUTLIER_PARCEL_BASE = 9500


@dataclass
class SyntheticSpec:
    """合成数据参数"""

    n_bundles: int = 10
    fibers_per_bundle: int = 100
    points_per_centerline: int = 50
    noise_sigma: float = 1.5
    bundle_separation: float = 12.0
    flip_fraction: float = 0.5
    outlier_fraction: float = 0.05
    seed: int = 0

    def validate(self) -> None:
        for name in ('n_bundles', 'fibers_per_bundle'):
            if int(getattr(self, name)) < 1:
                raise InvalidInputError(f"{name} 必须 >= 1，实际 {getattr(self, name)}")
        if int(self.points_per_centerline) < 2:
            raise InvalidInputError(f"points_per_centerline 必须 >= 2，实际 {self.points_per_centerline}")
        if not self.noise_sigma >= 0:
            raise InvalidInputError(f"noise_sigma 必须非负，实际 {self.noise_sigma}")
        if not self.bundle_separation > 0:
            raise InvalidInputError(f"bundle_separation 必须为正，实际 {self.bundle_separation}")
        for name in ('flip_fraction', 'outlier_fraction'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidInputError(f"{name} 必须在 [0, 1] 内，实际 {value}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidInputError(f"seed 必须是 64 位无符号整数，实际 {self.seed}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _random_arc(rng: np.random.Generator, center_box: float, n_points: int) -> np.ndarray:
    """在边长 center_box 的立方体内随机生成一条平面圆弧"""
    center = rng.uniform(-center_box / 2, center_box / 2, size=3)
    radius = rng.uniform(*RADIUS_RANGE)
    span = rng.uniform(*SPAN_RANGE)
    start = rng.uniform(0.0, 2 * np.pi)

    # 随机平面的正交基
    basis, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    u, v = basis[:, 0], basis[:, 1]

    theta = start + np.linspace(0.0, span, n_points)
    return center + radius * (np.cos(theta)[:, None] * u + np.sin(theta)[:, None] * v)


def _tangents(points: np.ndarray) -> np.ndarray:
    tangent = np.gradient(points, axis=0)
    return tangent / np.linalg.norm(tangent, axis=1, keepdims=True)


def _place_curves(rng: np.random.Generator, count: int, min_gap: float, box: float, n_points: int,
                  avoid: List[np.ndarray], label: str, mutual: bool = True) -> List[np.ndarray]:
    """拒绝采样放置曲线，使其与 avoid 中所有曲线（mutual 时也包括彼此）的最小距离 >= min_gap"""
    placed: List[np.ndarray] = []
    for _ in range(count):
        for _attempt in range(MAX_PLACEMENT_ATTEMPTS):
            curve = _random_arc(rng, box, n_points)
            others = avoid + placed if mutual else avoid
            if all(cdist(curve, other).min() >= min_gap for other in others):
                placed.append(curve)
                break
        else:
            raise InvalidInputError(f"无法在 {MAX_PLACEMENT_ATTEMPTS} 次尝试内放置{label}，请减小间距或数量")
    return placed


def _bundle_labels(bundle: int, rng: np.random.Generator) -> Tuple[frozenset, Tuple[int, int]]:
    n_regions = int(rng.integers(2, 5))
    base = REGION_LABEL_BASE + 10 * bundle
    regions = frozenset(range(base, base + n_regions))
    parcels = (PARCEL_LABEL_BASE + 2 * bundle + 1, PARCEL_LABEL_BASE + 2 * bundle + 2)
    return regions, parcels


def generate_synthetic(spec: SyntheticSpec) -> Tractogram:
    """
    生成合成纤维集合

    每个束：一条中心线 + fibers_per_bundle 根带垂直高斯偏移的纤维；
    另外追加 floor(outlier_fraction × 总数) 根远离所有中心线（>= 3 × 间距）的离群纤维

    Args:
        spec: 合成数据参数

    Returns:
        纤维集合，truth_labels 为束编号，离群纤维为 OUTLIER_TRUTH
    """
    spec.validate()
    rng = np.random.default_rng(int(spec.seed))
    n_points = int(spec.points_per_centerline)
    sep = float(spec.bundle_separation)

    # 立方体边长随束数增长，保证拒绝采样可行
    box = sep * 8.0 * max(1.0, spec.n_bundles ** (1.0 / 3.0))
    centerlines = _place_curves(rng, spec.n_bundles, sep, box, n_points, [], '束中心线')

    fibers: List[Fiber] = []
    truth: List[int] = []
    for b, centerline in enumerate(centerlines):
        regions, parcels = _bundle_labels(b, rng)
        tangent = _tangents(centerline)
        for _ in range(spec.fibers_per_bundle):
            offset = rng.normal(0.0, 1.0, size=3) * spec.noise_sigma
            # 去掉沿切向的分量，只保留垂直偏移
            offsets = offset - (tangent @ offset)[:, None] * tangent
            fiber = Fiber(points=centerline + offsets, region_set=regions, endpoint_parcels=parcels,
                          source_id=len(fibers))
            if rng.random() < spec.flip_fraction:
                fiber = reverse_fiber(fiber)
            fibers.append(fiber)
            truth.append(b)

    n_outliers = int(np.floor(spec.outlier_fraction * spec.n_bundles * spec.fibers_per_bundle))
    if n_outliers > 0:
        outliers = _place_curves(rng, n_outliers, 3.0 * sep, box * OUTLIER_BOX_FACTOR, n_points, centerlines,
                                 '离群纤维', mutual=False)
        for o, curve in enumerate(outliers):
            regions = frozenset({OUTLIER_REGION_BASE + o % 50, OUTLIER_REGION_BASE + 50 + o % 37})
            parcels = (OUTLIER_PARCEL_BASE + o % 20, OUTLIER_PARCEL_BASE + 20 + o % 13)
            fiber = Fiber(points=curve, region_set=regions, endpoint_parcels=parcels, source_id=len(fibers))
            if rng.random() < spec.flip_fraction:
                fiber = reverse_fiber(fiber)
            fibers.append(fiber)
            truth.append(OUTLIER_TRUTH)

    logger.info("合成数据: %d 个束, %d 根纤维 (其中离群 %d 根)", spec.n_bundles, len(fibers), n_outliers)
    return Tractogram(fibers=fibers, subject_id=f"synthetic-{spec.seed}", truth_labels=truth)
