"""
测试用的纤维构造函数
"""

import numpy as np

from fibercluster.tractogram.fiber import Fiber, Tractogram


def line_fiber(start, end, n=5, regions=(), parcels=(0, 0), source_id=None) -> Fiber:
    """两点之间均匀分布的直线纤维"""
    points = np.linspace(np.asarray(start, dtype=float), np.asarray(end, dtype=float), n)
    return Fiber(points=points, region_set=frozenset(regions), endpoint_parcels=tuple(parcels),
                 source_id=source_id)


def random_fiber(rng: np.random.Generator, n: int = 12, regions=(1, 2), parcels=(3, 4)) -> Fiber:
    steps = rng.normal(0.0, 3.0, size=(n, 3))
    return Fiber(points=np.cumsum(steps, axis=0), region_set=frozenset(regions), endpoint_parcels=parcels)


def as_tractogram(fibers, truth=None) -> Tractogram:
    return Tractogram(fibers=list(fibers), subject_id='test', truth_labels=truth)
