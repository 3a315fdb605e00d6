"""
k-means 聚类
sklearn 的 k-means++ 初始化 + Lloyd 迭代，用于聚类阶段的初始质心
"""

import logging
import warnings
from typing import Tuple

import numpy as np
from sklearn.cluster import KMeans

from fibercluster.utils.errors import InvalidInputError

logger = logging.getLogger(__name__)

MAX_ITER = 300
# 不同种子的初始化次数，取簇内平方和最小的一次
N_INIT = 10


def _repair_empty(X: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> None:
    """
    空簇修复：把离自身质心最远的点设为空簇的新质心（原地修改）

    只在输入的不同点数少于簇数时才会触发
    """
    n_c = centroids.shape[0]
    counts = np.bincount(labels, minlength=n_c)
    for j in np.flatnonzero(counts == 0):
        own = ((X - centroids[labels]) ** 2).sum(axis=1)
        # 只从成员数 > 1 的簇中取点，避免制造新的空簇
        own = np.where(counts[labels] > 1, own, -1.0)
        far = int(np.argmax(own))
        counts[labels[far]] -= 1
        counts[j] += 1
        labels[far] = j
        centroids[j] = X[far]
        logger.debug("簇 %d 为空，已用第 %d 个点重新初始化", j, far)


def kmeans(embeddings: np.ndarray, n_c: int, seed: int = 0,
           max_iter: int = MAX_ITER) -> Tuple[np.ndarray, np.ndarray]:
    """
    k-means 聚类

    Args:
        embeddings: (n, n_e) 嵌入
        n_c: 簇数
        seed: 随机种子
        max_iter: Lloyd 迭代上限

    Returns:
        (质心 (n_c, n_e), 硬标签 (n,))
    """
    X = np.asarray(embeddings, dtype=np.float64)
    n = X.shape[0]
    if n_c < 1:
        raise InvalidInputError(f"簇数必须 >= 1，实际 {n_c}")
    if n < n_c:
        raise InvalidInputError(f"样本数 {n} 少于簇数 {n_c}")

    # tol=0：只在分配不再变化时停止
    model = KMeans(n_clusters=n_c, init='k-means++', n_init=N_INIT, max_iter=max_iter, tol=0.0,
                   algorithm='lloyd', random_state=int(seed) % 2 ** 32)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always')
        model.fit(X)
    for w in caught:
        logger.warning("k-means: %s", w.message)

    centroids = np.array(model.cluster_centers_, dtype=np.float64)
    labels = np.array(model.labels_, dtype=np.int64)
    _repair_empty(X, centroids, labels)
    logger.debug("k-means 完成: %d 次迭代, 簇内平方和 %.4f", model.n_iter_, model.inertia_)
    return centroids, labels
