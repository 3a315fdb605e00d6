"""
纤维链式图
每个点与沿纤维方向最近的 k 个点相连（按索引距离），图结构在训练中保持不变
"""

from dataclasses import dataclass

import numpy as np

from fibercluster.utils.errors import InvalidInputError


@dataclass(frozen=True, eq=False)
class ChainGraph:
    """
    Args:
        n_p: 点数
        k: 每个点的邻居数
        neighbors: (n_p, k) 邻居索引，每行升序排列
    """

    n_p: int
    k: int
    neighbors: np.ndarray

    def scatter_matrix(self) -> np.ndarray:
        """(n_p, k, n_p) one-hot 矩阵，onehot[i, s, j] = 1 当且仅当第 s 个邻居是 j"""
        onehot = np.zeros((self.n_p, self.k, self.n_p), dtype=np.float64)
        rows = np.repeat(np.arange(self.n_p), self.k)
        slots = np.tile(np.arange(self.k), self.n_p)
        onehot[rows, slots, self.neighbors.ravel()] = 1.0
        return onehot


def build_chain_graph(n_p: int, k: int) -> ChainGraph:
    """
    构建链式图

    点 i 的邻居是 |i - j| 最小的 k 个 j（j != i）；同一距离两侧都能放下时都取，
    否则取较小索引。k 为奇数且不是完全图时，反转对称性无法成立，直接拒绝

    Args:
        n_p: 点数
        k: 邻居数

    Returns:
        ChainGraph
    """
    if k < 1:
        raise InvalidInputError(f"k 必须 >= 1，实际 {k}")
    if n_p <= k:
        raise InvalidInputError(f"点数 n_p={n_p} 必须大于邻居数 k={k}")
    if k % 2 == 1 and k != n_p - 1:
        raise InvalidInputError(f"k={k} 为奇数时链式图不满足反转对称（完全图 k=n_p-1 除外）")

    neighbors = np.empty((n_p, k), dtype=np.int64)
    for i in range(n_p):
        candidates = sorted((j for j in range(n_p) if j != i), key=lambda j: (abs(i - j), j))
        neighbors[i] = sorted(candidates[:k])
    neighbors.setflags(write=False)
    return ChainGraph(n_p=n_p, k=k, neighbors=neighbors)
