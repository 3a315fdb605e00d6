"""
聚类损失
KL(P‖Q) 及其对嵌入和质心的精确梯度；D^a / D^c 在单步内视为常数
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from fibercluster.dfc.assignment import squared_distances, student_t
from fibercluster.encoder.network import EncoderParams, SiameseEncoder

CENTROID_KEY = 'centroids'


@dataclass
class AssignmentIntermediates:
    """软分配前向的中间量"""

    diff: np.ndarray       # (N, n_c, n_e) z_i − μ_j
    u: np.ndarray          # (N, n_c) 未归一化核
    weights: np.ndarray    # (N, n_c) 解剖权重，几何版本为全1


def forward_assignment(z: np.ndarray, centroids: np.ndarray,
                       weights: Optional[np.ndarray] = None) -> Tuple[np.ndarray, AssignmentIntermediates]:
    """计算 q 并保留反向所需中间量"""
    diff, dist_sq = squared_distances(z, centroids)
    q, u = student_t(dist_sq, weights)
    if weights is None:
        weights = np.ones_like(dist_sq)
    return q, AssignmentIntermediates(diff=diff, u=u, weights=weights)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """批均值 KL(P‖Q)；p_ij = 0 的项记为 0"""
    safe_p = np.where(p > 0, p, 1.0)
    terms = np.where(p > 0, p * np.log(safe_p / q), 0.0)
    return float(terms.sum() / p.shape[0])


def kl_loss_and_grad(q: np.ndarray, p: np.ndarray,
                     intermediates: AssignmentIntermediates) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    聚类损失 L_c = (1/N) Σ_i Σ_j p_ij ln(p_ij / q_ij) 及梯度（P 视为常数）

    Args:
        q: (N, n_c) 软分配
        p: (N, n_c) 目标分布
        intermediates: forward_assignment 的中间量

    Returns:
        (L_c, dL/dz (N, n_e), dL/dμ (n_c, n_e))
    """
    n = q.shape[0]
    loss = kl_divergence(p, q)
    # dL/ds_ij = (u_ij / N)(p_ij − q_ij)，s_ij = 1 + w_ij ‖z_i − μ_j‖²
    coeff = 2.0 * intermediates.u * (p - q) * intermediates.weights / n
    weighted = coeff[:, :, None] * intermediates.diff
    d_z = weighted.sum(axis=1)
    d_mu = -weighted.sum(axis=0)
    return loss, d_z, d_mu


def clustering_objective(encoder: SiameseEncoder, x: np.ndarray, params: EncoderParams, centroids: np.ndarray,
                         p: np.ndarray, weights: Optional[np.ndarray] = None) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    从坐标到 L_c 的完整前向/反向，返回的梯度包含编码器参数与 'centroids'
    """
    z, cache = encoder.forward(x, params)
    q, inter = forward_assignment(z, centroids, weights)
    loss, d_z, d_mu = kl_loss_and_grad(q, p, inter)
    grads = encoder.backward(d_z, cache, params)
    grads[CENTROID_KEY] = d_mu
    return loss, grads
