"""
梯度校验
用中心差分对比解析梯度，逐参数块给出最大相对误差
"""

import logging
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from fibercluster.encoder.network import EncoderConfig, SiameseEncoder, distance_loss_grad, init_params

logger = logging.getLogger(__name__)

# 中心差分步长
STEP = 1e-5

# 默认的缩小配置（n_p <= 8，宽度 <= 8）
SMALL_CONFIG = dict(n_p=6, k=2, edgeconv_widths=[4, 5], fc_widths=[6, 3], leaky_slope=0.2)

# hook(encoder, x, params, centroids, p, weights) -> (loss, grads)
ClusteringHook = Callable[..., Tuple[float, Dict[str, np.ndarray]]]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a − n| / max(1, |n|)"""
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))


def numeric_gradient(loss_fn: Callable[[Dict[str, np.ndarray]], float], variables: Dict[str, np.ndarray],
                     step: float = STEP) -> Dict[str, np.ndarray]:
    """逐元素中心差分"""
    grads = {}
    for name, value in variables.items():
        grad = np.zeros_like(value)
        flat = value.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            plus = loss_fn(variables)
            flat[i] = original - step
            minus = loss_fn(variables)
            flat[i] = original
            grad.reshape(-1)[i] = (plus - minus) / (2.0 * step)
        grads[name] = grad
    return grads


def _compare(analytic: Dict[str, np.ndarray], numeric: Dict[str, np.ndarray]) -> Dict[str, float]:
    return {name: relative_error(analytic[name], numeric[name]) for name in sorted(numeric)}


def finite_difference_check(cfg: Optional[EncoderConfig] = None, seed: int = 0, batch: int = 3,
                            zero_input: bool = False,
                            clustering_hook: Optional[ClusteringHook] = None) -> Dict[str, Any]:
    """
    随机抽取参数和输入，对比 L_p 与 L_c 的解析梯度与数值梯度

    Args:
        cfg: 编码器配置，缺省为缩小配置
        seed: 随机种子
        batch: 纤维对数量
        zero_input: 使用全零坐标（退化输入）
        clustering_hook: L_c 前向/反向函数，缺省使用 dfc.losses.clustering_objective

    Returns:
        报告字典
        {
            'distance_loss': {参数块: 最大相对误差},
            'clustering_loss': {参数块: 最大相对误差},
            'max_error': 全局最大相对误差,
            'seed': 种子
        }
    """
    if cfg is None:
        cfg = EncoderConfig(seed=seed, **SMALL_CONFIG)
    if clustering_hook is None:
        from fibercluster.dfc.losses import clustering_objective
        clustering_hook = clustering_objective

    rng = np.random.default_rng(int(seed))
    encoder = SiameseEncoder(cfg)
    params = {name: value + rng.normal(0.0, 0.1, size=value.shape)
              for name, value in init_params(EncoderConfig(**{**cfg.to_dict(), 'seed': seed})).items()}

    shape = (batch, cfg.n_p, 3)
    xa = np.zeros(shape) if zero_input else rng.normal(0.0, 1.0, size=shape)
    xb = np.zeros(shape) if zero_input else rng.normal(0.0, 1.0, size=shape)
    labels = rng.uniform(0.5, 2.0, size=batch)

    # 距离预测损失
    def distance_loss(variables: Dict[str, np.ndarray]) -> float:
        z, _ = encoder.forward(np.concatenate([xa, xb]), variables)
        _, loss, _ = distance_loss_grad(z[:batch], z[batch:], labels)
        return loss

    _, analytic, _ = encoder.pair_loss_and_grad(xa, xb, labels, params)
    numeric = numeric_gradient(distance_loss, {k: v.copy() for k, v in params.items()})
    distance_report = _compare(analytic, numeric)

    # 聚类损失：P、解剖权重固定
    n_c = 3
    centroids = rng.normal(0.0, 1.0, size=(n_c, cfg.embedding_dim))
    p = rng.dirichlet(np.ones(n_c), size=batch)
    weights = rng.uniform(0.2, 1.0, size=(batch, n_c))

    def clustering_loss(variables: Dict[str, np.ndarray]) -> float:
        enc_params = {k: v for k, v in variables.items() if k != 'centroids'}
        loss, _ = clustering_hook(encoder, xa, enc_params, variables['centroids'], p, weights)
        return loss

    _, analytic_c = clustering_hook(encoder, xa, params, centroids, p, weights)
    variables = {k: v.copy() for k, v in params.items()}
    variables['centroids'] = centroids.copy()
    numeric_c = numeric_gradient(clustering_loss, variables)
    clustering_report = _compare(analytic_c, numeric_c)

    max_error = max(list(distance_report.values()) + list(clustering_report.values()))
    logger.info("梯度校验 seed=%d: 最大相对误差 %.3e", seed, max_error)
    return {
        'distance_loss': distance_report,
        'clustering_loss': clustering_report,
        'max_error': max_error,
        'seed': int(seed),
    }
