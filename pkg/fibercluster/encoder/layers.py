"""
网络层的前向/反向计算
EdgeConv、全连接、LeakyReLU、全局最大池化；反向传播为手工推导的精确梯度
"""

from typing import Dict, Tuple

import numpy as np

from fibercluster.encoder.graph import ChainGraph
from fibercluster.utils.errors import InvalidInputError

Cache = Dict[str, np.ndarray]


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def leaky_relu_grad(x: np.ndarray, slope: float) -> np.ndarray:
    # x == 0 处取 slope 作为次梯度
    return np.where(x > 0, 1.0, slope)


def edgeconv_forward(x: np.ndarray, g: ChainGraph, weight: np.ndarray, bias: np.ndarray,
                     slope: float = 0.2) -> Tuple[np.ndarray, Cache]:
    """
    EdgeConv 前向

    边特征 e_ij = LeakyReLU(W·[x_i ; x_j − x_i] + b)，输出为 k 条边上的逐元素最大值

    Args:
        x: (n_p, d_in) 或 (B, n_p, d_in)
        g: 链式图
        weight: (2·d_in, d_out)
        bias: (d_out,)
        slope: LeakyReLU 负半轴斜率

    Returns:
        (输出, 反向所需缓存)；输出形状与 x 的批维一致
    """
    single = x.ndim == 2
    h = x[None] if single else x
    if h.ndim != 3 or h.shape[1] != g.n_p:
        raise InvalidInputError(f"EdgeConv 输入形状 {x.shape} 与图点数 {g.n_p} 不一致")
    d_in = h.shape[2]
    if weight.shape[0] != 2 * d_in or bias.shape != (weight.shape[1],):
        raise InvalidInputError(f"EdgeConv 参数形状 {weight.shape}/{bias.shape} 与输入宽度 {d_in} 不一致")

    w_center, w_rel = weight[:d_in], weight[d_in:]
    rel = h[:, g.neighbors, :] - h[:, :, None, :]            # (B, n_p, k, d_in)
    pre = (h @ w_center)[:, :, None, :] + rel @ w_rel + bias  # (B, n_p, k, d_out)
    act = leaky_relu(pre, slope)
    # 邻居按索引升序存放，argmax 取首个最大值即最小点索引
    arg = np.argmax(act, axis=2)
    out = np.take_along_axis(act, arg[:, :, None, :], axis=2)[:, :, 0, :]

    cache = {'x': h, 'rel': rel, 'pre': pre, 'arg': arg}
    return (out[0] if single else out), cache


def edgeconv_backward(d_out: np.ndarray, cache: Cache, g: ChainGraph, weight: np.ndarray,
                      slope: float, scatter: np.ndarray,
                      need_input_grad: bool = True) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    EdgeConv 反向

    Args:
        d_out: (B, n_p, d_out) 上游梯度
        cache: 前向缓存
        g: 链式图
        weight: 本层权重
        slope: LeakyReLU 斜率
        scatter: g.scatter_matrix()
        need_input_grad: 第一层不需要对输入求导

    Returns:
        (d_x, d_weight, d_bias)；need_input_grad=False 时 d_x 为 None
    """
    h, rel, pre, arg = cache['x'], cache['rel'], cache['pre'], cache['arg']
    d_in = h.shape[2]
    w_center, w_rel = weight[:d_in], weight[d_in:]

    # 最大聚合：梯度只流向取到最大值的那条边
    d_act = np.zeros_like(pre)
    np.put_along_axis(d_act, arg[:, :, None, :], d_out[:, :, None, :], axis=2)
    d_pre = d_act * leaky_relu_grad(pre, slope)

    d_pre_sum = d_pre.sum(axis=2)                             # (B, n_p, d_out)
    d_w_center = np.einsum('bpd,bpe->de', h, d_pre_sum)
    d_w_rel = np.einsum('bpkd,bpke->de', rel, d_pre)
    d_bias = d_pre_sum.sum(axis=(0, 1))
    d_weight = np.concatenate([d_w_center, d_w_rel], axis=0)

    if not need_input_grad:
        return None, d_weight, d_bias

    d_rel = d_pre @ w_rel.T                                   # (B, n_p, k, d_in)
    d_x = d_pre_sum @ w_center.T - d_rel.sum(axis=2)
    d_x = d_x + np.einsum('psq,bpsd->bqd', scatter, d_rel)
    return d_x, d_weight, d_bias


def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return x @ weight + bias


def dense_backward(d_out: np.ndarray, x: np.ndarray,
                   weight: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """返回 (d_x, d_weight, d_bias)"""
    return d_out @ weight.T, x.T @ d_out, d_out.sum(axis=0)


def max_pool_forward(features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(B, n_p, C) -> (B, C)；并列时取最小点索引"""
    arg = np.argmax(features, axis=1)
    pooled = np.take_along_axis(features, arg[:, None, :], axis=1)[:, 0, :]
    return pooled, arg


def max_pool_backward(d_pooled: np.ndarray, arg: np.ndarray, n_p: int) -> np.ndarray:
    d_features = np.zeros((d_pooled.shape[0], n_p, d_pooled.shape[1]), dtype=d_pooled.dtype)
    np.put_along_axis(d_features, arg[:, None, :], d_pooled[:, None, :], axis=1)
    return d_features
