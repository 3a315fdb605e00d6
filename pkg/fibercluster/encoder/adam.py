"""
Adam 优化器
按参数块名维护一阶/二阶矩估计，带偏差修正
"""

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from fibercluster.utils.errors import InvalidInputError, NonFiniteGradientError


@dataclass
class AdamState:
    """优化器状态；m / v 与参数同名同形"""

    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_step(params: Dict[str, np.ndarray], grad: Dict[str, np.ndarray], state: AdamState,
              lr: float) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """
    一步 Adam 更新

    Args:
        params: 参数
        grad: 同名同形的梯度
        state: 优化器状态
        lr: 学习率

    Returns:
        (新参数, 新状态)；输入对象不被修改
    """
    if set(grad) != set(params):
        raise InvalidInputError(f"梯度与参数块不一致: {sorted(set(grad) ^ set(params))}")
    bad = [name for name in sorted(grad) if not np.all(np.isfinite(grad[name]))]
    if bad:
        raise NonFiniteGradientError(bad, state.t + 1)

    t = state.t + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t

    new_params: Dict[str, np.ndarray] = {}
    new_m: Dict[str, np.ndarray] = {}
    new_v: Dict[str, np.ndarray] = {}
    for name in params:
        g = grad[name]
        if g.shape != params[name].shape:
            raise InvalidInputError(f"梯度 {name} 形状 {g.shape} 与参数 {params[name].shape} 不一致")
        m = state.m.get(name, np.zeros_like(params[name]))
        v = state.v.get(name, np.zeros_like(params[name]))

        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2

        new_params[name] = params[name] - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        new_m[name] = m
        new_v[name] = v

    return new_params, AdamState(t=t, m=new_m, v=new_v, beta1=state.beta1, beta2=state.beta2,
                                 epsilon=state.epsilon)
