"""
Siamese 点云编码器
EdgeConv 堆叠 → 多尺度拼接 → 全局最大池化 → 全连接头；两个分支共享同一组参数
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from fibercluster.encoder.graph import ChainGraph, build_chain_graph
from fibercluster.encoder.layers import (
    dense_backward,
    dense_forward,
    edgeconv_backward,
    edgeconv_forward,
    leaky_relu,
    leaky_relu_grad,
    max_pool_backward,
    max_pool_forward,
)
from fibercluster.tractogram.fiber import Fiber, fibers_to_array
from fibercluster.utils.errors import InvalidInputError

logger = logging.getLogger(__name__)

# 参数块名 -> 数组
EncoderParams = Dict[str, np.ndarray]

# 批量编码时单次前向的纤维数上限
ENCODE_CHUNK = 1024


@dataclass
class EncoderConfig:
    """编码器结构参数"""

    n_p: int = 14
    k: int = 4
    edgeconv_widths: List[int] = field(default_factory=lambda: [16, 32, 64])
    fc_widths: List[int] = field(default_factory=lambda: [128, 64, 10])
    leaky_slope: float = 0.2
    seed: int = 0

    def validate(self) -> None:
        if not self.edgeconv_widths:
            raise InvalidInputError("edgeconv_widths 不能为空")
        if not self.fc_widths:
            raise InvalidInputError("fc_widths 不能为空")
        if any(int(w) < 1 for w in list(self.edgeconv_widths) + list(self.fc_widths)):
            raise InvalidInputError("所有层宽度必须 >= 1")
        if self.leaky_slope < 0:
            raise InvalidInputError(f"leaky_slope 必须非负，实际 {self.leaky_slope}")
        build_chain_graph(self.n_p, self.k)

    @property
    def embedding_dim(self) -> int:
        return int(self.fc_widths[-1])

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def param_shapes(cfg: EncoderConfig) -> Dict[str, Tuple[int, ...]]:
    """各参数块名称及形状（顺序固定）"""
    shapes: Dict[str, Tuple[int, ...]] = {}
    d_in = 3
    for layer, width in enumerate(cfg.edgeconv_widths):
        shapes[f'edgeconv.{layer}.weight'] = (2 * d_in, int(width))
        shapes[f'edgeconv.{layer}.bias'] = (int(width),)
        d_in = int(width)
    d_in = int(sum(cfg.edgeconv_widths))
    for layer, width in enumerate(cfg.fc_widths):
        shapes[f'fc.{layer}.weight'] = (d_in, int(width))
        shapes[f'fc.{layer}.bias'] = (int(width),)
        d_in = int(width)
    return shapes


def init_params(cfg: EncoderConfig) -> EncoderParams:
    """
    初始化参数

    权重服从 ±sqrt(6 / (fan_in + fan_out)) 的均匀分布，偏置为0，按 seed 可复现
    """
    cfg.validate()
    rng = np.random.default_rng(int(cfg.seed))
    params: EncoderParams = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith('.weight'):
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
        else:
            params[name] = np.zeros(shape, dtype=np.float64)
    return params


def check_params(cfg: EncoderConfig, params: EncoderParams) -> None:
    """参数与结构一致且全部有限，否则抛出 InvalidInputError"""
    expected = param_shapes(cfg)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise InvalidInputError(f"参数块不匹配: 缺少 {missing}, 多余 {extra}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise InvalidInputError(f"参数 {name} 形状 {params[name].shape} 应为 {shape}")
        if not np.all(np.isfinite(params[name])):
            raise InvalidInputError(f"参数 {name} 包含非有限值")


class SiameseEncoder:
    """
    编码器的前向/反向计算

    对象本身只持有结构（配置、链式图），参数由调用方传入，便于共享与优化
    """

    def __init__(self, cfg: EncoderConfig):
        cfg.validate()
        self.cfg = cfg
        self.graph: ChainGraph = build_chain_graph(cfg.n_p, cfg.k)
        self._scatter = self.graph.scatter_matrix()

    def forward(self, x: np.ndarray, params: EncoderParams) -> Tuple[np.ndarray, Dict[str, Any]]:
        """
        批量前向

        Args:
            x: (B, n_p, 3) 已重采样坐标
            params: 参数

        Returns:
            (z: (B, n_e) 嵌入, 反向缓存)
        """
        if x.ndim != 3 or x.shape[1:] != (self.cfg.n_p, 3):
            raise InvalidInputError(f"编码器输入形状应为 (B, {self.cfg.n_p}, 3)，实际 {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("编码器输入包含非有限坐标")

        slope = self.cfg.leaky_slope
        h = x
        edge_caches = []
        features = []
        for layer in range(len(self.cfg.edgeconv_widths)):
            h, cache = edgeconv_forward(h, self.graph, params[f'edgeconv.{layer}.weight'],
                                        params[f'edgeconv.{layer}.bias'], slope)
            edge_caches.append(cache)
            features.append(h)

        stacked = np.concatenate(features, axis=2)
        pooled, pool_arg = max_pool_forward(stacked)

        fc_inputs = []
        fc_pre = []
        a = pooled
        n_fc = len(self.cfg.fc_widths)
        for layer in range(n_fc):
            fc_inputs.append(a)
            pre = dense_forward(a, params[f'fc.{layer}.weight'], params[f'fc.{layer}.bias'])
            fc_pre.append(pre)
            # 最后一层不加激活
            a = leaky_relu(pre, slope) if layer < n_fc - 1 else pre

        cache = {
            'edge': edge_caches,
            'pool_arg': pool_arg,
            'fc_inputs': fc_inputs,
            'fc_pre': fc_pre,
        }
        return a, cache

    def backward(self, d_z: np.ndarray, cache: Dict[str, Any], params: EncoderParams) -> EncoderParams:
        """
        由嵌入梯度 d_z (B, n_e) 反向求参数梯度
        """
        slope = self.cfg.leaky_slope
        grads: EncoderParams = {}
        n_fc = len(self.cfg.fc_widths)

        d_a = d_z
        for layer in reversed(range(n_fc)):
            if layer < n_fc - 1:
                d_a = d_a * leaky_relu_grad(cache['fc_pre'][layer], slope)
            d_a, d_w, d_b = dense_backward(d_a, cache['fc_inputs'][layer], params[f'fc.{layer}.weight'])
            grads[f'fc.{layer}.weight'] = d_w
            grads[f'fc.{layer}.bias'] = d_b

        d_stacked = max_pool_backward(d_a, cache['pool_arg'], self.cfg.n_p)

        widths = [int(w) for w in self.cfg.edgeconv_widths]
        offsets = np.concatenate(([0], np.cumsum(widths)))
        d_h = None
        for layer in reversed(range(len(widths))):
            d_out = d_stacked[:, :, offsets[layer]:offsets[layer + 1]]
            if d_h is not None:
                d_out = d_out + d_h
            d_h, d_w, d_b = edgeconv_backward(
                d_out, cache['edge'][layer], self.graph, params[f'edgeconv.{layer}.weight'],
                slope, self._scatter, need_input_grad=layer > 0,
            )
            grads[f'edgeconv.{layer}.weight'] = d_w
            grads[f'edgeconv.{layer}.bias'] = d_b

        return grads

    def embed(self, x: np.ndarray, params: EncoderParams) -> np.ndarray:
        """只做前向，分块处理大批量"""
        if x.shape[0] == 0:
            return np.zeros((0, self.cfg.embedding_dim), dtype=np.float64)
        chunks = [self.forward(x[i:i + ENCODE_CHUNK], params)[0] for i in range(0, x.shape[0], ENCODE_CHUNK)]
        return np.concatenate(chunks, axis=0)

    def pair_loss_and_grad(self, xa: np.ndarray, xb: np.ndarray, labels: np.ndarray,
                           params: EncoderParams) -> Tuple[float, EncoderParams, np.ndarray]:
        """
        距离预测损失 L_p = mean((‖z_a − z_b‖ − d)²) 及梯度

        Returns:
            (损失, 参数梯度, 预测距离)
        """
        n = xa.shape[0]
        z, cache = self.forward(np.concatenate([xa, xb], axis=0), params)
        d_z, loss, predicted = distance_loss_grad(z[:n], z[n:], labels)
        grads = self.backward(d_z, cache, params)
        return loss, grads, predicted


def distance_loss_grad(za: np.ndarray, zb: np.ndarray,
                       labels: np.ndarray) -> Tuple[np.ndarray, float, np.ndarray]:
    """
    距离预测损失对两侧嵌入的梯度

    ‖z_a − z_b‖ = 0 时距离的导数取 0

    Returns:
        (d_z: 按 [a; b] 拼接, 损失, 预测距离)
    """
    n = za.shape[0]
    diff = za - zb
    predicted = np.sqrt((diff * diff).sum(axis=1))
    residual = predicted - labels
    loss = float(np.mean(residual * residual))

    safe = np.where(predicted > 0, predicted, 1.0)
    scale = np.where(predicted > 0, 2.0 * residual / (n * safe), 0.0)
    d_za = scale[:, None] * diff
    return np.concatenate([d_za, -d_za], axis=0), loss, predicted


def encode_batch(fibers: Sequence[Fiber], cfg: EncoderConfig, params: EncoderParams) -> np.ndarray:
    """
    批量编码

    Returns:
        (N, n_e) 嵌入，顺序与输入一致
    """
    check_params(cfg, params)
    encoder = SiameseEncoder(cfg)
    return encoder.embed(fibers_to_array(fibers, cfg.n_p), params)


def encode(f: Fiber, cfg: EncoderConfig, params: EncoderParams) -> np.ndarray:
    """单根纤维的嵌入 (n_e,)"""
    return encode_batch([f], cfg, params)[0]


def pretrain_loss_and_grad(pair: Tuple[Fiber, Fiber], label: float, cfg: EncoderConfig,
                           params: EncoderParams,
                           encoder: Optional[SiameseEncoder] = None) -> Tuple[float, EncoderParams]:
    """
    单个纤维对的距离预测损失 (‖z_a − z_b‖ − d_MDF)² 及参数梯度
    """
    if label < 0:
        raise InvalidInputError(f"伪标签必须非负，实际 {label}")
    encoder = encoder or SiameseEncoder(cfg)
    xa = fibers_to_array([pair[0]], cfg.n_p)
    xb = fibers_to_array([pair[1]], cfg.n_p)
    loss, grads, _ = encoder.pair_loss_and_grad(xa, xb, np.array([float(label)]), params)
    return loss, grads
