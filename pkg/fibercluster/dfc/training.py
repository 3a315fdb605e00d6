"""
两阶段训练
预训练：Siamese 网络预测纤维对的 MDF 距离
聚类：k-means 初始化质心，联合优化 L = L_p + λ·L_c，并周期性刷新目标分布与解剖画像
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from fibercluster.dfc.assignment import (
    ClusterModel,
    anatomy_weights_for,
    check_anatomy_mode,
    hard_labels,
    target_distribution,
)
from fibercluster.dfc.kmeans import kmeans
from fibercluster.dfc.losses import CENTROID_KEY, forward_assignment, kl_divergence, kl_loss_and_grad
from fibercluster.dfc.pool import FiberPool, build_pool
from fibercluster.dfc.profiles import profiles_from_arrays
from fibercluster.distance.mdf import DISTANCE_KINDS, pair_distances
from fibercluster.encoder.adam import AdamState, adam_step
from fibercluster.encoder.network import (
    EncoderConfig,
    EncoderParams,
    SiameseEncoder,
    check_params,
    distance_loss_grad,
    init_params,
)
from fibercluster.tractogram.fiber import Tractogram
from fibercluster.utils.errors import InvalidInputError

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """
    训练超参数（默认值为桌面规模；文献规模为 n_c=800、batch 1024、50k@1e-4 + 1k@1e-5）
    """

    n_c: int = 10
    lambda_c: float = 0.1
    batch_size: int = 256
    pretrain_iters: int = 2000
    pretrain_lr: float = 1e-3
    pretrain_finetune_iters: int = 200
    pretrain_finetune_lr: float = 1e-4
    cluster_iters: int = 1000
    cluster_lr: float = 1e-3
    cluster_finetune_iters: int = 0
    cluster_finetune_lr: float = 1e-5
    profile_update_interval: int = 200
    target_update_interval: int = 100
    fibers_per_subject: Optional[int] = None
    # 解剖信息使用方式: none / regions / full
    anatomy: str = 'full'
    # 伪标签使用的纤维距离
    distance_kind: str = 'mdf'
    # 伪标签的长度单位（mm），嵌入空间中 1 个单位对应 distance_scale mm
    distance_scale: float = 10.0
    log_interval: int = 100
    seed: int = 0

    def validate(self) -> None:
        if self.distance_kind not in DISTANCE_KINDS:
            raise InvalidInputError(f"未知的距离类型: {self.distance_kind}，可选 {sorted(DISTANCE_KINDS)}")
        if not self.distance_scale > 0:
            raise InvalidInputError(f"distance_scale 必须为正，实际 {self.distance_scale}")
        check_anatomy_mode(self.anatomy)
        if self.n_c < 1:
            raise InvalidInputError(f"n_c 必须 >= 1，实际 {self.n_c}")
        if self.lambda_c < 0:
            raise InvalidInputError(f"lambda_c 必须非负，实际 {self.lambda_c}")
        if self.batch_size < 1:
            raise InvalidInputError(f"batch_size 必须 >= 1，实际 {self.batch_size}")
        for name in ('profile_update_interval', 'target_update_interval', 'log_interval'):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} 必须 >= 1，实际 {getattr(self, name)}")
        for name in ('pretrain_iters', 'pretrain_finetune_iters', 'cluster_iters', 'cluster_finetune_iters'):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} 必须非负，实际 {getattr(self, name)}")
        if self.fibers_per_subject is not None and self.fibers_per_subject < 1:
            raise InvalidInputError(f"fibers_per_subject 必须 >= 1，实际 {self.fibers_per_subject}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class TrainingHistory:
    """训练过程记录"""

    pretrain_loss: List[float] = field(default_factory=list)
    cluster_lp: List[float] = field(default_factory=list)
    cluster_lc: List[float] = field(default_factory=list)
    # 每次刷新目标分布时全样本池上的 L_c
    target_lc: List[float] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        """逐迭代的损失表：stage, iteration, loss_p, loss_c"""
        pre = pd.DataFrame({
            'stage': 'pretrain',
            'iteration': np.arange(len(self.pretrain_loss)),
            'loss_p': self.pretrain_loss,
            'loss_c': np.nan,
        })
        clu = pd.DataFrame({
            'stage': 'cluster',
            'iteration': np.arange(len(self.cluster_lp)),
            'loss_p': self.cluster_lp,
            'loss_c': self.cluster_lc,
        })
        return pd.concat([pre, clu], ignore_index=True)


def _lr_schedule(iters: int, lr: float, finetune_iters: int, finetune_lr: float) -> Iterator[float]:
    for _ in range(iters):
        yield lr
    for _ in range(finetune_iters):
        yield finetune_lr


def _random_partners(rng: np.random.Generator, index: np.ndarray, n: int) -> np.ndarray:
    """为每个样本均匀抽取一个不同于自身的配对样本"""
    if n < 2:
        raise InvalidInputError(f"纤维对采样至少需要 2 根纤维，实际 {n}")
    partners = rng.integers(0, n - 1, size=index.size)
    return partners + (partners >= index)


def _pseudo_labels(xa: np.ndarray, xb: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    """纤维对的距离伪标签，以 distance_scale 为单位"""
    return pair_distances(xa, xb, cfg.distance_kind) / cfg.distance_scale


def _batches(rng: np.random.Generator, n: int, batch_size: int) -> Iterator[np.ndarray]:
    """无限的按 epoch 打乱的批次流"""
    size = min(batch_size, n)
    while True:
        order = rng.permutation(n)
        for start in range(0, n - size + 1, size):
            yield order[start:start + size]


def _pretrain_pool(pool: FiberPool, cfg: TrainConfig, ecfg: EncoderConfig, params: EncoderParams,
                   history: TrainingHistory) -> EncoderParams:
    if len(pool) < 2:
        raise InvalidInputError(f"预训练至少需要 2 根纤维，实际 {len(pool)}")
    encoder = SiameseEncoder(ecfg)
    rng = np.random.default_rng([int(cfg.seed), 1])
    state = AdamState()
    batches = _batches(rng, len(pool), cfg.batch_size)
    schedule = _lr_schedule(cfg.pretrain_iters, cfg.pretrain_lr, cfg.pretrain_finetune_iters, cfg.pretrain_finetune_lr)

    for it, lr in enumerate(schedule):
        index = next(batches)
        partners = _random_partners(rng, index, len(pool))
        xa, xb = pool.points[index], pool.points[partners]
        labels = _pseudo_labels(xa, xb, cfg)
        loss, grads, _ = encoder.pair_loss_and_grad(xa, xb, labels, params)
        params, state = adam_step(params, grads, state, lr)
        history.pretrain_loss.append(loss)
        if it % cfg.log_interval == 0:
            logger.info("预训练 iter %d: L_p=%.4f lr=%.1e", it, loss, lr)

    return params


def train_pretrain(tractograms: Sequence[Tractogram], cfg: TrainConfig, ecfg: EncoderConfig,
                   history: Optional[TrainingHistory] = None) -> EncoderParams:
    """
    预训练阶段

    Args:
        tractograms: 训练被试
        cfg: 训练参数
        ecfg: 编码器结构
        history: 可选，记录逐迭代损失

    Returns:
        预训练后的编码器参数
    """
    cfg.validate()
    pool = build_pool(tractograms, ecfg.n_p, cfg.fibers_per_subject, cfg.seed)
    return _pretrain_pool(pool, cfg, ecfg, init_params(ecfg), history or TrainingHistory())


class ClusterTrainer:
    """
    聚类阶段的训练器，持有编码器参数、质心、Adam 状态以及当前的目标分布和解剖画像
    """

    def __init__(self, pool: FiberPool, params: EncoderParams, cfg: TrainConfig, ecfg: EncoderConfig,
                 history: TrainingHistory):
        cfg.validate()
        check_params(ecfg, params)
        if len(pool) < 2:
            raise InvalidInputError(f"聚类阶段至少需要 2 根纤维，实际 {len(pool)}")
        if len(pool) < cfg.n_c:
            raise InvalidInputError(f"样本数 {len(pool)} 少于簇数 {cfg.n_c}")
        self.pool = pool
        self.cfg = cfg
        self.encoder = SiameseEncoder(ecfg)
        self.params = params
        self.history = history
        self.state = AdamState()
        self.rng = np.random.default_rng([int(cfg.seed), 2])

        embeddings = self.encoder.embed(pool.points, params)
        self.centroids, labels = kmeans(embeddings, cfg.n_c, seed=cfg.seed)
        logger.info("k-means 初始化完成: %d 个簇", cfg.n_c)
        self.refresh_profiles(labels)
        self.refresh_target(embeddings)

    def pool_assignment(self, embeddings: Optional[np.ndarray] = None) -> np.ndarray:
        if embeddings is None:
            embeddings = self.encoder.embed(self.pool.points, self.params)
        q, _ = forward_assignment(embeddings, self.centroids, self.weights)
        return q

    def refresh_profiles(self, labels: Optional[np.ndarray] = None) -> None:
        """用当前硬分配重新计算 TAP / TSP 和解剖权重"""
        if labels is None:
            labels, _ = hard_labels(self.pool_assignment())
        self.tap, self.tsp = profiles_from_arrays(labels, self.pool.regions, self.pool.parcels, self.cfg.n_c)
        empty = np.flatnonzero(np.bincount(labels, minlength=self.cfg.n_c) == 0)
        for j in empty:
            message = f"簇 {j} 在画像刷新时为空，保留空画像"
            logger.warning(message)
            self.history.warnings.append(message)

        model = ClusterModel(centroids=self.centroids, tap=self.tap, tsp=self.tsp)
        self.weights = anatomy_weights_for(model, self.pool.regions, self.pool.parcels, self.cfg.anatomy)

    def refresh_target(self, embeddings: Optional[np.ndarray] = None) -> None:
        """在整个样本池上重新计算目标分布 P"""
        q = self.pool_assignment(embeddings)
        self.target = target_distribution(q)
        loss = kl_divergence(self.target, q)
        self.history.target_lc.append(loss)
        logger.info("目标分布刷新: 全样本 L_c=%.5f", loss)

    def step(self, index: np.ndarray, lr: float) -> Tuple[float, float]:
        """一个批次的联合更新，返回 (L_p, L_c)"""
        n = len(self.pool)
        partners = _random_partners(self.rng, index, n)
        xa, xb = self.pool.points[index], self.pool.points[partners]
        labels = _pseudo_labels(xa, xb, self.cfg)

        z, cache = self.encoder.forward(np.concatenate([xa, xb], axis=0), self.params)
        batch = index.size
        d_z, loss_p, _ = distance_loss_grad(z[:batch], z[batch:], labels)

        weights = None if self.weights is None else self.weights[index]
        q, inter = forward_assignment(z[:batch], self.centroids, weights)
        loss_c, d_za, d_mu = kl_loss_and_grad(q, self.target[index], inter)
        d_z[:batch] += self.cfg.lambda_c * d_za

        grads = self.encoder.backward(d_z, cache, self.params)
        grads[CENTROID_KEY] = self.cfg.lambda_c * d_mu

        variables = dict(self.params)
        variables[CENTROID_KEY] = self.centroids
        variables, self.state = adam_step(variables, grads, self.state, lr)
        self.centroids = variables.pop(CENTROID_KEY)
        self.params = variables
        return loss_p, loss_c

    def run(self) -> None:
        cfg = self.cfg
        batches = _batches(self.rng, len(self.pool), cfg.batch_size)
        schedule = _lr_schedule(cfg.cluster_iters, cfg.cluster_lr, cfg.cluster_finetune_iters, cfg.cluster_finetune_lr)
        for it, lr in enumerate(schedule):
            if it > 0 and it % cfg.profile_update_interval == 0:
                self.refresh_profiles()
            if it > 0 and it % cfg.target_update_interval == 0:
                self.refresh_target()
            loss_p, loss_c = self.step(next(batches), lr)
            self.history.cluster_lp.append(loss_p)
            self.history.cluster_lc.append(loss_c)
            if it % cfg.log_interval == 0:
                logger.info("聚类 iter %d: L_p=%.4f L_c=%.5f lr=%.1e", it, loss_p, loss_c, lr)

    def model(self) -> ClusterModel:
        """按最终硬分配刷新画像后导出聚类模型"""
        self.refresh_profiles()
        return ClusterModel(centroids=self.centroids.copy(), tap=list(self.tap), tsp=list(self.tsp))


def train_cluster_pool(pool: FiberPool, params: EncoderParams, cfg: TrainConfig, ecfg: EncoderConfig,
                       history: Optional[TrainingHistory] = None) -> Tuple[EncoderParams, ClusterModel]:
    trainer = ClusterTrainer(pool, params, cfg, ecfg, history or TrainingHistory())
    trainer.run()
    return trainer.params, trainer.model()


def train_cluster(tractograms: Sequence[Tractogram], params: EncoderParams, cfg: TrainConfig,
                  ecfg: EncoderConfig,
                  history: Optional[TrainingHistory] = None) -> Tuple[EncoderParams, ClusterModel]:
    """
    聚类阶段

    Args:
        tractograms: 训练被试
        params: 预训练参数
        cfg: 训练参数
        ecfg: 编码器结构
        history: 可选，记录损失与警告

    Returns:
        (编码器参数, 聚类模型)
    """
    cfg.validate()
    pool = build_pool(tractograms, ecfg.n_p, cfg.fibers_per_subject, cfg.seed)
    return train_cluster_pool(pool, params, cfg, ecfg, history)


def train(tractograms: Sequence[Tractogram], cfg: TrainConfig, ecfg: EncoderConfig,
          history: Optional[TrainingHistory] = None) -> Tuple[EncoderParams, ClusterModel]:
    """预训练 + 聚类，两个阶段共用同一个样本池"""
    cfg.validate()
    history = history or TrainingHistory()
    pool = build_pool(tractograms, ecfg.n_p, cfg.fibers_per_subject, cfg.seed)
    logger.info("样本池: %d 根纤维", len(pool))
    params = _pretrain_pool(pool, cfg, ecfg, init_params(ecfg), history)
    return train_cluster_pool(pool, params, cfg, ecfg, history)
