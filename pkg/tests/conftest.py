"""
测试公共夹具
"""

import numpy as np
import pytest

from fibercluster.api.atlas import build_atlas
from fibercluster.dfc.training import TrainConfig, TrainingHistory, train
from fibercluster.encoder.network import EncoderConfig
from fibercluster.tractogram.synthetic import SyntheticSpec, generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_spec():
    return SyntheticSpec(n_bundles=3, fibers_per_bundle=30, points_per_centerline=30,
                         noise_sigma=1.0, bundle_separation=12.0, flip_fraction=0.5,
                         outlier_fraction=0.1, seed=7)


@pytest.fixture
def small_tractogram(small_spec):
    return generate_synthetic(small_spec)


@pytest.fixture
def tiny_encoder_config():
    return EncoderConfig(n_p=8, k=2, edgeconv_widths=[8, 8], fc_widths=[16, 4], leaky_slope=0.2, seed=3)


@pytest.fixture
def tiny_train_config():
    return TrainConfig(n_c=3, lambda_c=0.1, batch_size=32,
                       pretrain_iters=60, pretrain_lr=1e-2, pretrain_finetune_iters=10, pretrain_finetune_lr=1e-3,
                       cluster_iters=30, cluster_lr=1e-3,
                       profile_update_interval=10, target_update_interval=10, log_interval=20, seed=5)


@pytest.fixture(scope='session')
def tiny_run():
    """在小合成数据上训练一次，供推理 / 图谱 / 命令行测试共用"""
    spec = SyntheticSpec(n_bundles=3, fibers_per_bundle=30, points_per_centerline=30,
                         noise_sigma=1.0, outlier_fraction=0.1, seed=11)
    t = generate_synthetic(spec)
    ecfg = EncoderConfig(n_p=8, k=2, edgeconv_widths=[8, 8], fc_widths=[16, 4], seed=2)
    cfg = TrainConfig(n_c=3, batch_size=32, pretrain_iters=80, pretrain_lr=1e-2, pretrain_finetune_iters=0,
                      cluster_iters=20, cluster_lr=1e-3, profile_update_interval=10,
                      target_update_interval=10, log_interval=50, seed=2)
    history = TrainingHistory()
    params, model = train([t], cfg, ecfg, history)
    atlas = build_atlas(ecfg, params, model, cfg.to_dict(), cfg.seed)
    return {'tractogram': t, 'atlas': atlas, 'history': history, 'train_config': cfg, 'encoder_config': ecfg}
