"""
桌面规模的端到端测试：10 个束的合成数据，完整训练 + 推理 + 评估

运行时间数分钟，默认可用 -m "not slow" 跳过
"""

import numpy as np
import pytest

from fibercluster.analyzer.report import evaluate
from fibercluster.api.atlas import build_atlas
from fibercluster.dfc.assignment import hard_labels
from fibercluster.dfc.pool import build_pool
from fibercluster.dfc.training import ClusterTrainer, TrainConfig, TrainingHistory, train_pretrain
from fibercluster.encoder.network import EncoderConfig
from fibercluster.parcellation.inference import ParcellationConfig, infer_assignments, parcellate
from fibercluster.tractogram.synthetic import OUTLIER_TRUTH, SyntheticSpec, generate_synthetic

pytestmark = pytest.mark.slow


@pytest.fixture(scope='module')
def desk_run():
    t = generate_synthetic(SyntheticSpec(n_bundles=10, fibers_per_bundle=100, flip_fraction=0.5,
                                         outlier_fraction=0.05, seed=0))
    ecfg = EncoderConfig(seed=0)
    cfg = TrainConfig(n_c=10, seed=0)
    history = TrainingHistory()

    params = train_pretrain([t], cfg, ecfg, history)
    trainer = ClusterTrainer(build_pool([t], ecfg.n_p, seed=cfg.seed), params, cfg, ecfg, history)
    trainer.run()
    training_labels, _ = hard_labels(trainer.pool_assignment())
    atlas = build_atlas(ecfg, trainer.params, trainer.model(), cfg.to_dict(), cfg.seed)
    return {'tractogram': t, 'atlas': atlas, 'history': history, 'training_labels': training_labels}


def test_pretraining_loss_falls(desk_run):
    loss = desk_run['history'].pretrain_loss
    assert np.mean(loss[-100:]) < 0.25 * np.mean(loss[:10])


def test_clustering_loss_falls(desk_run):
    target_lc = desk_run['history'].target_lc
    assert len(target_lc) >= 2
    assert target_lc[-1] <= 0.5 * target_lc[0]


def test_bundle_recovery_and_outlier_removal(desk_run):
    t = desk_run['tractogram']
    result = parcellate(t, desk_run['atlas'], ParcellationConfig(outlier_sigma=0.7))
    report = evaluate(t, result, desk_run['atlas'].encoder_config.n_p)
    assert report.ari >= 0.9
    assert report.outlier_recall >= 0.8
    assert report.false_removal <= 0.1
    assert np.isfinite(report.db)


def test_inference_reproduces_training_labels(desk_run):
    t = desk_run['tractogram']
    labels, _ = infer_assignments(t, desk_run['atlas'])
    bundle = np.asarray(t.truth_labels) != OUTLIER_TRUTH
    agreement = np.mean(labels[bundle] == desk_run['training_labels'][bundle])
    assert agreement >= 0.95
