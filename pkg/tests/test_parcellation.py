"""
推理与离群剔除测试
"""

import json

import numpy as np
import pytest

from fibercluster.api.atlas import Atlas
from fibercluster.dfc.assignment import ClusterModel, hard_labels, squared_distances, student_t
from fibercluster.dfc.pool import build_pool, pool_from_fibers
from fibercluster.dfc.training import ClusterTrainer, TrainingHistory
from fibercluster.encoder.network import SiameseEncoder, init_params
from fibercluster.parcellation.inference import (
    ParcellationConfig,
    infer_assignments,
    parcellate,
    soft_assignments,
)
from fibercluster.parcellation.outliers import outlier_thresholds, remove_outliers, remove_outliers_absolute
from fibercluster.parcellation.writer import load_parcellation, save_parcellation
from fibercluster.tractogram.fiber import Tractogram, reverse_fiber
from fibercluster.utils.errors import InvalidInputError, SchemaError


class TestThresholds:
    def test_worked_example(self):
        labels = np.zeros(4, dtype=int)
        q = np.array([0.9, 0.8, 0.7, 0.2])
        mean, std, threshold = outlier_thresholds(labels, q, 1.0, 1)
        assert mean[0] == pytest.approx(0.65)
        assert std[0] == pytest.approx(0.26926, abs=1e-5)
        assert threshold[0] == pytest.approx(0.38074, abs=1e-5)
        result = remove_outliers(labels, q, (mean, std, threshold))
        assert result.outlier.tolist() == [False, False, False, True]
        assert result.count_before.tolist() == [4]
        assert result.count_after.tolist() == [3]

    def test_equal_to_threshold_is_kept(self):
        labels = np.zeros(2, dtype=int)
        thresholds = (np.array([0.5]), np.array([0.0]), np.array([0.5]))
        result = remove_outliers(labels, np.array([0.5, 0.4]), thresholds)
        assert result.outlier.tolist() == [False, True]

    def test_empty_cluster(self):
        mean, std, threshold = outlier_thresholds(np.array([0, 0]), np.array([0.6, 0.8]), 0.7, 3)
        assert mean[1] == std[1] == threshold[1] == 0.0
        assert mean[2] == std[2] == threshold[2] == 0.0

    def test_identical_values_remove_nothing(self):
        labels = np.zeros(5, dtype=int)
        q = np.full(5, 0.3)
        thresholds = outlier_thresholds(labels, q, 2.0, 1)
        assert thresholds[1][0] == 0.0
        assert not remove_outliers(labels, q, thresholds).outlier.any()

    def test_zero_sigma_threshold_is_mean(self, rng):
        labels = rng.integers(0, 3, size=60)
        q = rng.uniform(0.3, 1.0, size=60)
        mean, _, threshold = outlier_thresholds(labels, q, 0.0, 3)
        np.testing.assert_array_equal(threshold, mean)
        for c in range(3):
            assert mean[c] == pytest.approx(q[labels == c].mean())

    def test_matches_brute_force(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 200))
            n_c = int(rng.integers(1, 6))
            labels = rng.integers(0, n_c, size=n)
            q = rng.uniform(0.2, 1.0, size=n)
            _, std, threshold = outlier_thresholds(labels, q, 0.7, n_c)
            for c in range(n_c):
                values = [q[i] for i in range(n) if labels[i] == c]
                if not values:
                    continue
                m = sum(values) / len(values)
                s = (sum((v - m) ** 2 for v in values) / len(values)) ** 0.5
                assert std[c] == pytest.approx(s, abs=1e-12)
                assert threshold[c] == pytest.approx(m - 0.7 * s, abs=1e-12)

    def test_negative_sigma(self):
        with pytest.raises(InvalidInputError):
            outlier_thresholds(np.array([0]), np.array([0.5]), -0.1, 1)

    def test_label_out_of_range(self):
        with pytest.raises(InvalidInputError):
            outlier_thresholds(np.array([2]), np.array([0.5]), 0.7, 2)

    def test_absolute_threshold(self):
        result = remove_outliers_absolute(np.array([0, 1, 1]), np.array([0.3, 0.9, 0.5]), 0.5, 2)
        assert result.outlier.tolist() == [True, False, False]
        np.testing.assert_array_equal(result.threshold, [0.5, 0.5])
        with pytest.raises(InvalidInputError):
            remove_outliers_absolute(np.array([0]), np.array([0.3]), 1.5, 1)

    def test_frames(self):
        result = remove_outliers_absolute(np.array([0, 1, 1]), np.array([0.3, 0.9, 0.5]), 0.5, 2)
        fibers = result.fiber_frame()
        assert list(fibers.columns) == ['index', 'cluster', 'q', 'outlier']
        assert fibers['outlier'].tolist() == [True, False, False]
        clusters = result.cluster_frame()
        assert clusters['count_after'].tolist() == [0, 2]
        assert result.kept_index.tolist() == [1, 2]
        assert result.removed_fraction == pytest.approx(1 / 3)


class TestInference:
    def test_labels_in_range(self, tiny_run):
        labels, q_max = infer_assignments(tiny_run['tractogram'], tiny_run['atlas'])
        assert labels.dtype == np.int64
        assert labels.min() >= 0 and labels.max() < tiny_run['atlas'].n_c
        assert np.all((q_max > 0) & (q_max <= 1))
        q = soft_assignments(tiny_run['tractogram'], tiny_run['atlas'])
        np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-12)

    def test_reversed_fibers_get_same_cluster(self, tiny_run):
        t = tiny_run['tractogram']
        reversed_t = Tractogram(fibers=[reverse_fiber(f) for f in t.fibers], subject_id='flipped')
        labels, q_max = infer_assignments(t, tiny_run['atlas'])
        labels_r, q_max_r = infer_assignments(reversed_t, tiny_run['atlas'])
        np.testing.assert_array_equal(labels_r, labels)
        np.testing.assert_allclose(q_max_r, q_max, atol=1e-9)

    def test_deterministic(self, tiny_run):
        a = parcellate(tiny_run['tractogram'], tiny_run['atlas'])
        b = parcellate(tiny_run['tractogram'], tiny_run['atlas'])
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_array_equal(a.outlier, b.outlier)

    @pytest.mark.parametrize('anatomy', ['none', 'regions', 'full'])
    def test_anatomy_modes(self, tiny_run, anatomy):
        labels, _ = infer_assignments(tiny_run['tractogram'], tiny_run['atlas'], ParcellationConfig(anatomy=anatomy))
        assert labels.shape == (len(tiny_run['tractogram']),)

    def test_regions_mode_drops_endpoint_term(self, tiny_run):
        t, atlas = tiny_run['tractogram'], tiny_run['atlas']
        pool = pool_from_fibers(t.fibers, atlas.encoder_config.n_p)
        z = SiameseEncoder(atlas.encoder_config).embed(pool.points, atlas.params)
        d_a, _ = atlas.model.anatomy_factors(pool.regions, pool.parcels)
        _, dist_sq = squared_distances(z, atlas.model.centroids)
        expected, _ = student_t(dist_sq, 1.0 - d_a)
        np.testing.assert_allclose(soft_assignments(t, atlas, 'regions'), expected, atol=1e-12)

    def test_mismatched_atlas_rejected(self, tiny_run):
        trained = tiny_run['atlas']
        atlas = Atlas(encoder_config=trained.encoder_config, params=dict(trained.params), model=trained.model)
        name = sorted(atlas.params)[0]
        atlas.params[name] = atlas.params[name][..., :-1]
        with pytest.raises(InvalidInputError):
            infer_assignments(tiny_run['tractogram'], atlas)

    def test_training_fibers_keep_training_labels(self, small_tractogram, tiny_encoder_config, tiny_train_config):
        pool = build_pool([small_tractogram], tiny_encoder_config.n_p, seed=tiny_train_config.seed)
        trainer = ClusterTrainer(pool, init_params(tiny_encoder_config), tiny_train_config, tiny_encoder_config,
                                 TrainingHistory())
        trainer.run()
        model = trainer.model()
        training_labels, _ = hard_labels(trainer.pool_assignment())
        atlas = Atlas(encoder_config=tiny_encoder_config, params=trainer.params, model=model)

        labels, _ = infer_assignments(small_tractogram, atlas)
        np.testing.assert_array_equal(labels, training_labels)
        for i in (0, 31, len(small_tractogram) - 1):
            single, _ = infer_assignments(Tractogram(fibers=[small_tractogram.fibers[i]]), atlas)
            assert single[0] == training_labels[i]

    def test_single_cluster_atlas(self, tiny_run):
        trained = tiny_run['atlas']
        atlas = Atlas(encoder_config=trained.encoder_config, params=trained.params,
                      model=ClusterModel(centroids=trained.model.centroids[:1]))
        result = parcellate(tiny_run['tractogram'], atlas)
        assert np.all(result.labels == 0)
        assert np.all(result.q_max == 1.0)
        assert not result.outlier.any()

    def test_empty_tractogram(self, tiny_run):
        result = parcellate(Tractogram(fibers=[]), tiny_run['atlas'])
        assert len(result) == 0
        assert result.count_before.tolist() == [0] * tiny_run['atlas'].n_c

    def test_sigma_controls_removal(self, tiny_run):
        loose = parcellate(tiny_run['tractogram'], tiny_run['atlas'], ParcellationConfig(outlier_sigma=3.0))
        strict = parcellate(tiny_run['tractogram'], tiny_run['atlas'], ParcellationConfig(outlier_sigma=0.0))
        assert loose.outlier.sum() <= strict.outlier.sum()
        assert not np.any(loose.outlier & ~strict.outlier)

    def test_invalid_config(self, tiny_run):
        with pytest.raises(InvalidInputError):
            parcellate(tiny_run['tractogram'], tiny_run['atlas'], ParcellationConfig(outlier_sigma=-1.0))


class TestWriter:
    def test_round_trip(self, tmp_path, tiny_run):
        result = parcellate(tiny_run['tractogram'], tiny_run['atlas'])
        path = tmp_path / 'p.ndjson'
        save_parcellation(result, path)
        loaded = load_parcellation(path)
        np.testing.assert_array_equal(loaded.labels, result.labels)
        np.testing.assert_array_equal(loaded.q_max, result.q_max)
        np.testing.assert_array_equal(loaded.outlier, result.outlier)
        np.testing.assert_array_equal(loaded.threshold, result.threshold)
        assert loaded.config == result.config

        lines = path.read_text(encoding='utf-8').splitlines()
        assert len(lines) == len(result) + 1
        assert set(json.loads(lines[0])) == {'index', 'cluster', 'q', 'outlier'}
        assert json.loads(lines[-1])['summary']['removed'] == int(result.outlier.sum())

    def test_missing_summary(self, tmp_path):
        path = tmp_path / 'p.ndjson'
        path.write_text(json.dumps({'index': 0, 'cluster': 0, 'q': 0.9, 'outlier': False}) + '\n')
        with pytest.raises(SchemaError):
            load_parcellation(path)

    def test_index_gap(self, tmp_path):
        path = tmp_path / 'p.ndjson'
        path.write_text(json.dumps({'index': 1, 'cluster': 0, 'q': 0.9, 'outlier': False}) + '\n')
        with pytest.raises(SchemaError) as excinfo:
            load_parcellation(path)
        assert excinfo.value.line_number == 1
