"""
评估指标测试：DB / WMPG / TAPC / TSPC 及评估报告
"""

import json

import numpy as np
import pytest

from fibercluster.analyzer.coherence import tapc, tapc_per_cluster, tspc, tspc_per_cluster, wmpg
from fibercluster.analyzer.db_index import analyze_db, db_index
from fibercluster.analyzer.report import evaluate, save_report
from fibercluster.distance.mdf import mdf
from fibercluster.parcellation.inference import parcellate
from fibercluster.tractogram.fiber import reverse_fiber
from fibercluster.utils.errors import InvalidInputError
from tests.helpers import line_fiber, random_fiber


def _brute_force_db(fibers, labels, n_p):
    clusters = sorted(set(labels))
    medoids, alphas = [], []
    for c in clusters:
        members = [f for f, label in zip(fibers, labels) if label == c]
        means = [sum(mdf(a, b, n_p) for b in members) / len(members) for a in members]
        best = int(np.argmin(means))
        medoids.append(members[best])
        alphas.append(means[best])
    total = 0.0
    for i in range(len(clusters)):
        total += max((alphas[i] + alphas[j]) / mdf(medoids[i], medoids[j], n_p)
                     for j in range(len(clusters)) if j != i)
    return total / len(clusters)


def _random_instance(rng, n, n_c):
    fibers = [random_fiber(rng, n=int(rng.integers(2, 12)),
                           regions=tuple(rng.choice(6, size=int(rng.integers(0, 4)), replace=False).tolist()),
                           parcels=tuple(rng.integers(0, 5, size=2).tolist()))
              for _ in range(n)]
    labels = rng.integers(0, n_c, size=n)
    return fibers, labels


class TestDB:
    def test_parallel_line_clusters(self):
        fibers = [line_fiber((0, y, 0), (20, y, 0), n=8) for y in (0.0, 0.2, 5.0, 5.2)]
        assert db_index(fibers, [0, 0, 1, 1], 8) == pytest.approx(0.04, abs=1e-9)

    def test_two_singletons(self):
        fibers = [line_fiber((0, 0, 0), (20, 0, 0)), line_fiber((0, 3, 0), (20, 3, 0))]
        assert db_index(fibers, [4, 9], 5) == 0.0

    def test_needs_two_clusters(self):
        fibers = [line_fiber((0, y, 0), (20, y, 0)) for y in (0.0, 1.0)]
        with pytest.raises(InvalidInputError):
            db_index(fibers, [0, 0], 5)

    def test_coincident_medoids(self):
        f = line_fiber((0, 0, 0), (20, 0, 0))
        result = analyze_db([f, f], [0, 1], 5)
        assert result.db == float('inf')

    def test_per_cluster_breakdown(self):
        fibers = [line_fiber((0, y, 0), (20, y, 0)) for y in (0.0, 1.0, 2.0, 9.0)]
        result = analyze_db(fibers, [0, 0, 0, 1], 5)
        first = result.per_cluster[0]
        assert first['cluster'] == 0 and first['size'] == 3
        assert first['medoid'] == 1
        assert first['alpha'] == pytest.approx(2 / 3)

    def test_matches_brute_force(self, rng):
        for _ in range(10):
            fibers, labels = _random_instance(rng, int(rng.integers(4, 50)), 3)
            if len(set(labels.tolist())) < 2:
                continue
            expected = _brute_force_db(fibers, labels.tolist(), 6)
            assert db_index(fibers, labels, 6) == pytest.approx(expected, abs=1e-9)

    def test_permutation_and_reversal_invariance(self, rng):
        fibers, labels = _random_instance(rng, 40, 4)
        base = db_index(fibers, labels, 6)
        relabeled = np.array([7, 2, 5, 0])[labels]
        assert db_index(fibers, relabeled, 6) == pytest.approx(base, abs=1e-9)
        flipped = [reverse_fiber(f) if i % 2 else f for i, f in enumerate(fibers)]
        assert db_index(flipped, labels, 6) == pytest.approx(base, abs=1e-9)
        order = rng.permutation(40)
        assert db_index([fibers[i] for i in order], labels[order], 6) == pytest.approx(base, abs=1e-9)


class TestWMPG:
    def test_strict_threshold(self):
        labels = [0] * 25 + [1] * 20 + [2] * 5
        assert wmpg(labels, 4) == 0.25

    def test_all_detected(self):
        assert wmpg([0] * 21 + [1] * 30, 2) == 1.0

    def test_no_fibers(self):
        assert wmpg([], 1) == 0.0

    def test_label_out_of_range(self):
        with pytest.raises(InvalidInputError):
            wmpg([3], 2)


class TestTAPC:
    def test_shared_regions(self):
        fibers = [line_fiber((0, 0, 0), (1, 0, 0), regions=(4, 5)) for _ in range(3)]
        assert tapc(fibers, [0, 0, 0]) == 1.0

    def test_worked_example(self):
        fibers = [line_fiber((0, 0, 0), (1, 0, 0), regions=r) for r in ((1, 2), (1, 3), (1, 2))]
        assert tapc_per_cluster(fibers, [0, 0, 0])[0] == pytest.approx(5 / 6)

    def test_mean_over_nonempty_clusters(self):
        fibers = [line_fiber((0, 0, 0), (1, 0, 0), regions=r) for r in ((1, 2), (1, 3), (1, 2), (7,))]
        assert tapc(fibers, [0, 0, 0, 5]) == pytest.approx((5 / 6 + 1.0) / 2)

    def test_matches_brute_force(self, rng):
        for _ in range(50):
            fibers, labels = _random_instance(rng, int(rng.integers(1, 200)), 4)
            scores = tapc_per_cluster(fibers, labels)
            for c in set(labels.tolist()):
                members = [fibers[i].region_set for i in range(len(fibers)) if labels[i] == c]
                vocab = set().union(*members) - {0}
                tap = {r for r in vocab if sum(r in m for m in members) / len(members) > 0.4}
                dices = []
                for m in members:
                    a = set(m) - {0}
                    dices.append(0.0 if not a and not tap else 2 * len(a & tap) / (len(a) + len(tap)))
                assert scores[c] == pytest.approx(sum(dices) / len(dices), abs=1e-12)
                assert 0.0 <= scores[c] <= 1.0


class TestTSPC:
    def test_single_parcel(self):
        fibers = [line_fiber((0, 0, 0), (1, 0, 0), parcels=(3, 3)) for _ in range(4)]
        assert tspc(fibers, [0] * 4) == 1.0

    def test_worked_example(self):
        fibers = [line_fiber((0, 0, 0), (1, 0, 0), parcels=p) for p in ((10, 20), (10, 20), (10, 30))]
        assert tspc(fibers, [0, 0, 0]) == pytest.approx(1 / 3)

    def test_unlabeled_half(self):
        fibers = [line_fiber((0, 0, 0), (1, 0, 0), parcels=(0, 7)) for _ in range(4)]
        assert tspc(fibers, [2] * 4) == 0.5

    def test_no_labeled_endpoints(self):
        fibers = [line_fiber((0, 0, 0), (1, 0, 0)) for _ in range(2)]
        assert tspc_per_cluster(fibers, [0, 0]) == {0: 0.0}

    def test_fully_labeled_degenerates(self, rng):
        for _ in range(20):
            parcels = rng.integers(1, 6, size=(int(rng.integers(1, 30)), 2))
            fibers = [line_fiber((0, 0, 0), (1, 0, 0), parcels=tuple(p.tolist())) for p in parcels]
            distinct = len(set(parcels.ravel().tolist()))
            assert tspc(fibers, [0] * len(fibers)) == pytest.approx(1.0 / distinct, abs=1e-12)

    def test_relabel_invariance(self, rng):
        fibers, labels = _random_instance(rng, 80, 3)
        relabeled = np.array([9, 4, 1])[labels]
        assert tspc(fibers, relabeled) == pytest.approx(tspc(fibers, labels), abs=1e-12)
        assert tapc(fibers, relabeled) == pytest.approx(tapc(fibers, labels), abs=1e-12)


class TestReport:
    def test_evaluate(self, tiny_run):
        t = tiny_run['tractogram']
        result = parcellate(t, tiny_run['atlas'])
        report = evaluate(t, result, tiny_run['encoder_config'].n_p)
        assert report.n_fibers == len(t)
        assert report.n_kept == len(result.kept_index)
        assert 0.0 <= report.wmpg <= 1.0
        assert 0.0 <= report.tapc <= 1.0
        assert 0.0 <= report.tspc <= 1.0
        assert report.db >= 0.0
        assert -1.0 <= report.ari <= 1.0
        assert 0.0 <= report.outlier_recall <= 1.0
        assert 0.0 <= report.false_removal <= 1.0
        assert len(report.per_cluster['cluster']) == tiny_run['atlas'].n_c
        assert len(report.summary_lines()) == 8

    def test_save_report(self, tmp_path, tiny_run):
        t = tiny_run['tractogram']
        report = evaluate(t, parcellate(t, tiny_run['atlas']), tiny_run['encoder_config'].n_p)
        path = tmp_path / 'metrics.json'
        save_report(report, path)
        data = json.loads(path.read_text(encoding='utf-8'))
        assert {'db', 'wmpg', 'tapc', 'tspc', 'per_cluster', 'ari'} <= set(data)

    def test_length_mismatch(self, tiny_run):
        t = tiny_run['tractogram']
        result = parcellate(t, tiny_run['atlas'])
        short = type(t)(fibers=t.fibers[:-1])
        with pytest.raises(InvalidInputError):
            evaluate(short, result, 8)
