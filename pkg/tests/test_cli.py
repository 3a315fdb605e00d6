"""
配置、图谱持久化与命令行测试
"""

import json

import numpy as np
import pandas as pd
import pytest

from fibercluster.api.atlas import ATLAS_VERSION, atlas_to_dict, load_atlas, save_atlas
from fibercluster.api.cli import build_parser, history_path, main
from fibercluster.api.config import RunConfig, config_from_dict, load_run_config, resolve_config
from fibercluster.distance.matrix_io import load_distance_matrix
from fibercluster.distance.mdf import pairwise_mdf
from fibercluster.parcellation.inference import infer_assignments
from fibercluster.parcellation.writer import load_parcellation
from fibercluster.tractogram.ndjson_parser import load_tractogram, save_tractogram
from fibercluster.utils.errors import AtlasVersionError, InvalidInputError, SchemaError
from tests.helpers import as_tractogram, line_fiber

SMALL_TRAIN = [
    '--n_c', '3', '--n_p', '8', '--k', '2', '--edgeconv_widths', '8,8', '--fc_widths', '16,4',
    '--batch_size', '32', '--pretrain_iters', '20', '--pretrain_finetune_iters', '0',
    '--cluster_iters', '10', '--profile_update_interval', '5', '--target_update_interval', '5',
    '--min_length', '0', '--seed', '3',
]


class TestConfig:
    def test_defaults(self):
        cfg = RunConfig()
        cfg.validate()
        assert cfg.encoder.n_p == 14
        assert cfg.train.n_c == 10
        assert cfg.parcellation.outlier_sigma == 0.7

    def test_sections(self):
        cfg = config_from_dict({'train': {'n_c': 5}, 'encoder': {'fc_widths': [32, 6]}})
        assert cfg.train.n_c == 5
        assert cfg.encoder.embedding_dim == 6
        assert cfg.synthetic.n_bundles == 10

    def test_flat_shared_fields(self):
        cfg = config_from_dict({'seed': 9, 'anatomy': 'regions', 'n_c': 7})
        assert cfg.train.seed == cfg.encoder.seed == cfg.synthetic.seed == 9
        assert cfg.train.anatomy == 'regions'
        assert cfg.parcellation.anatomy == 'regions'
        assert cfg.train.n_c == 7

    def test_unknown_keys(self):
        with pytest.raises(InvalidInputError):
            config_from_dict({'n_clusters': 3})
        with pytest.raises(InvalidInputError):
            config_from_dict({'train': {'k': 4}})
        with pytest.raises(InvalidInputError):
            config_from_dict({'train': 3})

    def test_bad_json(self, tmp_path):
        path = tmp_path / 'cfg.json'
        path.write_text('{"n_c": ')
        with pytest.raises(InvalidInputError):
            load_run_config(path)

    def test_precedence(self, tmp_path):
        path = tmp_path / 'cfg.json'
        path.write_text(json.dumps({'train': {'n_c': 4, 'lambda_c': 0.5, 'seed': 1}}))
        args = build_parser().parse_args(['train', 'x.ndjson', '--out', 'a.json', '--config', str(path),
                                          '--seed', '7', '--n-c', '6'])
        cfg = resolve_config(args)
        assert cfg.train.n_c == 6
        assert cfg.train.lambda_c == 0.5
        assert cfg.train.seed == 7
        assert cfg.encoder.seed == 7

    def test_typed_overrides(self):
        args = build_parser().parse_args(['synth', '--out', 'x', '--fibers_per_subject', '500',
                                          '--anatomy', 'none', '--edgeconv_widths', '4,6',
                                          '--absolute_threshold', 'none'])
        cfg = resolve_config(args)
        assert cfg.train.fibers_per_subject == 500
        assert cfg.parcellation.anatomy == 'none'
        assert cfg.encoder.edgeconv_widths == [4, 6]
        assert cfg.parcellation.absolute_threshold is None

    def test_invalid_value_rejected(self):
        args = build_parser().parse_args(['synth', '--out', 'x', '--k', '3'])
        with pytest.raises(InvalidInputError):
            resolve_config(args)

    def test_unknown_anatomy_mode_rejected(self):
        args = build_parser().parse_args(['synth', '--out', 'x', '--anatomy', 'cortex'])
        with pytest.raises(InvalidInputError):
            resolve_config(args)


class TestAtlas:
    def test_round_trip_gives_identical_inference(self, tmp_path, tiny_run):
        path = tmp_path / 'atlas.json'
        save_atlas(tiny_run['atlas'], path)
        loaded = load_atlas(path)
        assert atlas_to_dict(loaded) == atlas_to_dict(tiny_run['atlas'])
        labels, q_max = infer_assignments(tiny_run['tractogram'], tiny_run['atlas'])
        labels_l, q_max_l = infer_assignments(tiny_run['tractogram'], loaded)
        np.testing.assert_array_equal(labels_l, labels)
        np.testing.assert_array_equal(q_max_l, q_max)

    def test_version_mismatch(self, tmp_path, tiny_run):
        data = atlas_to_dict(tiny_run['atlas'])
        data['version'] = ATLAS_VERSION + 1
        path = tmp_path / 'atlas.json'
        path.write_text(json.dumps(data))
        with pytest.raises(AtlasVersionError):
            load_atlas(path)

    def test_not_an_atlas(self, tmp_path):
        path = tmp_path / 'atlas.json'
        path.write_text(json.dumps({'format': 'something-else'}))
        with pytest.raises(SchemaError):
            load_atlas(path)

    def test_shape_mismatch(self, tmp_path, tiny_run):
        data = atlas_to_dict(tiny_run['atlas'])
        data['params']['fc.1.bias'] = [0.0]
        path = tmp_path / 'atlas.json'
        path.write_text(json.dumps(data))
        with pytest.raises(InvalidInputError):
            load_atlas(path)


class TestMain:
    def test_full_pipeline(self, tmp_path, capsys):
        data = tmp_path / 'synthetic.ndjson'
        atlas = tmp_path / 'atlas.json'
        parcellation = tmp_path / 'parcellation.ndjson'
        metrics = tmp_path / 'metrics.json'

        assert main(['synth', '--out', str(data), '--n_bundles', '3', '--fibers_per_bundle', '20',
                     '--outlier_fraction', '0.1', '--seed', '4']) == 0
        t = load_tractogram(data)
        assert len(t) == 66

        assert main(['train', str(data), '--out', str(atlas)] + SMALL_TRAIN) == 0
        assert load_atlas(atlas).n_c == 3
        history = pd.read_csv(history_path(atlas))
        assert len(history) == 30

        assert main(['infer', str(data), '--atlas', str(atlas), '--out', str(parcellation)]) == 0
        assert len(load_parcellation(parcellation)) == 66

        matrix = tmp_path / 'kept.bin'
        assert main(['eval', str(data), str(parcellation), '--out', str(metrics), '--n_p', '8',
                     '--distance-matrix', str(matrix)]) == 0
        report = json.loads(metrics.read_text(encoding='utf-8'))
        assert {'db', 'wmpg', 'tapc', 'tspc', 'per_cluster'} <= set(report)
        kept = load_parcellation(parcellation).kept_index
        dumped = load_distance_matrix(matrix)
        assert dumped.n == len(kept)
        np.testing.assert_allclose(dumped.values, pairwise_mdf([t.fibers[i] for i in kept], 8).values, atol=1e-12)

        capsys.readouterr()
        assert main(['eval', str(data), str(parcellation), '--n_p', '8']) == 0
        first_line = capsys.readouterr().out.splitlines()[0]
        assert json.loads(first_line)['wmpg'] == report['wmpg']

    def test_training_is_byte_identical(self, tmp_path, monkeypatch):
        monkeypatch.setenv('SOURCE_DATE_EPOCH', '1700000000')
        data = tmp_path / 'synthetic.ndjson'
        assert main(['synth', '--out', str(data), '--n_bundles', '3', '--fibers_per_bundle', '15',
                     '--seed', '8']) == 0
        a, b = tmp_path / 'a.json', tmp_path / 'b.json'
        assert main(['train', str(data), '--out', str(a)] + SMALL_TRAIN) == 0
        assert main(['train', str(data), '--out', str(b)] + SMALL_TRAIN) == 0
        assert a.read_bytes() == b.read_bytes()
        assert json.loads(a.read_text())['created_at'] == '2023-11-14T22:13:20Z'

    def test_gradcheck(self, tmp_path):
        out = tmp_path / 'gradcheck.json'
        assert main(['gradcheck', '--seed', '0', '--out', str(out)]) == 0
        assert json.loads(out.read_text())['max_error'] <= 1e-4

    def test_missing_file(self, tmp_path, capsys):
        code = main(['infer', str(tmp_path / 'missing.ndjson'), '--atlas', str(tmp_path / 'atlas.json'),
                     '--out', str(tmp_path / 'out.ndjson')])
        assert code == 1
        assert capsys.readouterr().err.startswith('error=FileNotFoundError message=')

    def test_version_error_exit_code(self, tmp_path, capsys, tiny_run):
        data = atlas_to_dict(tiny_run['atlas'])
        data['version'] = 99
        atlas = tmp_path / 'atlas.json'
        atlas.write_text(json.dumps(data))
        code = main(['infer', str(tmp_path / 'x.ndjson'), '--atlas', str(atlas), '--out', str(tmp_path / 'o')])
        assert code == 1
        assert 'error=AtlasVersionError' in capsys.readouterr().err

    def test_invalid_config_exit_code(self, tmp_path, capsys):
        code = main(['synth', '--out', str(tmp_path / 'x.ndjson'), '--n_bundles', '0'])
        assert code == 1
        assert 'error=InvalidInputError' in capsys.readouterr().err


def _write_eval_inputs(tmp_path, summary_clusters, labels, n_c=2):
    data = tmp_path / 'two.ndjson'
    save_tractogram(as_tractogram([line_fiber((0, y, 0), (50, y, 0), regions=(1,), parcels=(2, 3))
                                   for y in (0.0, 2.0)]), data)
    parcellation = tmp_path / 'p.ndjson'
    lines = [json.dumps({'index': i, 'cluster': c, 'q': 0.9, 'outlier': False}) for i, c in enumerate(labels)]
    lines.append(json.dumps({'summary': {'n_c': n_c, 'clusters': summary_clusters}}))
    parcellation.write_text('\n'.join(lines) + '\n')
    return data, parcellation


def _cluster_row(j):
    return {'cluster': j, 'count_before': 1, 'count_after': 1, 'mean': 0.9, 'std': 0.0, 'threshold': 0.9}


class TestEvalInputErrors:
    def test_summary_missing_cluster_field(self, tmp_path, capsys):
        rows = [_cluster_row(0), _cluster_row(1)]
        del rows[1]['count_before']
        data, parcellation = _write_eval_inputs(tmp_path, rows, [0, 1])
        assert main(['eval', str(data), str(parcellation), '--n_p', '8']) == 1
        err = capsys.readouterr().err
        assert err.startswith('error=SchemaError message=')
        assert 'count_before' in err

    def test_label_outside_cluster_range(self, tmp_path, capsys):
        data, parcellation = _write_eval_inputs(tmp_path, [_cluster_row(0), _cluster_row(1)], [0, 5])
        assert main(['eval', str(data), str(parcellation), '--n_p', '8']) == 1
        assert capsys.readouterr().err.startswith('error=SchemaError message=')

    def test_non_finite_probability(self, tmp_path):
        data, parcellation = _write_eval_inputs(tmp_path, [_cluster_row(0), _cluster_row(1)], [0, 1])
        parcellation.write_text(parcellation.read_text().replace('"q": 0.9', '"q": NaN', 1))
        with pytest.raises(SchemaError) as excinfo:
            load_parcellation(parcellation)
        assert excinfo.value.line_number == 1
