"""
命令行接口
子命令：synth / train / infer / eval / gradcheck
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from fibercluster import __version__
from fibercluster.analyzer.report import evaluate, save_report
from fibercluster.api.atlas import build_atlas, load_atlas, save_atlas
from fibercluster.api.config import RunConfig, add_override_arguments, resolve_config
from fibercluster.dfc.training import TrainingHistory, train
from fibercluster.distance.matrix_io import save_distance_matrix
from fibercluster.distance.mdf import pairwise_mdf
from fibercluster.encoder.gradcheck import finite_difference_check
from fibercluster.parcellation.inference import parcellate
from fibercluster.parcellation.writer import load_parcellation, save_parcellation
from fibercluster.tractogram.fiber import filter_by_length, validate_tractogram
from fibercluster.tractogram.ndjson_parser import load_tractogram, save_tractogram
from fibercluster.tractogram.synthetic import generate_synthetic
from fibercluster.utils.errors import FiberClusterError, InvalidInputError
from fibercluster.utils.helpers import atomic_write, format_number

logger = logging.getLogger(__name__)

# 梯度校验通过的相对误差上限
GRADCHECK_TOLERANCE = 1e-4


def _banner(title: str, lines: List[str]) -> None:
    print("=" * 60)
    print(title)
    print("=" * 60)
    for line in lines:
        print(line)
    print("=" * 60)


def history_path(atlas_path: Path) -> Path:
    return atlas_path.with_name(atlas_path.name + '.history.csv')


def cmd_synth(args: argparse.Namespace, cfg: RunConfig) -> int:
    t = generate_synthetic(cfg.synthetic)
    save_tractogram(t, args.out)
    outliers = sum(1 for label in t.truth_labels if label < 0)
    _banner("合成纤维数据", [
        f"输出文件: {args.out}",
        f"束数: {cfg.synthetic.n_bundles}",
        f"纤维总数: {len(t)} (其中离群 {outliers})",
        f"种子: {cfg.synthetic.seed}",
    ])
    return 0


def cmd_train(args: argparse.Namespace, cfg: RunConfig) -> int:
    tractograms = []
    for path in args.tractograms:
        t = filter_by_length(load_tractogram(path), cfg.min_length)
        validation = validate_tractogram(t, cfg.min_length)
        for warning in validation['warnings']:
            logger.warning("%s: %s", path, warning)
        if not validation['is_valid']:
            raise InvalidInputError(f"{path}: {'; '.join(validation['errors'])}")
        tractograms.append(t)

    history = TrainingHistory()
    params, model = train(tractograms, cfg.train, cfg.encoder, history)
    atlas = build_atlas(cfg.encoder, params, model, cfg.train.to_dict(), cfg.train.seed)

    out = Path(args.out)
    save_atlas(atlas, out)
    with atomic_write(history_path(out)) as f:
        history.to_frame().to_csv(f, index=False)
    if args.plot:
        from fibercluster.chart.loss_chart import generate_loss_chart
        generate_loss_chart(history, args.plot)

    lines = [
        f"图谱: {out}",
        f"被试数: {len(tractograms)}",
        f"簇数: {model.n_c}",
        f"预训练 L_p: {format_number(history.pretrain_loss[0])} -> {format_number(history.pretrain_loss[-1])}"
        if history.pretrain_loss else "预训练: 0 次迭代",
    ]
    if history.target_lc:
        lines.append(f"目标刷新 L_c: {format_number(history.target_lc[0])} -> {format_number(history.target_lc[-1])}")
    if history.warnings:
        lines.append(f"警告: {len(history.warnings)} 条")
    _banner("训练完成", lines)
    return 0


def cmd_infer(args: argparse.Namespace, cfg: RunConfig) -> int:
    atlas = load_atlas(args.atlas)
    t = load_tractogram(args.tractogram)
    result = parcellate(t, atlas, cfg.parcellation)
    save_parcellation(result, args.out)
    _banner("纤维分区完成", [
        f"输出文件: {args.out}",
        f"纤维数: {len(result)}",
        f"剔除离群: {int(result.outlier.sum())}",
        f"非空簇: {int((result.count_after > 0).sum())} / {result.n_c}",
    ])
    return 0


def cmd_eval(args: argparse.Namespace, cfg: RunConfig) -> int:
    t = load_tractogram(args.tractogram)
    result = load_parcellation(args.parcellation)
    report = evaluate(t, result, cfg.encoder.n_p)
    if args.out:
        save_report(report, args.out)
    else:
        print(json.dumps(report.to_dict(), ensure_ascii=False))
    if args.distance_matrix:
        kept = [t.fibers[i] for i in result.kept_index]
        save_distance_matrix(pairwise_mdf(kept, cfg.encoder.n_p), args.distance_matrix)
    _banner("评估结果", report.summary_lines())
    return 0


def cmd_gradcheck(args: argparse.Namespace, cfg: RunConfig) -> int:
    seed = args.seed if args.seed is not None else 0
    report = finite_difference_check(seed=seed, zero_input=args.zero_input)
    if args.out:
        with atomic_write(args.out) as f:
            json.dump(report, f, ensure_ascii=False, indent=2)
    lines = [f"{block}: {error:.3e}" for block, error in report['distance_loss'].items()]
    lines += [f"{block} (L_c): {error:.3e}" for block, error in report['clustering_loss'].items()]
    lines.append(f"最大相对误差: {report['max_error']:.3e} (上限 {GRADCHECK_TOLERANCE:.0e})")
    _banner("梯度校验", lines)
    if report['max_error'] > GRADCHECK_TOLERANCE:
        raise FiberClusterError(f"梯度校验未通过: 最大相对误差 {report['max_error']:.3e}")
    return 0


COMMANDS: Dict[str, Callable[[argparse.Namespace, RunConfig], int]] = {
    'synth': cmd_synth,
    'train': cmd_train,
    'infer': cmd_infer,
    'eval': cmd_eval,
    'gradcheck': cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON 配置文件')
    common.add_argument('--seed', type=int, default=None, help='覆盖所有随机种子')
    common.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    add_override_arguments(common)

    parser = argparse.ArgumentParser(prog='fibercluster', description='深度纤维聚类：训练图谱、分区新被试、评估')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth', parents=[common], help='生成合成纤维数据')
    p.add_argument('--out', required=True, help='输出 NDJSON 文件')

    p = sub.add_parser('train', parents=[common], help='训练图谱')
    p.add_argument('tractograms', nargs='+', help='训练被试的纤维文件')
    p.add_argument('--out', required=True, help='输出图谱文件')
    p.add_argument('--plot', default=None, help='训练曲线 PNG（可选）')

    p = sub.add_parser('infer', parents=[common], help='用图谱分区新被试')
    p.add_argument('tractogram', help='被试纤维文件')
    p.add_argument('--atlas', required=True, help='图谱文件')
    p.add_argument('--out', required=True, help='输出分区结果')

    p = sub.add_parser('eval', parents=[common], help='评估分区结果')
    p.add_argument('tractogram', help='被试纤维文件')
    p.add_argument('parcellation', help='分区结果文件')
    p.add_argument('--out', default=None, help='输出评估 JSON（缺省打印到标准输出）')
    p.add_argument('--distance-matrix', default=None, help='保留纤维的 MDF 距离矩阵（二进制，可选）')

    p = sub.add_parser('gradcheck', parents=[common], help='有限差分梯度校验')
    p.add_argument('--zero-input', action='store_true', help='使用全零坐标')
    p.add_argument('--out', default=None, help='输出校验报告 JSON')

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except (FiberClusterError, OSError) as e:
        message = ' '.join(str(e).split())
        print(f"error={type(e).__name__} message={message}", file=sys.stderr)
        logger.debug("命令 %s 失败", args.command, exc_info=True)
        return 1
