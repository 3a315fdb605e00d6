"""
评估报告模块
对一次分区结果计算 DB / WMPG / TAPC / TSPC，合成数据上附加 ARI 与离群检出率
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
from sklearn.metrics import adjusted_rand_score

from fibercluster.analyzer.coherence import cluster_sizes, tapc_per_cluster, tspc_per_cluster, wmpg
from fibercluster.analyzer.db_index import analyze_db
from fibercluster.parcellation.outliers import ParcellationResult
from fibercluster.tractogram.fiber import Tractogram
from fibercluster.tractogram.synthetic import OUTLIER_TRUTH
from fibercluster.utils.errors import InvalidInputError
from fibercluster.utils.helpers import atomic_write, format_number, format_percentage

logger = logging.getLogger(__name__)


@dataclass
class MetricsReport:
    """
    单个被试的评估结果

    per_cluster 为按簇号对齐的列数组（长度 n_c），空簇的分数为 None
    """

    db: float
    wmpg: float
    tapc: float
    tspc: float
    per_cluster: Dict[str, List[Any]] = field(default_factory=dict)
    n_fibers: int = 0
    n_kept: int = 0
    removed_fraction: float = 0.0
    ari: Optional[float] = None
    outlier_recall: Optional[float] = None
    false_removal: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'db': self.db,
            'wmpg': self.wmpg,
            'tapc': self.tapc,
            'tspc': self.tspc,
            'per_cluster': self.per_cluster,
            'n_fibers': self.n_fibers,
            'n_kept': self.n_kept,
            'removed_fraction': self.removed_fraction,
        }
        for key in ('ari', 'outlier_recall', 'false_removal'):
            value = getattr(self, key)
            if value is not None:
                data[key] = value
        return data

    def summary_lines(self) -> List[str]:
        lines = [
            f"DB:   {format_number(self.db)}",
            f"WMPG: {format_number(self.wmpg)}",
            f"TAPC: {format_number(self.tapc)}",
            f"TSPC: {format_number(self.tspc)}",
            f"剔除比例: {format_percentage(self.removed_fraction)}",
        ]
        if self.ari is not None:
            lines.append(f"ARI:  {format_number(self.ari)}")
        if self.outlier_recall is not None:
            lines.append(f"离群检出率: {format_percentage(self.outlier_recall)}")
        if self.false_removal is not None:
            lines.append(f"误剔除率: {format_percentage(self.false_removal)}")
        return lines


def _column(values: pd.Series) -> List[Any]:
    return [None if isinstance(v, float) and math.isnan(v) else v for v in values.tolist()]


def _truth_scores(truth: np.ndarray, result: ParcellationResult) -> Dict[str, Optional[float]]:
    injected = truth == OUTLIER_TRUTH
    bundle = ~injected
    kept_bundle = bundle & ~result.outlier
    scores: Dict[str, Optional[float]] = {'ari': None, 'outlier_recall': None, 'false_removal': None}
    if kept_bundle.any():
        scores['ari'] = float(adjusted_rand_score(truth[kept_bundle], result.labels[kept_bundle]))
    if injected.any():
        scores['outlier_recall'] = float(result.outlier[injected].mean())
    if bundle.any():
        scores['false_removal'] = float(result.outlier[bundle].mean())
    return scores


def evaluate(t: Tractogram, result: ParcellationResult, n_p: int) -> MetricsReport:
    """
    在离群剔除后保留的纤维上计算四项指标

    Args:
        t: 被试纤维集合
        result: 同一被试的分区结果
        n_p: DB 指数使用的重采样点数

    Returns:
        MetricsReport
    """
    if len(t) != len(result):
        raise InvalidInputError(f"纤维数 {len(t)} 与分区结果行数 {len(result)} 不一致")
    kept = result.kept_index
    fibers = [t.fibers[i] for i in kept]
    labels = result.labels[kept]
    if len(fibers) == 0:
        raise InvalidInputError("离群剔除后没有剩余纤维")

    db_result = analyze_db(fibers, labels, n_p)
    tapc_scores = tapc_per_cluster(fibers, labels)
    tspc_scores = tspc_per_cluster(fibers, labels)
    sizes, detected = cluster_sizes(labels, result.n_c)

    frame = pd.DataFrame({'cluster': np.arange(result.n_c), 'size': sizes, 'detected': detected})
    frame['tapc'] = frame['cluster'].map(tapc_scores)
    frame['tspc'] = frame['cluster'].map(tspc_scores)
    frame['db_ratio'] = frame['cluster'].map({row['cluster']: row['ratio'] for row in db_result.per_cluster})
    frame['medoid'] = frame['cluster'].map({row['cluster']: kept[row['medoid']] for row in db_result.per_cluster})

    per_cluster = {
        'cluster': frame['cluster'].astype(int).tolist(),
        'size': frame['size'].astype(int).tolist(),
        'detected': frame['detected'].astype(bool).tolist(),
        'tapc': _column(frame['tapc']),
        'tspc': _column(frame['tspc']),
        'db_ratio': _column(frame['db_ratio']),
        'medoid': [None if v is None else int(v) for v in _column(frame['medoid'])],
    }

    report = MetricsReport(
        db=db_result.db,
        wmpg=wmpg(labels, result.n_c),
        tapc=float(np.mean(list(tapc_scores.values()))),
        tspc=float(np.mean(list(tspc_scores.values()))),
        per_cluster=per_cluster,
        n_fibers=len(t),
        n_kept=len(fibers),
        removed_fraction=result.removed_fraction,
    )
    if t.truth_labels is not None:
        for key, value in _truth_scores(np.asarray(t.truth_labels, dtype=np.int64), result).items():
            setattr(report, key, value)

    logger.info("评估完成: DB=%.4f WMPG=%.4f TAPC=%.4f TSPC=%.4f",
                report.db, report.wmpg, report.tapc, report.tspc)
    return report


def save_report(report: MetricsReport, path: Union[str, Path]) -> None:
    with atomic_write(path) as f:
        json.dump(report.to_dict(), f, ensure_ascii=False, indent=2)
        f.write('\n')
    logger.info("评估报告已保存: %s", path)
