"""
分区结果文件（NDJSON）
每根纤维一行 {"index", "cluster", "q", "outlier"}，最后一行是 {"summary": {...}}
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from fibercluster.parcellation.outliers import ParcellationResult
from fibercluster.utils.errors import SchemaError
from fibercluster.utils.helpers import atomic_write

logger = logging.getLogger(__name__)


def result_summary(result: ParcellationResult) -> Dict[str, Any]:
    clusters = result.cluster_frame()
    return {
        'n_fibers': len(result),
        'n_c': result.n_c,
        'removed': int(result.outlier.sum()),
        'removed_fraction': result.removed_fraction,
        'clusters': [
            {
                'cluster': int(row.cluster),
                'count_before': int(row.count_before),
                'count_after': int(row.count_after),
                'mean': float(row.mean),
                'std': float(row.std),
                'threshold': float(row.threshold),
            }
            for row in clusters.itertuples(index=False)
        ],
        'config': result.config,
    }


def save_parcellation(result: ParcellationResult, path: Union[str, Path]) -> None:
    with atomic_write(path) as f:
        for i, (cluster, q, outlier) in enumerate(zip(result.labels, result.q_max, result.outlier)):
            record = {'index': i, 'cluster': int(cluster), 'q': float(q), 'outlier': bool(outlier)}
            f.write(json.dumps(record) + '\n')
        f.write(json.dumps({'summary': result_summary(result)}, ensure_ascii=False) + '\n')
    logger.info("分区结果已保存: %s", path)


CLUSTER_FIELDS = ('count_before', 'count_after', 'mean', 'std', 'threshold')


def _check_record(record: Dict[str, Any], line_number: int) -> None:
    cluster, q = record['cluster'], record['q']
    if isinstance(cluster, bool) or not isinstance(cluster, int):
        raise SchemaError(f"cluster 必须是整数，实际 {cluster!r}", line_number)
    if isinstance(q, bool) or not isinstance(q, (int, float)) or not np.isfinite(q):
        raise SchemaError(f"q 必须是有限实数，实际 {q!r}", line_number)


def load_parcellation(path: Union[str, Path]) -> ParcellationResult:
    """读取分区结果；纤维行必须按 index 连续排列，最后一行为汇总"""
    records: List[Dict[str, Any]] = []
    line_numbers: List[int] = []
    summary = None
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            if summary is not None:
                raise SchemaError("汇总行之后还有内容", line_number)
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"不是合法 JSON: {e.msg}", line_number)
            if not isinstance(record, dict):
                raise SchemaError("每行必须是 JSON 对象", line_number)
            if 'summary' in record:
                summary = record['summary']
                continue
            missing = [k for k in ('index', 'cluster', 'q', 'outlier') if k not in record]
            if missing:
                raise SchemaError(f"缺少字段: {', '.join(missing)}", line_number)
            if record['index'] != len(records):
                raise SchemaError(f"index 应为 {len(records)}，实际 {record['index']}", line_number)
            _check_record(record, line_number)
            records.append(record)
            line_numbers.append(line_number)

    if summary is None:
        raise SchemaError("缺少汇总行")
    try:
        clusters = summary['clusters']
        n_c = int(summary['n_c'])
    except (KeyError, TypeError, ValueError):
        raise SchemaError("汇总行缺少 clusters / n_c")
    if not isinstance(clusters, list) or len(clusters) != n_c:
        raise SchemaError(f"汇总行簇信息与 n_c={n_c} 不一致")
    for j, c in enumerate(clusters):
        missing = [k for k in CLUSTER_FIELDS if not isinstance(c, dict) or k not in c]
        if missing:
            raise SchemaError(f"汇总行第 {j} 个簇缺少字段: {', '.join(missing)}")

    for record, line_number in zip(records, line_numbers):
        if not 0 <= record['cluster'] < n_c:
            raise SchemaError(f"cluster={record['cluster']} 超出 [0, {n_c})", line_number)

    def column(key: str, dtype) -> np.ndarray:
        try:
            return np.array([c[key] for c in clusters], dtype=dtype)
        except (TypeError, ValueError):
            raise SchemaError(f"汇总行字段 {key} 类型错误")

    return ParcellationResult(
        labels=np.array([r['cluster'] for r in records], dtype=np.int64),
        q_max=np.array([r['q'] for r in records], dtype=np.float64),
        outlier=np.array([bool(r['outlier']) for r in records], dtype=bool),
        count_before=column('count_before', np.int64),
        count_after=column('count_after', np.int64),
        mean=column('mean', np.float64),
        std=column('std', np.float64),
        threshold=column('threshold', np.float64),
        config=summary.get('config', {}),
    )
