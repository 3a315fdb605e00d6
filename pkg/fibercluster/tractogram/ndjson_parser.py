"""
纤维文件解析模块
读写 NDJSON 格式的纤维集合：首行为格式头，之后每行一根纤维
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

from fibercluster.tractogram.fiber import Fiber, Tractogram
from fibercluster.utils.errors import SchemaError
from fibercluster.utils.helpers import atomic_write

logger = logging.getLogger(__name__)

FORMAT_NAME = 'fibercluster-tractogram'
FORMAT_VERSION = 1

# 每行必需字段
REQUIRED_FIELDS = ['points', 'regions', 'parcels']


def _parse_header(record: Any, line_number: int) -> str:
    if not isinstance(record, dict) or record.get('format') != FORMAT_NAME:
        raise SchemaError(f"缺少格式头 {{\"format\": \"{FORMAT_NAME}\", ...}}", line_number)
    if record.get('version') != FORMAT_VERSION:
        raise SchemaError(f"不支持的格式版本: {record.get('version')}", line_number)
    return str(record.get('subject', ''))


def _flatten_regions(value: Any, line_number: int) -> List[int]:
    """regions 允许是标签列表，也允许是逐点标签数组（嵌套列表），统一展平成集合"""
    labels: List[int] = []
    stack = [value]
    while stack:
        item = stack.pop()
        if isinstance(item, list):
            stack.extend(item)
        elif isinstance(item, int) and not isinstance(item, bool):
            labels.append(item)
        else:
            raise SchemaError(f"regions 中包含非整数值: {item!r}", line_number)
    return labels


def _parse_fiber(record: Any, line_number: int, index: int) -> Dict[str, Any]:
    if not isinstance(record, dict):
        raise SchemaError("每行必须是 JSON 对象", line_number)

    missing = [name for name in REQUIRED_FIELDS if name not in record]
    if missing:
        raise SchemaError(f"缺少必需字段: {', '.join(missing)}", line_number)

    points = record['points']
    if not isinstance(points, list) or not all(isinstance(p, list) and len(p) == 3 for p in points):
        raise SchemaError("points 必须是 [[x, y, z], ...] 形式", line_number)
    for p in points:
        for c in p:
            if isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c):
                raise SchemaError(f"坐标必须是有限数值: {c!r}", line_number)

    parcels = record['parcels']
    if (not isinstance(parcels, list) or len(parcels) != 2
            or not all(isinstance(p, int) and not isinstance(p, bool) for p in parcels)):
        raise SchemaError("parcels 必须是两个整数", line_number)

    truth = record.get('truth')
    if truth is not None and (not isinstance(truth, int) or isinstance(truth, bool)):
        raise SchemaError("truth 必须是整数", line_number)

    source_id = record.get('source_id', index)
    if not isinstance(source_id, int) or isinstance(source_id, bool):
        raise SchemaError("source_id 必须是整数", line_number)

    try:
        fiber = Fiber(
            points=[[float(c) for c in p] for p in points],
            region_set=frozenset(_flatten_regions(record['regions'], line_number)),
            endpoint_parcels=(parcels[0], parcels[1]),
            source_id=source_id,
        )
    except SchemaError:
        raise
    except ValueError as e:
        raise SchemaError(str(e), line_number) from e

    return {'fiber': fiber, 'truth': truth}


def parse_lines(lines: Iterable[str]) -> Tractogram:
    """
    解析 NDJSON 文本行

    Args:
        lines: 文本行（可包含换行符）

    Returns:
        纤维集合；空输入返回空集合
    """
    subject_id: Optional[str] = None
    fibers: List[Fiber] = []
    truths: List[Optional[int]] = []

    for line_number, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text:
            continue
        try:
            record = json.loads(text)
        except json.JSONDecodeError as e:
            raise SchemaError(f"JSON 解析失败: {e.msg}", line_number) from e

        if subject_id is None:
            subject_id = _parse_header(record, line_number)
            continue

        parsed = _parse_fiber(record, line_number, len(fibers))
        fibers.append(parsed['fiber'])
        truths.append(parsed['truth'])

    # truth 只有在每行都提供时才保留
    truth_labels = truths if truths and all(t is not None for t in truths) else None
    if truths and truth_labels is None and any(t is not None for t in truths):
        logger.warning("部分纤维缺少 truth 字段，已忽略全部真值标签")

    return Tractogram(fibers=fibers, subject_id=subject_id or '', truth_labels=truth_labels)


def load_tractogram(path: Union[str, Path]) -> Tractogram:
    """
    读取纤维文件

    Args:
        path: NDJSON 文件路径

    Returns:
        纤维集合
    """
    with open(path, 'r', encoding='utf-8') as f:
        tractogram = parse_lines(f)
    logger.info("读取 %s: %d 根纤维", path, len(tractogram))
    return tractogram


def fiber_record(fiber: Fiber, truth: Optional[int] = None) -> Dict[str, Any]:
    """单根纤维的 JSON 记录"""
    record: Dict[str, Any] = {
        'points': fiber.points.tolist(),
        'regions': sorted(fiber.region_set),
        'parcels': list(fiber.endpoint_parcels),
    }
    if truth is not None:
        record['truth'] = int(truth)
    if fiber.source_id is not None:
        record['source_id'] = int(fiber.source_id)
    return record


def save_tractogram(t: Tractogram, path: Union[str, Path]) -> None:
    """
    写入纤维文件（原子写）

    float 使用 Python 的最短往返表示，读回后逐位一致
    """
    header = {'format': FORMAT_NAME, 'version': FORMAT_VERSION, 'subject': t.subject_id}
    with atomic_write(path) as f:
        f.write(json.dumps(header) + '\n')
        for i, fiber in enumerate(t.fibers):
            truth = None if t.truth_labels is None else t.truth_labels[i]
            f.write(json.dumps(fiber_record(fiber, truth)) + '\n')
    logger.info("写入 %s: %d 根纤维", path, len(t))
