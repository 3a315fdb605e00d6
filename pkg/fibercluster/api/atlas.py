"""
图谱持久化
一个 JSON 文档：编码器结构与权重、质心、TAP/TSP、训练参数回显、种子、创建时间
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from fibercluster.dfc.assignment import ClusterModel, model_from_dict, model_to_dict
from fibercluster.encoder.network import EncoderConfig, EncoderParams, check_params, param_shapes
from fibercluster.utils.errors import AtlasVersionError, InvalidInputError, SchemaError
from fibercluster.utils.helpers import atomic_write, get_timestamp

logger = logging.getLogger(__name__)

ATLAS_FORMAT = 'fibercluster-atlas'
ATLAS_VERSION = 1


@dataclass
class Atlas:
    """训练得到的多被试纤维聚类图谱"""

    encoder_config: EncoderConfig
    params: EncoderParams
    model: ClusterModel
    train_config: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    created_at: str = ''
    version: int = ATLAS_VERSION

    def __post_init__(self):
        self.validate()

    @property
    def n_c(self) -> int:
        return self.model.n_c

    def validate(self) -> None:
        check_params(self.encoder_config, self.params)
        self.model.validate()
        if self.model.centroids.shape[1] != self.encoder_config.embedding_dim:
            raise InvalidInputError(
                f"质心维度 {self.model.centroids.shape[1]} 与嵌入维度 {self.encoder_config.embedding_dim} 不一致"
            )


def atlas_to_dict(atlas: Atlas) -> Dict[str, Any]:
    """参数块按固定顺序输出，保证同样的图谱序列化结果逐字节相同"""
    return {
        'format': ATLAS_FORMAT,
        'version': atlas.version,
        'created_at': atlas.created_at,
        'seed': int(atlas.seed),
        'encoder_config': atlas.encoder_config.to_dict(),
        'train_config': atlas.train_config,
        'params': {name: atlas.params[name].tolist() for name in param_shapes(atlas.encoder_config)},
        'cluster_model': model_to_dict(atlas.model),
    }


def atlas_from_dict(data: Dict[str, Any]) -> Atlas:
    if not isinstance(data, dict) or data.get('format') != ATLAS_FORMAT:
        raise SchemaError(f"不是图谱文件（format 应为 {ATLAS_FORMAT}）")
    if data.get('version') != ATLAS_VERSION:
        raise AtlasVersionError(data.get('version'), ATLAS_VERSION)
    try:
        ecfg = EncoderConfig(**data['encoder_config'])
        params = {name: np.array(value, dtype=np.float64) for name, value in data['params'].items()}
        model = model_from_dict(data['cluster_model'])
    except (KeyError, TypeError) as e:
        raise SchemaError(f"图谱字段缺失或类型错误: {e}")
    return Atlas(
        encoder_config=ecfg,
        params=params,
        model=model,
        train_config=data.get('train_config', {}),
        seed=int(data.get('seed', 0)),
        created_at=data.get('created_at', ''),
        version=data['version'],
    )


def build_atlas(ecfg: EncoderConfig, params: EncoderParams, model: ClusterModel,
                train_config: Dict[str, Any], seed: int) -> Atlas:
    return Atlas(
        encoder_config=ecfg,
        params={name: np.asarray(value, dtype=np.float64) for name, value in params.items()},
        model=model,
        train_config=dict(train_config),
        seed=int(seed),
        created_at=get_timestamp(),
    )


def save_atlas(atlas: Atlas, path: Union[str, Path]) -> None:
    """原子写入；json 的浮点输出是最短往返表示"""
    text = json.dumps(atlas_to_dict(atlas), ensure_ascii=False)
    with atomic_write(path) as f:
        f.write(text)
        f.write('\n')
    logger.info("图谱已保存: %s (n_c=%d)", path, atlas.n_c)


def load_atlas(path: Union[str, Path]) -> Atlas:
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise SchemaError(f"图谱不是合法 JSON: {e.msg}", e.lineno)
    atlas = atlas_from_dict(data)
    logger.info("图谱已加载: %s (n_c=%d, 版本 %d)", path, atlas.n_c, atlas.version)
    return atlas
