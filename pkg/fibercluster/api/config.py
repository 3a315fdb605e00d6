"""
运行配置
汇总合成数据、编码器、训练、推理四组参数；优先级：默认值 < JSON 文件 < --seed < --<字段>
"""

import argparse
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union, get_args, get_origin, get_type_hints

from fibercluster.dfc.training import TrainConfig
from fibercluster.encoder.network import EncoderConfig
from fibercluster.parcellation.inference import ParcellationConfig
from fibercluster.tractogram.synthetic import SyntheticSpec
from fibercluster.utils.errors import InvalidInputError

logger = logging.getLogger(__name__)

# JSON 分节名 -> 配置类
SECTIONS = {
    'synthetic': SyntheticSpec,
    'encoder': EncoderConfig,
    'train': TrainConfig,
    'parcellation': ParcellationConfig,
}

# 纤维最小长度默认值（mm）
DEFAULT_MIN_LENGTH = 40.0


@dataclass
class RunConfig:
    """一次运行的全部参数"""

    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    parcellation: ParcellationConfig = field(default_factory=ParcellationConfig)
    min_length: float = DEFAULT_MIN_LENGTH

    def validate(self) -> None:
        self.synthetic.validate()
        self.encoder.validate()
        self.train.validate()
        self.parcellation.validate()
        if self.min_length < 0:
            raise InvalidInputError(f"min_length 必须非负，实际 {self.min_length}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def with_values(self, values: Dict[str, Any]) -> 'RunConfig':
        """
        按字段名覆盖；同名字段（如 seed、anatomy）在每个含有它的分节里都被覆盖

        未知字段抛出 InvalidInputError
        """
        values = dict(values)
        updated = {}
        if 'min_length' in values:
            updated['min_length'] = float(values.pop('min_length'))
        known = set()
        for section, cls in SECTIONS.items():
            names = {f.name for f in fields(cls)}
            own = {k: v for k, v in values.items() if k in names}
            known |= set(own)
            updated[section] = replace(getattr(self, section), **own)
        unknown = sorted(set(values) - known)
        if unknown:
            raise InvalidInputError(f"未知的配置字段: {', '.join(unknown)}")
        return replace(self, **updated)


def config_from_dict(data: Dict[str, Any], base: Optional[RunConfig] = None) -> RunConfig:
    """
    从字典构造配置，支持分节写法 {"train": {...}} 与平铺写法 {"n_c": 20}

    分节内的字段只作用于该分节
    """
    if not isinstance(data, dict):
        raise InvalidInputError("配置必须是 JSON 对象")
    cfg = base or RunConfig()
    flat = {k: v for k, v in data.items() if k not in SECTIONS}
    updated = {}
    for section, cls in SECTIONS.items():
        if section not in data:
            continue
        values = data[section]
        if not isinstance(values, dict):
            raise InvalidInputError(f"配置分节 {section} 必须是 JSON 对象")
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - names)
        if unknown:
            raise InvalidInputError(f"分节 {section} 中有未知字段: {', '.join(unknown)}")
        updated[section] = replace(getattr(cfg, section), **values)
    return replace(cfg, **updated).with_values(flat)


def load_run_config(path: Union[str, Path]) -> RunConfig:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"配置文件 {path} 不是合法 JSON: {e.msg} (第 {e.lineno} 行)")
    logger.info("读取配置: %s", path)
    return config_from_dict(data)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise argparse.ArgumentTypeError(f"无法解析为布尔值: {text}")


def _parse_int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"需要逗号分隔的整数列表: {text}")


def _optional(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    def inner(text: str) -> Any:
        return None if text.strip().lower() in ('none', 'null', '') else parse(text)
    return inner


def _parser_for(annotation: Any) -> Callable[[str], Any]:
    origin = get_origin(annotation)
    if origin is Union:
        inner = [a for a in get_args(annotation) if a is not type(None)]
        return _optional(_parser_for(inner[0]))
    if origin in (list, List):
        return _parse_int_list
    if annotation is bool:
        return _parse_bool
    if annotation in (int, float, str):
        return annotation
    raise TypeError(f"不支持的配置字段类型: {annotation}")


def override_fields() -> Dict[str, Callable[[str], Any]]:
    """所有可在命令行覆盖的字段名 -> 解析函数（seed 由 --seed 单独处理）"""
    parsers: Dict[str, Callable[[str], Any]] = {'min_length': float}
    for cls in SECTIONS.values():
        hints = get_type_hints(cls)
        for f in fields(cls):
            if f.name != 'seed':
                parsers.setdefault(f.name, _parser_for(hints[f.name]))
    return parsers


def add_override_arguments(parser: argparse.ArgumentParser) -> None:
    """为每个配置字段注册 --<字段>（下划线与连字符两种写法）"""
    group = parser.add_argument_group('配置覆盖')
    for name, parse in override_fields().items():
        flags = [f'--{name}']
        if '_' in name:
            flags.append(f"--{name.replace('_', '-')}")
        group.add_argument(*flags, dest=name, type=parse, default=argparse.SUPPRESS, metavar='VALUE')


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """按优先级合并：默认值 < --config 文件 < --seed < --<字段>"""
    config_path = getattr(args, 'config', None)
    cfg = load_run_config(config_path) if config_path else RunConfig()
    if getattr(args, 'seed', None) is not None:
        cfg = cfg.with_values({'seed': int(args.seed)})
    overrides = {name: getattr(args, name) for name in override_fields() if hasattr(args, name)}
    if overrides:
        cfg = cfg.with_values(overrides)
    cfg.validate()
    return cfg
