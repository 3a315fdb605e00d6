"""
训练曲线图表模块
把 TrainingHistory 的损失曲线画成 PNG
"""

import logging
from pathlib import Path
from typing import Union

import matplotlib
# 非交互式后端（必须在导入 pyplot 之前）
matplotlib.use('Agg')

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from fibercluster.dfc.training import TrainingHistory
from fibercluster.utils.helpers import atomic_write

logger = logging.getLogger(__name__)

plt.rcParams['font.sans-serif'] = ['Arial Unicode MS', 'SimHei', 'WenQuanYi Micro Hei', 'Noto Sans CJK SC',
                                   'DejaVu Sans', 'sans-serif']
plt.rcParams['axes.unicode_minus'] = False
sns.set_style("whitegrid")

# 滑动平均窗口
SMOOTH_WINDOW = 20


def _smooth(values: pd.Series) -> pd.Series:
    return values.rolling(SMOOTH_WINDOW, min_periods=1).mean()


def save_chart(fig, path: Union[str, Path]) -> None:
    with atomic_write(path, mode='wb') as f:
        fig.savefig(f, format='png', dpi=100, bbox_inches='tight', facecolor='white')
    plt.close(fig)


def generate_loss_chart(history: TrainingHistory, path: Union[str, Path]) -> None:
    """
    三幅子图：预训练 L_p、聚类阶段 L_p 与 L_c、每次目标刷新时的全样本 L_c

    Args:
        history: 训练记录
        path: 输出 PNG 路径
    """
    frame = history.to_frame()
    palette = sns.color_palette("deep")
    fig, axes = plt.subplots(1, 3, figsize=(16, 4.5))

    pre = frame[frame['stage'] == 'pretrain']
    ax = axes[0]
    if len(pre):
        ax.plot(pre['iteration'], pre['loss_p'], color=palette[0], alpha=0.3, linewidth=1)
        ax.plot(pre['iteration'], _smooth(pre['loss_p']), color=palette[0], linewidth=2)
    ax.set_title('预训练 L_p', fontsize=14, fontweight='bold')
    ax.set_xlabel('迭代')

    clu = frame[frame['stage'] == 'cluster']
    ax = axes[1]
    if len(clu):
        ax.plot(clu['iteration'], _smooth(clu['loss_p']), color=palette[0], linewidth=2, label='L_p')
        twin = ax.twinx()
        twin.plot(clu['iteration'], _smooth(clu['loss_c']), color=palette[3], linewidth=2, label='L_c')
        twin.set_ylabel('L_c')
        twin.grid(False)
    ax.set_title('聚类阶段', fontsize=14, fontweight='bold')
    ax.set_xlabel('迭代')
    ax.set_ylabel('L_p')

    ax = axes[2]
    if history.target_lc:
        ax.plot(np.arange(len(history.target_lc)), history.target_lc, marker='o', color=palette[2], linewidth=2)
    ax.set_title('目标刷新时的 L_c', fontsize=14, fontweight='bold')
    ax.set_xlabel('刷新次数')

    plt.tight_layout()
    save_chart(fig, path)
    logger.info("训练曲线已保存: %s", path)
