"""
学習状態のチェックポイント化（パラメータ + Adam モーメント + ステップ）

レコード名:
    <store>/<param>                 パラメータ
    adam/<store>/m/<param>          1次モーメント
    adam/<store>/v/<param>          2次モーメント
    adam/<store>/step               Adam ステップ数
"""
from typing import Dict

import numpy as np

from src.errors import ShapeMismatch
from src.nn_core import ParameterStore


def adam_to_records(store: ParameterStore, prefix: str) -> Dict[str, np.ndarray]:
    records = {}
    for name in store.names():
        records[f"adam/{prefix}/m/{name}"] = store.m[name]
        records[f"adam/{prefix}/v/{name}"] = store.v[name]
    records[f"adam/{prefix}/step"] = np.array(float(store.step_count))
    return records


def adam_from_records(store: ParameterStore, records: Dict[str, np.ndarray], prefix: str) -> None:
    key = f"adam/{prefix}/step"
    if key not in records:
        raise ShapeMismatch(f"checkpoint has no Adam state for '{prefix}'")
    for name in store.names():
        for moment, target in (("m", store.m), ("v", store.v)):
            arr = np.asarray(records[f"adam/{prefix}/{moment}/{name}"])
            if arr.shape != target[name].shape:
                raise ShapeMismatch(f"adam/{prefix}/{moment}/{name}: {arr.shape} != {target[name].shape}")
            target[name] = arr.copy()
    store.step_count = int(records[key])


def decayed_lr(base_lr: float, step: int, total_steps: int, enabled: bool, final_ratio: float = 0.1) -> float:
    """指数減衰（total_steps で base_lr·final_ratio に到達）"""
    if not enabled or total_steps <= 0:
        return base_lr
    return base_lr * final_ratio ** (step / total_steps)
