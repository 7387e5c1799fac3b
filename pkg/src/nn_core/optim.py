"""
パラメータストアと Adam 最適化

ParameterStore は名前付きパラメータと Adam の状態（1次/2次モーメント、ステップ数）を保持する。
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.errors import InvalidArgument, MissingGradient, ShapeMismatch
from src.nn_core.tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class AdamConfig:
    """Adam ハイパーパラメータ"""
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class ParameterStore:
    """名前付きパラメータ + Adam 状態"""

    def __init__(self, params: Optional[Dict[str, Tensor]] = None):
        self._params: Dict[str, Tensor] = {}
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.step_count: int = 0
        for name, p in (params or {}).items():
            self.add(name, p)

    def add(self, name: str, param: Tensor) -> Tensor:
        if name in self._params:
            raise InvalidArgument(f"Duplicate parameter name: {name}")
        param.requires_grad = True
        self._params[name] = param
        self.m[name] = np.zeros_like(param.data)
        self.v[name] = np.zeros_like(param.data)
        return param

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def items(self) -> List[Tuple[str, Tensor]]:
        return list(self._params.items())

    def names(self) -> List[str]:
        return list(self._params)

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self._params.values()))

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def snapshot(self) -> Dict[str, np.ndarray]:
        """パラメータ値のコピー（読み取り専用の共有用）"""
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray], strict: bool = True) -> None:
        """配列辞書からパラメータ値を復元する"""
        for name, p in self._params.items():
            if name not in arrays:
                if strict:
                    raise ShapeMismatch(f"Missing parameter in checkpoint: {name}")
                continue
            arr = np.asarray(arrays[name])
            if arr.shape != p.shape:
                raise ShapeMismatch(f"{name}: checkpoint shape {arr.shape} != model shape {p.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)


def adam_step(
    store: ParameterStore,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """
    バイアス補正付き Adam 更新をその場で適用し、勾配をクリアする

    Args:
        store: 更新対象（全パラメータの grad が計算済みであること）
        lr: 学習率

    Raises:
        MissingGradient: grad が None のパラメータがある
    """
    missing = [name for name, p in store.items() if p.grad is None]
    if missing:
        raise MissingGradient(f"No gradient for: {', '.join(missing[:5])}" + (" ..." if len(missing) > 5 else ""))

    store.step_count += 1
    t = store.step_count
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in store.items():
        g = p.grad
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)
        p.grad = None
