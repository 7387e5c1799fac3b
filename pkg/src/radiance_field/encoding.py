"""
位置エンコーディング γ

    γ(v) = [v, sin(2^0 π v), cos(2^0 π v), ..., sin(2^(L-1) π v), cos(2^(L-1) π v)]

各座標に独立に適用する。出力幅 = 3 * (include_identity + 2 * num_freqs)。
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EncodingConfig:
    num_freqs_position: int = 10
    num_freqs_direction: int = 4
    include_identity: bool = True

    def width(self, num_freqs: int) -> int:
        return 3 * (int(self.include_identity) + 2 * num_freqs)

    @property
    def position_width(self) -> int:
        return self.width(self.num_freqs_position)

    @property
    def direction_width(self) -> int:
        return self.width(self.num_freqs_direction)


def encode(v, num_freqs: int, include_identity: bool = True) -> np.ndarray:
    """
    Args:
        v: [3] または [N, 3]
        num_freqs: 周波数数 L

    Returns:
        [3*(id+2L)] または [N, 3*(id+2L)]
    """
    v = np.asarray(v, dtype=np.float64)
    parts = [v] if include_identity else []
    for k in range(num_freqs):
        arg = (2.0 ** k) * np.pi * v
        parts.append(np.sin(arg))
        parts.append(np.cos(arg))
    if not parts:
        return np.zeros(v.shape[:-1] + (0,))
    return np.concatenate(parts, axis=-1)


def encode_position(x, cfg: EncodingConfig) -> np.ndarray:
    return encode(x, cfg.num_freqs_position, cfg.include_identity)


def encode_direction(d, cfg: EncodingConfig) -> np.ndarray:
    return encode(d, cfg.num_freqs_direction, cfg.include_identity)
