"""
線形融合と最小二乗による重み推定

    C = κ Σ_k w_k S_k

w ≡ 1 なら白色光合成（compose_rgb）と一致する。
重み推定は s_num × s_num の正規方程式をリッジ付きコレスキー分解で解く。
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.errors import InvalidArgument, ShapeMismatch, SingularSystem
from src.spectral_color import SPD, BandPartition, spd_samples

logger = logging.getLogger(__name__)

RIDGE_SCALE = 1e-8


@dataclass
class LinearFusionWeights:
    """
    Attributes:
        weights: [s_num]（バンド共通）または [s_num, 3]（チャネル別）
        residual_rms: 推定時の残差 RMS（手入力の重みでは None）
    """
    weights: np.ndarray
    residual_rms: Optional[float] = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim not in (1, 2) or (self.weights.ndim == 2 and self.weights.shape[1] != 3):
            raise ShapeMismatch(f"weights must be [s] or [s, 3], got {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)):
            raise InvalidArgument("fusion weights must be finite")

    @property
    def s_num(self) -> int:
        return self.weights.shape[0]

    @property
    def per_channel(self) -> bool:
        return self.weights.ndim == 2

    @classmethod
    def ones(cls, s_num: int) -> "LinearFusionWeights":
        return cls(np.ones(s_num))


def _weights_array(weights) -> np.ndarray:
    if isinstance(weights, LinearFusionWeights):
        return weights.weights
    return np.asarray(weights, dtype=np.float64)


def linear_fuse(stack, weights=None, kappa: float = 1.0) -> np.ndarray:
    """
    スペクトルマップスタック [..., s, 3] を重み付き合成する

    Args:
        weights: [s] / [s, 3] / LinearFusionWeights。None なら全バンド 1

    Raises:
        ShapeMismatch: バンド数の不一致
    """
    stack = np.asarray(stack)
    if stack.ndim < 2 or stack.shape[-1] != 3:
        raise ShapeMismatch(f"stack must be [..., s_num, 3], got {stack.shape}")
    s = stack.shape[-2]
    w = np.ones(s) if weights is None else _weights_array(weights)
    if w.shape[0] != s:
        raise ShapeMismatch(f"{w.shape[0]} weights for {s} bands")
    w = w[:, None] if w.ndim == 1 else w
    return kappa * np.sum(np.ascontiguousarray(stack * w), axis=-2)


def _design(stack: np.ndarray, channel: Optional[int]) -> np.ndarray:
    """[観測数, s] の計画行列（channel=None なら全チャネルをまとめる）"""
    stack = np.asarray(stack, dtype=np.float64)
    s = stack.shape[-2]
    if channel is None:
        return np.moveaxis(stack, -2, -1).reshape(-1, s)
    return stack[..., channel].reshape(-1, s)


def _solve_normal(G: np.ndarray, b: np.ndarray) -> np.ndarray:
    s = G.shape[0]
    ridge = RIDGE_SCALE * float(np.trace(G)) / s
    try:
        L = np.linalg.cholesky(G + ridge * np.eye(s))
    except np.linalg.LinAlgError as e:
        raise SingularSystem(f"Gram matrix not positive definite after ridge {ridge:.3e}: {e}")
    y = np.linalg.solve(L, b)
    return np.linalg.solve(L.T, y)


def fit_weights_least_squares(
    stacks: Sequence,
    targets: Sequence,
    per_channel: bool = False,
) -> LinearFusionWeights:
    """
    Σ‖Σ_k w_k S_k − C‖² を最小化する重みを求める

    Args:
        stacks: [H, W, s, 3] のリスト
        targets: [H, W, 3] のリスト
        per_channel: True ならチャネル別に [s, 3] の重み

    Returns:
        LinearFusionWeights（residual_rms 付き）

    Raises:
        SingularSystem: リッジ補正後も Gram 行列が正定値でない
    """
    if len(stacks) == 0 or len(stacks) != len(targets):
        raise ShapeMismatch(f"{len(stacks)} stacks vs {len(targets)} targets")
    s = np.asarray(stacks[0]).shape[-2]
    channels = [None] if not per_channel else [0, 1, 2]
    G = {c: np.zeros((s, s)) for c in channels}
    b = {c: np.zeros(s) for c in channels}
    n_obs = 0

    # 画像順に固定した順序で Gram 行列を積算
    for stack, target in zip(stacks, targets):
        stack = np.asarray(stack, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        if stack.shape[-2] != s or stack.shape[:-2] != target.shape[:-1] or target.shape[-1] != 3:
            raise ShapeMismatch(f"stack {stack.shape} incompatible with target {target.shape}")
        for c in channels:
            A = _design(stack, c)
            y = target.reshape(-1) if c is None else target[..., c].reshape(-1)
            G[c] += A.T @ A
            b[c] += A.T @ y
        n_obs += target.size
    if n_obs < s:
        raise InvalidArgument(f"{n_obs} observations for {s} unknowns")

    if per_channel:
        w = np.stack([_solve_normal(G[c], b[c]) for c in channels], axis=-1)
    else:
        w = _solve_normal(G[None], b[None])

    sq_err = 0.0
    for stack, target in zip(stacks, targets):
        sq_err += float(np.sum((linear_fuse(stack, w) - np.asarray(target)) ** 2))
    rms = float(np.sqrt(sq_err / n_obs))
    logger.info(f"✅ 最小二乗重み推定: s_num={s} per_channel={per_channel} residual_rms={rms:.3e}")
    return LinearFusionWeights(w, residual_rms=rms)


def weights_vs_spd(
    weights,
    partition: BandPartition,
    spd: SPD,
    exclude_edges: int = 1,
) -> float:
    """
    推定重みと参照 SPD（バンド中心で標本化）のピアソン相関

    Args:
        exclude_edges: 両端から除外するバンド数（380/780nm 付近の暗いバンド）
    """
    w = _weights_array(weights)
    if w.ndim == 2:
        w = w.mean(axis=1)
    if w.shape[0] != partition.s_num:
        raise ShapeMismatch(f"{w.shape[0]} weights for s_num={partition.s_num}")
    ref = spd_samples(spd, partition.centers)
    sl = slice(exclude_edges, partition.s_num - exclude_edges)
    if len(w[sl]) < 2:
        raise InvalidArgument("need at least 2 interior bands for a correlation")
    return float(np.corrcoef(w[sl], ref[sl])[0, 1])


# ==================== テキスト入出力 ====================

def write_weights_file(path: Union[str, Path], weights: LinearFusionWeights, partition: BandPartition) -> Path:
    """1行1バンド: 中心波長 と 重み（チャネル別なら R G B の3列）"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    w = weights.weights
    if w.shape[0] != partition.s_num:
        raise ShapeMismatch(f"{w.shape[0]} weights for s_num={partition.s_num}")
    cols = {"center_nm": partition.centers}
    if weights.per_channel:
        cols.update({"w_r": w[:, 0], "w_g": w[:, 1], "w_b": w[:, 2]})
    else:
        cols["w"] = w
    df = pd.DataFrame(cols)
    header = "# center_nm " + " ".join(c for c in df.columns if c != "center_nm")
    if weights.residual_rms is not None:
        header += f"\n# residual_rms {weights.residual_rms:.9g}"
    with open(path, "w", encoding="utf-8") as f:
        f.write(header + "\n")
        df.to_csv(f, sep=" ", header=False, index=False, float_format="%.17g")
    return path


def read_weights_file(path: Union[str, Path]) -> LinearFusionWeights:
    data = np.loadtxt(Path(path), comments="#", ndmin=2)
    if data.shape[1] == 2:
        return LinearFusionWeights(data[:, 1])
    if data.shape[1] == 4:
        return LinearFusionWeights(data[:, 1:])
    raise ShapeMismatch(f"{path}: expected 2 or 4 columns, got {data.shape[1]}")
