"""
学習損失

    L = L_spectral + λ_RGB · L_RGB
    L_spectral = Σ_k w_s,k · ( mean_R ‖Ŝ^c_k − S_k‖² + mean_R ‖Ŝ^f_k − S_k‖² )
    w_s,k = 2^(P_max / P_k)

P_k はバンド k の PSNR（粗モデル予測）の指数移動平均。更新前は w_s ≡ 2。
"""
import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from src.errors import InvalidArgument, ShapeMismatch
from src.metrics import PSNR_CLAMP_DB, per_band_psnr
from src.nn_core import Tensor, as_tensor, mse

logger = logging.getLogger(__name__)

# P_k > 0 を保つための下限
PSNR_FLOOR_DB = 1.0

DEFAULT_LAMBDA_RGB = 1.1
DEFAULT_WS_INTERVAL = 100
DEFAULT_EMA_DECAY = 0.9


@dataclass
class LossConfig:
    lambda_rgb: float = DEFAULT_LAMBDA_RGB
    ws_interval: int = DEFAULT_WS_INTERVAL
    ema_decay: float = DEFAULT_EMA_DECAY
    use_ws: bool = True

    def __post_init__(self):
        if not self.lambda_rgb > 0:
            raise InvalidArgument(f"lambda_rgb must be > 0, got {self.lambda_rgb}")
        if self.ws_interval < 1:
            raise InvalidArgument(f"ws_interval must be >= 1, got {self.ws_interval}")
        if not 0.0 <= self.ema_decay < 1.0:
            raise InvalidArgument(f"ema_decay must be in [0, 1), got {self.ema_decay}")


@dataclass
class SpectralWeights:
    """
    Attributes:
        s_num: バンド数
        p_lambda: バンドごとの PSNR 推定 [dB]（未更新なら None）
        n_updates: update_ws の呼び出し回数
        uniform: True なら w_s ≡ 1（w_s 無効化のアブレーション）
    """
    s_num: int
    p_lambda: Optional[np.ndarray] = None
    n_updates: int = 0
    uniform: bool = False

    def __post_init__(self):
        if self.s_num < 1:
            raise InvalidArgument(f"s_num must be >= 1, got {self.s_num}")
        if self.p_lambda is not None:
            self.p_lambda = np.asarray(self.p_lambda, dtype=np.float64)
            if self.p_lambda.shape != (self.s_num,):
                raise ShapeMismatch(f"p_lambda shape {self.p_lambda.shape} != ({self.s_num},)")
            if np.any(self.p_lambda <= 0):
                raise InvalidArgument("p_lambda values must be > 0")

    @property
    def p_max(self) -> Optional[float]:
        return None if self.p_lambda is None else float(self.p_lambda.max())

    @property
    def w_s(self) -> np.ndarray:
        if self.uniform:
            return np.ones(self.s_num)
        if self.p_lambda is None:
            return np.full(self.s_num, 2.0)
        return ws_from_psnr(self.p_lambda)

    def to_records(self, prefix: str = "ws") -> dict:
        p = np.zeros(self.s_num) if self.p_lambda is None else self.p_lambda
        return {f"{prefix}/p_lambda": p, f"{prefix}/n_updates": np.array(float(self.n_updates))}

    @classmethod
    def from_records(cls, records: dict, uniform: bool = False, prefix: str = "ws") -> "SpectralWeights":
        p = np.asarray(records[f"{prefix}/p_lambda"], dtype=np.float64)
        n = int(records[f"{prefix}/n_updates"])
        return cls(len(p), None if n == 0 else p, n, uniform)


def ws_from_psnr(p_lambda) -> np.ndarray:
    """w_s = 2^(P_max / P_λ)"""
    p = np.asarray(p_lambda, dtype=np.float64)
    if np.any(p <= 0):
        raise InvalidArgument("PSNR values must be > 0")
    return np.power(2.0, p.max() / p)


def update_ws(coarse, targets, state: SpectralWeights, cfg: LossConfig) -> SpectralWeights:
    """
    現バッチの粗予測のバンド別 PSNR を EMA で P_λ に取り込む

    Args:
        coarse: [R, s, 3]（Tensor 可）
        targets: [R, s, 3]

    Returns:
        新しい SpectralWeights
    """
    pred = coarse.data if isinstance(coarse, Tensor) else np.asarray(coarse)
    psnr = per_band_psnr(pred, targets)
    if psnr.shape != (state.s_num,):
        raise ShapeMismatch(f"{psnr.shape[0]} bands for weights of s_num={state.s_num}")
    psnr = np.clip(psnr, PSNR_FLOOR_DB, PSNR_CLAMP_DB)
    if state.p_lambda is None:
        p = psnr
    else:
        p = cfg.ema_decay * state.p_lambda + (1.0 - cfg.ema_decay) * psnr
    new = SpectralWeights(state.s_num, p, state.n_updates + 1, state.uniform)
    logger.debug(f"w_s 更新 #{new.n_updates}: P_λ={np.round(p, 2).tolist()} w_s={np.round(new.w_s, 3).tolist()}")
    return new


def spectral_loss(coarse, fine, target, weights: Union[SpectralWeights, np.ndarray]) -> Tensor:
    """
    重み付きスペクトル再構成損失

    Args:
        coarse, fine: [R, s, 3]（Tensor）
        target: [R, s, 3]
        weights: SpectralWeights または w_s 配列 [s]

    Returns:
        スカラー Tensor
    """
    coarse, fine = as_tensor(coarse), as_tensor(fine)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if coarse.shape != target.shape or fine.shape != target.shape or target.ndim != 3:
        raise ShapeMismatch(f"spectral_loss shapes: coarse {coarse.shape}, fine {fine.shape}, target {target.shape}")
    w = weights.w_s if isinstance(weights, SpectralWeights) else np.asarray(weights, dtype=np.float64)
    if w.shape != (target.shape[1],):
        raise ShapeMismatch(f"{w.shape} weights for {target.shape[1]} bands")

    # レイ方向に平均、チャネル方向に総和 → [s]
    per_band_c = ((coarse - target) ** 2).sum(axis=2).mean(axis=0)
    per_band_f = ((fine - target) ** 2).sum(axis=2).mean(axis=0)
    return ((per_band_c + per_band_f) * w).sum()


def rgb_loss(pred, target) -> Tensor:
    """平均二乗誤差"""
    pred = as_tensor(pred)
    target_arr = target.data if isinstance(target, Tensor) else np.asarray(target)
    if pred.shape != target_arr.shape:
        raise ShapeMismatch(f"rgb_loss shapes: {pred.shape} vs {target_arr.shape}")
    return mse(pred, target)


def total_loss(spectral, rgb, cfg: Union[LossConfig, float] = DEFAULT_LAMBDA_RGB):
    """
    L = spectral + λ_RGB · rgb

    Args:
        cfg: LossConfig または λ_RGB（数値なら 0 で RGB 項を無効化）
    """
    lam = cfg.lambda_rgb if isinstance(cfg, LossConfig) else float(cfg)
    if lam < 0:
        raise InvalidArgument(f"lambda_rgb must be >= 0, got {lam}")
    return spectral + lam * rgb
