"""画質指標（PSNR / SSIM / L1）と指標テーブル出力"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd
from skimage.metrics import structural_similarity

from src.errors import ShapeMismatch, TooSmall

logger = logging.getLogger(__name__)

PSNR_CLAMP_DB = 60.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
L1_REPORT_SCALE = 1e3

METRIC_COLUMNS = ["scene", "view", "psnr", "ssim", "l1"]


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0) -> float:
    """
    10·log10(peak² / MSE)。MSE = 0 は 60 dB に丸める

    Raises:
        ShapeMismatch: 形状不一致
    """
    a, b = _pair(a, b)
    err = float(np.mean((a - b) ** 2))
    if err == 0.0:
        return PSNR_CLAMP_DB
    return float(min(10.0 * np.log10(peak * peak / err), PSNR_CLAMP_DB))


def per_band_psnr(pred, target, peak: float = 1.0) -> np.ndarray:
    """
    バンド別 PSNR

    Args:
        pred, target: [..., s, 3]（レイ束でも画像でもよい）

    Returns:
        [s]（60 dB で上限）
    """
    pred, target = _pair(pred, target)
    if pred.ndim < 2 or pred.shape[-1] != 3:
        raise ShapeMismatch(f"expected [..., s, 3], got {pred.shape}")
    axes = tuple(i for i in range(pred.ndim) if i != pred.ndim - 2)
    err = np.mean((pred - target) ** 2, axis=axes)
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(peak * peak / err)
    return np.minimum(out, PSNR_CLAMP_DB)


def ssim(a, b) -> float:
    """
    平均 SSIM（11x11 ガウス窓 σ=1.5、K1=0.01、K2=0.03、ダイナミックレンジ 1.0）

    Args:
        a, b: [H, W] または [H, W, C]（チャネルは平均）

    Raises:
        TooSmall: 短辺が 11 未満
    """
    a, b = _pair(a, b)
    if a.ndim not in (2, 3):
        raise ShapeMismatch(f"ssim expects [H, W] or [H, W, C], got {a.shape}")
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise TooSmall(f"ssim needs both sides >= {SSIM_WINDOW}, got {a.shape[:2]}")
    return float(structural_similarity(
        a, b,
        data_range=1.0,
        gaussian_weights=True,
        sigma=SSIM_SIGMA,
        use_sample_covariance=False,
        K1=0.01,
        K2=0.03,
        channel_axis=-1 if a.ndim == 3 else None,
    ))


def l1(a, b, report_scale: bool = False) -> float:
    """
    平均絶対誤差

    Args:
        report_scale: True なら ×10³（表示用スケール）
    """
    a, b = _pair(a, b)
    value = float(np.mean(np.abs(a - b)))
    return value * L1_REPORT_SCALE if report_scale else value


def image_metrics(pred, gt, l1_scaled: bool = True) -> Dict[str, float]:
    return {
        "psnr": psnr(pred, gt),
        "ssim": ssim(pred, gt),
        "l1": l1(pred, gt, report_scale=l1_scaled),
    }


def metrics_table(rows: List[Dict], with_mean: bool = True) -> pd.DataFrame:
    """
    ビューごとの行を DataFrame に（末尾にシーン別の平均行）
    """
    df = pd.DataFrame(rows, columns=METRIC_COLUMNS)
    if with_mean and len(df):
        means = df.groupby("scene", sort=False)[["psnr", "ssim", "l1"]].mean().reset_index()
        means.insert(1, "view", "mean")
        df = pd.concat([df, means[METRIC_COLUMNS]], ignore_index=True)
    return df


def write_metrics_csv(df: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.9g")
    logger.info(f"💾 指標 CSV 保存: {path} ({len(df)} rows)")
    return path


def read_metrics_csv(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, dtype={"scene": str, "view": str})


def band_psnr_row(pred, target, centers_nm, prefix: str = "psnr_") -> Dict[str, float]:
    """学習ログ用: {"psnr_450": ...} 形式"""
    values = per_band_psnr(pred, target)
    return {f"{prefix}{int(round(c))}": float(v) for c, v in zip(centers_nm, values)}


def summarize(df: pd.DataFrame, scene: Optional[str] = None) -> Dict[str, float]:
    sub = df[df["view"] != "mean"]
    if scene is not None:
        sub = sub[sub["scene"] == scene]
    return {k: float(sub[k].mean()) for k in ("psnr", "ssim", "l1")}
