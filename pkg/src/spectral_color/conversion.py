"""
分光 → XYZ → sRGB 変換とバンド係数

    X = κ Σ_k f_X(λ_c,k) L(λ_c,k) Δλ         （Y, Z も同様）
    [R G B]^T = M^c [X Y Z]^T
    バンド係数 w_k = M^c f(λ_c,k) L(λ_c,k) Δλ
    白色光合成   C = κ Σ_k S_k

負の RGB（色域外）は内部ではそのまま保持し、クランプは画像書き出し時のみ。
バンド色も既定では符号付きのまま使う（normalize_band_colors）。
"""
from typing import Optional, Tuple

import numpy as np

from src.errors import DegenerateIlluminant, EmptyStack, InvalidArgument, ShapeMismatch
from src.spectral_color.cmf import CMFTable, SPD, cmf_samples, spd_samples
from src.spectral_color.partition import BandPartition

# XYZ -> sRGB
SRGB_FROM_XYZ = np.array([
    [3.133, -1.616, -0.490],
    [-0.978, 1.916, 0.033],
    [0.072, -0.229, 1.405],
])
SRGB_FROM_XYZ.setflags(write=False)


def illuminant_at_centers(spd: Optional[SPD], partition: BandPartition) -> np.ndarray:
    """L(λ_c,k)。spd=None は単位光源（マップ側に光源を含める運用）"""
    if spd is None:
        return np.ones(partition.s_num)
    return spd_samples(spd, partition.centers)


def kappa_for_illuminant(table: CMFTable, spd: SPD, partition: BandPartition) -> float:
    """
    正規化定数 κ = 1 / Σ_k f_Y(λ_c,k) L(λ_c,k) Δλ

    Raises:
        DegenerateIlluminant: 分母が 0
    """
    fy = cmf_samples(table, partition.centers)[:, 1]
    L = spd_samples(spd, partition.centers)
    denom = float(np.sum(fy * L) * partition.delta_lambda_nm)
    if denom == 0.0 or not np.isfinite(denom):
        raise DegenerateIlluminant(f"Illuminant {spd.name or '?'} has zero luminance over the partition")
    return 1.0 / denom


def xyz_from_spd(table: CMFTable, spd: SPD, partition: BandPartition, kappa: float) -> np.ndarray:
    """バンド中心での総和による XYZ（長さ3の配列）"""
    f = cmf_samples(table, partition.centers)
    L = spd_samples(spd, partition.centers)
    return kappa * (f * L[:, None]).sum(axis=0) * partition.delta_lambda_nm


def xyz_from_band_samples(table: CMFTable, partition: BandPartition, samples: np.ndarray, kappa: float) -> np.ndarray:
    """
    バンド中心でサンプル済みの SPD 群から XYZ を求める

    Args:
        samples: [..., s_num]（画素ごとの L(λ_c)）

    Returns:
        [..., 3]
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[-1] != partition.s_num:
        raise ShapeMismatch(f"samples last dim {samples.shape[-1]} != s_num {partition.s_num}")
    f = cmf_samples(table, partition.centers)
    return kappa * (samples @ f) * partition.delta_lambda_nm


def rgb_from_xyz(xyz) -> np.ndarray:
    """M^c による線形変換（[..., 3] に対応）"""
    return np.asarray(xyz, dtype=np.float64) @ SRGB_FROM_XYZ.T


def band_coefficients(table: CMFTable, spd: Optional[SPD], partition: BandPartition) -> np.ndarray:
    """
    バンドごとの (wR, wG, wB) = M^c f(λ_c) L(λ_c) Δλ

    Returns:
        [s_num, 3]
    """
    f = cmf_samples(table, partition.centers)
    L = illuminant_at_centers(spd, partition)
    return (f @ SRGB_FROM_XYZ.T) * L[:, None] * partition.delta_lambda_nm


def compose_rgb(stack, kappa: float) -> np.ndarray:
    """
    スペクトルマップスタック [..., s_num, 3] を白色光 RGB [..., 3] に合成する

    Raises:
        EmptyStack: バンド数 0
    """
    stack = np.asarray(stack)
    if stack.ndim < 2 or stack.shape[-1] != 3:
        raise ShapeMismatch(f"stack must be [..., s_num, 3], got {stack.shape}")
    if stack.shape[-2] == 0:
        raise EmptyStack("compose_rgb: stack has no bands")
    return kappa * np.sum(np.ascontiguousarray(stack), axis=-2)


BAND_COLOR_MODES = ("signed", "clipped")


def normalize_band_colors(coeffs: np.ndarray, mode: str = "signed") -> Tuple[np.ndarray, float]:
    """
    バンド係数を全バンド共通の利得 g で正規化したバンド色 c_k = w_k / g

    signed: 負成分を保持（|c| の最大が 1）。κ·g·Σ c_k が M^c·XYZ と一致する。
    clipped: 負成分を 0 に切る（c ∈ [0,1]）。シグモイド出力で再現できるが測色的には近似。

    Returns:
        (colors [s_num, 3], g)  データセットの κ には g を掛ける
    """
    if mode not in BAND_COLOR_MODES:
        raise InvalidArgument(f"Unknown band color mode '{mode}', use one of {BAND_COLOR_MODES}")
    w = np.asarray(coeffs, dtype=np.float64)
    if mode == "clipped":
        w = np.clip(w, 0.0, None)
    gain = float(np.abs(w).max()) if w.size else 0.0
    if gain <= 0.0:
        raise DegenerateIlluminant(f"All band coefficients vanish ({mode})")
    return w / gain, gain
