"""
波長バンド分割

一様分割（380-780nm を s_num 等分）と、実機フィルタ配置のような明示中心指定の2モード。
"""
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from src.errors import InvalidArgument

# 実機レイアウト: 400-750nm を 50nm 間隔の 8 バンド
REAL8_CENTERS_NM: Tuple[float, ...] = (400.0, 450.0, 500.0, 550.0, 600.0, 650.0, 700.0, 750.0)


@dataclass(frozen=True)
class BandPartition:
    """s_num 個の波長バンド（中心 λ_c と幅 Δλ）"""
    s_num: int
    lambda_min_nm: float
    lambda_max_nm: float
    delta_lambda_nm: float
    centers_nm: Tuple[float, ...]
    explicit: bool = False

    def __post_init__(self):
        if self.s_num < 1:
            raise InvalidArgument(f"s_num must be >= 1, got {self.s_num}")
        if len(self.centers_nm) != self.s_num:
            raise InvalidArgument(f"{len(self.centers_nm)} centers for s_num={self.s_num}")
        if self.delta_lambda_nm <= 0:
            raise InvalidArgument(f"delta_lambda must be > 0, got {self.delta_lambda_nm}")
        if any(b <= a for a, b in zip(self.centers_nm, self.centers_nm[1:])):
            raise InvalidArgument("band centers must be strictly ascending")

    @property
    def centers(self) -> np.ndarray:
        return np.asarray(self.centers_nm, dtype=np.float64)

    def to_dict(self) -> dict:
        """マニフェスト用（明示モードは中心列、一様モードは範囲）"""
        if self.explicit:
            return {"mode": "explicit", "centers_nm": [float(c) for c in self.centers_nm],
                    "delta_lambda_nm": float(self.delta_lambda_nm)}
        return {"mode": "uniform", "s_num": int(self.s_num),
                "lambda_min_nm": float(self.lambda_min_nm), "lambda_max_nm": float(self.lambda_max_nm)}


def make_partition(s_num: int, lambda_min_nm: float = 380.0, lambda_max_nm: float = 780.0) -> BandPartition:
    """
    一様分割を作る

    Args:
        s_num: バンド数（>= 1）
        lambda_min_nm, lambda_max_nm: 範囲

    Returns:
        centers[k] = lambda_min + (k + 0.5) * Δλ, Δλ = (lambda_max - lambda_min) / s_num

    Raises:
        InvalidArgument: s_num = 0 または範囲が逆転
    """
    if int(s_num) != s_num or s_num < 1:
        raise InvalidArgument(f"s_num must be a positive integer, got {s_num}")
    if not lambda_max_nm > lambda_min_nm:
        raise InvalidArgument(f"Inverted wavelength range: [{lambda_min_nm}, {lambda_max_nm}]")
    s_num = int(s_num)
    span = float(lambda_max_nm) - float(lambda_min_nm)
    # 奇数 s_num の中央バンドは範囲中央と厳密に一致する
    centers = tuple(float(lambda_min_nm) + (2 * k + 1) * span / (2 * s_num) for k in range(s_num))
    return BandPartition(
        s_num=s_num,
        lambda_min_nm=float(lambda_min_nm),
        lambda_max_nm=float(lambda_max_nm),
        delta_lambda_nm=span / s_num,
        centers_nm=centers,
    )


def make_explicit_partition(centers_nm: Sequence[float], delta_lambda_nm: Optional[float] = None) -> BandPartition:
    """
    明示中心モード

    Args:
        centers_nm: 昇順の中心波長
        delta_lambda_nm: バンド幅。None なら中心間隔の中央値（1バンドなら必須）
    """
    centers = tuple(float(c) for c in centers_nm)
    if not centers:
        raise InvalidArgument("explicit partition needs at least one center")
    if any(b <= a for a, b in zip(centers, centers[1:])):
        raise InvalidArgument(f"explicit centers must be strictly ascending: {centers}")
    if delta_lambda_nm is None:
        if len(centers) < 2:
            raise InvalidArgument("delta_lambda_nm is required for a single explicit center")
        delta_lambda_nm = float(np.median(np.diff(centers)))
    half = delta_lambda_nm / 2.0
    return BandPartition(
        s_num=len(centers),
        lambda_min_nm=centers[0] - half,
        lambda_max_nm=centers[-1] + half,
        delta_lambda_nm=float(delta_lambda_nm),
        centers_nm=centers,
        explicit=True,
    )


def partition_from_config(spectral_cfg: dict) -> BandPartition:
    """
    設定の spectral セクションから分割を作る

    layout: uniform（s_num, lambda_min_nm, lambda_max_nm） / real8 / explicit（centers_nm）
    """
    layout = spectral_cfg.get("layout", "uniform")
    if layout == "uniform":
        return make_partition(spectral_cfg["s_num"], spectral_cfg.get("lambda_min_nm", 380.0),
                              spectral_cfg.get("lambda_max_nm", 780.0))
    if layout == "real8":
        return make_explicit_partition(REAL8_CENTERS_NM)
    if layout == "explicit":
        return make_explicit_partition(spectral_cfg["centers_nm"], spectral_cfg.get("delta_lambda_nm"))
    raise InvalidArgument(f"Unknown spectral layout: {layout}")


def partition_from_dict(d: dict) -> BandPartition:
    """to_dict の逆"""
    if d.get("mode") == "explicit":
        return make_explicit_partition(d["centers_nm"], d.get("delta_lambda_nm"))
    return make_partition(d["s_num"], d["lambda_min_nm"], d["lambda_max_nm"])
