"""
等色関数テーブルと分光分布（SPD）

CIE 1931 2° 等色関数と光源 SPD をテキストファイル（波長 + 値の空白区切り、'#' コメント）から読み込む。
波長間は線形補間。
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from src.env_check import resolve_cmf_path, resolve_illuminant_path
from src.errors import InvalidArgument, OutOfRange

logger = logging.getLogger(__name__)

CIE_DIR = Path(__file__).parent.parent.parent / "data" / "cie"
DEFAULT_CMF_PATH = CIE_DIR / "cie1931_2deg_5nm.txt"
DEFAULT_D65_PATH = CIE_DIR / "d65_5nm.txt"

VISIBLE_MIN_NM = 380.0
VISIBLE_MAX_NM = 780.0
Y_PEAK_RANGE_NM = (550.0, 560.0)


def _check_wavelengths(wavelengths: np.ndarray, what: str) -> None:
    if wavelengths.ndim != 1 or wavelengths.size < 2:
        raise InvalidArgument(f"{what}: need a 1-D wavelength list with at least 2 samples")
    if not np.all(np.isfinite(wavelengths)):
        raise InvalidArgument(f"{what}: non-finite wavelength")
    if np.any(np.diff(wavelengths) <= 0):
        raise InvalidArgument(f"{what}: wavelengths must be strictly ascending")


@dataclass(frozen=True)
class CMFTable:
    """等色関数 f_X, f_Y, f_Z（波長昇順、値 >= 0、380-780nm を被覆）"""
    wavelengths_nm: np.ndarray
    fx: np.ndarray
    fy: np.ndarray
    fz: np.ndarray

    def __post_init__(self):
        wl = np.asarray(self.wavelengths_nm, dtype=np.float64)
        curves = [np.asarray(c, dtype=np.float64) for c in (self.fx, self.fy, self.fz)]
        _check_wavelengths(wl, "CMFTable")
        for name, c in zip(("fx", "fy", "fz"), curves):
            if c.shape != wl.shape:
                raise InvalidArgument(f"CMFTable.{name}: {c.shape} samples for {wl.shape} wavelengths")
            if np.any(c < 0) or not np.all(np.isfinite(c)):
                raise InvalidArgument(f"CMFTable.{name}: values must be finite and >= 0")
        if wl[0] > VISIBLE_MIN_NM or wl[-1] < VISIBLE_MAX_NM:
            raise InvalidArgument(
                f"CMFTable covers [{wl[0]}, {wl[-1]}] nm; needs at least [{VISIBLE_MIN_NM}, {VISIBLE_MAX_NM}]"
            )
        object.__setattr__(self, "wavelengths_nm", wl)
        object.__setattr__(self, "fx", curves[0])
        object.__setattr__(self, "fy", curves[1])
        object.__setattr__(self, "fz", curves[2])

    @property
    def y_peak_nm(self) -> float:
        return float(self.wavelengths_nm[int(np.argmax(self.fy))])

    def check_observer(self) -> None:
        """f_Y のピーク位置が 550-560nm にあるか（標準観測者データの健全性確認）"""
        lo, hi = Y_PEAK_RANGE_NM
        if not lo <= self.y_peak_nm <= hi:
            raise InvalidArgument(f"f_Y peaks at {self.y_peak_nm} nm, expected within [{lo}, {hi}]")


@dataclass(frozen=True)
class SPD:
    """光源の相対分光分布 L(λ)"""
    wavelengths_nm: np.ndarray
    power: np.ndarray
    name: str = ""

    def __post_init__(self):
        wl = np.asarray(self.wavelengths_nm, dtype=np.float64)
        p = np.asarray(self.power, dtype=np.float64)
        _check_wavelengths(wl, f"SPD {self.name}".strip())
        if p.shape != wl.shape:
            raise InvalidArgument(f"SPD {self.name}: {p.shape} samples for {wl.shape} wavelengths")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise InvalidArgument(f"SPD {self.name}: power must be finite and >= 0")
        object.__setattr__(self, "wavelengths_nm", wl)
        object.__setattr__(self, "power", p)

    def scaled(self, factor: float) -> "SPD":
        return SPD(self.wavelengths_nm, self.power * factor, self.name)


# ==================== 補間 ====================

def _interp_checked(wavelengths: np.ndarray, values: np.ndarray, lambdas, what: str) -> np.ndarray:
    lam = np.asarray(lambdas, dtype=np.float64)
    lo, hi = wavelengths[0], wavelengths[-1]
    if np.any(lam < lo) or np.any(lam > hi) or not np.all(np.isfinite(lam)):
        bad = lam[(lam < lo) | (lam > hi) | ~np.isfinite(lam)]
        raise OutOfRange(f"{what}: wavelength {bad.ravel()[0]} nm outside table range [{lo}, {hi}]")
    return np.interp(lam, wavelengths, values)


def cmf_lookup(table: CMFTable, lambda_nm: float) -> Tuple[float, float, float]:
    """
    波長 lambda_nm の (f_X, f_Y, f_Z) を線形補間で返す

    Raises:
        OutOfRange: テーブル範囲外
    """
    fx, fy, fz = cmf_samples(table, [lambda_nm])[0]
    return float(fx), float(fy), float(fz)


def cmf_samples(table: CMFTable, lambdas) -> np.ndarray:
    """複数波長の等色関数値 [n, 3]"""
    return np.stack(
        [_interp_checked(table.wavelengths_nm, c, lambdas, "cmf_lookup") for c in (table.fx, table.fy, table.fz)],
        axis=-1,
    )


def spd_samples(spd: SPD, lambdas) -> np.ndarray:
    """SPD の線形補間値 [n]"""
    return _interp_checked(spd.wavelengths_nm, spd.power, lambdas, f"SPD {spd.name}".strip())


# ==================== ファイル読み込み ====================

def _load_columns(path: Union[str, Path], n_values: int) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Spectral table not found: {path}")
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != n_values + 1:
        raise InvalidArgument(f"{path}: expected {n_values + 1} columns, got {data.shape[1]}")
    return data


@lru_cache(maxsize=8)
def _load_cmf_cached(path: str) -> CMFTable:
    data = _load_columns(path, 3)
    table = CMFTable(data[:, 0], data[:, 1], data[:, 2], data[:, 3])
    table.check_observer()
    logger.debug(f"CMF loaded: {path} ({len(table.wavelengths_nm)} samples)")
    return table


def load_cmf_table(path: Optional[Union[str, Path]] = None) -> CMFTable:
    """
    等色関数テーブルを読み込む

    Args:
        path: 4列ファイル。None なら SPECTRAL_NERF_CMF_PATH、なければ同梱の CIE 1931 2° 5nm
    """
    path = resolve_cmf_path(str(path) if path else None) or DEFAULT_CMF_PATH
    return _load_cmf_cached(str(Path(path).resolve()))


def load_spd(path: Union[str, Path], name: str = "") -> SPD:
    """2列（波長, 相対パワー）の SPD ファイルを読み込む"""
    data = _load_columns(path, 1)
    return SPD(data[:, 0], data[:, 1], name or Path(path).stem)


def equal_energy_spd(lambda_min_nm: float = VISIBLE_MIN_NM, lambda_max_nm: float = VISIBLE_MAX_NM) -> SPD:
    """等エネルギー光源 E（全波長で 1）"""
    return SPD(np.array([lambda_min_nm, lambda_max_nm]), np.ones(2), "E")


def load_illuminant(name: str = "D65", path: Optional[Union[str, Path]] = None) -> SPD:
    """
    名前から光源 SPD を得る

    Args:
        name: "D65" または "E"
        path: D65 の代替ファイル（None なら SPECTRAL_NERF_ILLUMINANT_PATH、なければ同梱）
    """
    key = name.upper()
    if key == "E":
        return equal_energy_spd()
    if key == "D65":
        path = resolve_illuminant_path(str(path) if path else None) or DEFAULT_D65_PATH
        return load_spd(path, "D65")
    raise InvalidArgument(f"Unknown illuminant: {name} (supported: D65, E)")
