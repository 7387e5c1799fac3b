"""
例外クラス定義

すべて ValueError の派生として定義し、
「ValueError + 具体的なメッセージ」で失敗を伝える既存方針を維持する。
"""


class SpectralNerfError(ValueError):
    """本パッケージの全例外の基底クラス"""


class NumericFailure(SpectralNerfError):
    """数値的な破綻（NaN損失など）。CLI では終了コード 2"""


# --- spectral_color ---

class OutOfRange(SpectralNerfError):
    """波長がテーブルの範囲外"""


class InvalidArgument(SpectralNerfError):
    """引数が事前条件を満たさない"""


class DegenerateIlluminant(NumericFailure):
    """κ の分母が 0 になる光源"""


class EmptyStack(SpectralNerfError):
    """バンド数 0 のスペクトルマップスタック"""


# --- nn_core ---

class ShapeMismatch(SpectralNerfError):
    """テンソル形状の不一致"""


class MissingGradient(SpectralNerfError):
    """Adam 更新時に勾配が未計算"""


# --- radiance_field / volume_renderer ---

class NotNormalized(SpectralNerfError):
    """方向ベクトルが単位長でない"""


class OutOfBounds(SpectralNerfError):
    """画素インデックスが画像外"""


# --- fusion / losses_metrics ---

class SingularSystem(NumericFailure):
    """最小二乗の Gram 行列がリッジ補正後も正定値でない"""


class BadDimensions(SpectralNerfError):
    """SAUNet 入力の H, W が 4 の倍数でない"""


class TooSmall(SpectralNerfError):
    """SSIM 窓（11x11）より小さい画像"""


# --- dataset_io ---

class BadMagic(SpectralNerfError):
    """ファイル先頭のマジックが不正"""


class TruncatedFile(SpectralNerfError):
    """ペイロードが宣言サイズに足りない"""


class DimMismatch(SpectralNerfError):
    """宣言された次元と実データの不一致"""


class MissingFile(SpectralNerfError, FileNotFoundError):
    """マニフェストが参照するファイルが存在しない"""

    def __init__(self, path, message: str = None):
        self.path = str(path)
        super().__init__(message or f"File not found: {self.path}")


class BadPartition(SpectralNerfError):
    """バンド分割とデータのバンド数が一致しない"""
