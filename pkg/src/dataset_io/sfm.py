"""
SFM1 形式（浮動小数点マップ）

レイアウト（リトルエンディアン）:
    magic "SFM1" | u32 width | u32 height | u32 channels | f32 band_center_nm | f32 planes[channels][height][width]

band_center_nm は RGB 合成画像では 0。
"""
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from src.errors import BadMagic, DimMismatch, InvalidArgument, MissingFile, TruncatedFile

MAGIC = b"SFM1"
_HEADER = struct.Struct("<4sIIIf")
HEADER_SIZE = _HEADER.size


@dataclass
class SpectralFloatMap:
    """
    Attributes:
        data: [H, W, C] float32
        band_center_nm: バンド中心（RGB 合成は 0）
    """
    data: np.ndarray
    band_center_nm: float = 0.0

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[..., None]
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise InvalidArgument(f"map must be [H, W, C] with positive dims, got {arr.shape}")
        self.data = arr.astype("<f4", copy=False)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def sfm_encode(m: SpectralFloatMap) -> bytes:
    header = _HEADER.pack(MAGIC, m.width, m.height, m.channels, float(m.band_center_nm))
    planes = np.ascontiguousarray(np.moveaxis(m.data, -1, 0), dtype="<f4")
    return header + planes.tobytes()


def sfm_decode(buf: bytes) -> SpectralFloatMap:
    """
    Raises:
        BadMagic: magic 不一致
        TruncatedFile: ペイロード不足
        DimMismatch: ペイロード過多または次元 0
    """
    if len(buf) < HEADER_SIZE:
        raise TruncatedFile(f"SFM header needs {HEADER_SIZE} bytes, got {len(buf)}")
    magic, w, h, c, center = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise BadMagic(f"Expected magic {MAGIC!r}, got {magic!r}")
    if w == 0 or h == 0 or c == 0:
        raise DimMismatch(f"SFM dims must be > 0, got w={w} h={h} c={c}")
    expected = 4 * w * h * c
    payload = len(buf) - HEADER_SIZE
    if payload < expected:
        raise TruncatedFile(f"SFM payload {payload} bytes < {expected} for {w}x{h}x{c}")
    if payload > expected:
        raise DimMismatch(f"SFM payload {payload} bytes > {expected} for {w}x{h}x{c}")
    planes = np.frombuffer(buf, dtype="<f4", count=w * h * c, offset=HEADER_SIZE).reshape(c, h, w)
    return SpectralFloatMap(np.moveaxis(planes, 0, -1).copy(), float(center))


def sfm_write(path: Union[str, Path], m: SpectralFloatMap) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(sfm_encode(m))
    return path


def sfm_read(path: Union[str, Path]) -> SpectralFloatMap:
    path = Path(path)
    if not path.exists():
        raise MissingFile(path)
    try:
        return sfm_decode(path.read_bytes())
    except (BadMagic, TruncatedFile, DimMismatch) as e:
        raise type(e)(f"{path}: {e}") from e


def sfm_header(path: Union[str, Path]) -> Tuple[int, int, int, float]:
    """ヘッダのみ読む: (width, height, channels, band_center_nm)"""
    path = Path(path)
    if not path.exists():
        raise MissingFile(path)
    with open(path, "rb") as f:
        head = f.read(HEADER_SIZE)
    if len(head) < HEADER_SIZE:
        raise TruncatedFile(f"{path}: SFM header needs {HEADER_SIZE} bytes, got {len(head)}")
    magic, w, h, c, center = _HEADER.unpack(head)
    if magic != MAGIC:
        raise BadMagic(f"{path}: expected magic {MAGIC!r}, got {magic!r}")
    return w, h, c, float(center)
