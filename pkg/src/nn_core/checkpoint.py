"""
チェックポイント入出力（SPNF 形式）

レイアウト（すべてリトルエンディアン）:
    magic "SPNF" | u32 version | { u32 name_len | name (utf-8) | u32 rank | u32 dims[rank] | f64 data[prod(dims)] }*

レコード順は書き込み順を保持するため、同じ辞書を書けば同じバイト列になる。
"""
import logging
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Union

import numpy as np

from src.errors import BadMagic, DimMismatch, MissingFile, TruncatedFile

logger = logging.getLogger(__name__)

MAGIC = b"SPNF"
FORMAT_VERSION = 1

_U32 = struct.Struct("<I")


def encode_checkpoint(records: Dict[str, np.ndarray]) -> bytes:
    """名前付き配列をバイト列へ"""
    parts = [MAGIC, _U32.pack(FORMAT_VERSION)]
    for name, arr in records.items():
        arr = np.asarray(arr, dtype="<f8")
        name_bytes = name.encode("utf-8")
        parts.append(_U32.pack(len(name_bytes)))
        parts.append(name_bytes)
        parts.append(_U32.pack(arr.ndim))
        parts.extend(_U32.pack(d) for d in arr.shape)
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def decode_checkpoint(buf: bytes) -> "OrderedDict[str, np.ndarray]":
    """バイト列から名前付き配列へ（書き込み順を保持）"""
    if len(buf) < 8:
        raise TruncatedFile(f"Checkpoint too short: {len(buf)} bytes")
    if buf[:4] != MAGIC:
        raise BadMagic(f"Expected magic {MAGIC!r}, got {buf[:4]!r}")
    (version,) = _U32.unpack_from(buf, 4)
    if version != FORMAT_VERSION:
        raise DimMismatch(f"Unsupported checkpoint version {version}")

    records: "OrderedDict[str, np.ndarray]" = OrderedDict()
    pos = 8
    n = len(buf)

    def need(count: int, what: str) -> None:
        if pos + count > n:
            raise TruncatedFile(f"Truncated checkpoint while reading {what} at byte {pos}")

    while pos < n:
        need(4, "name length")
        (name_len,) = _U32.unpack_from(buf, pos)
        pos += 4
        need(name_len, "name")
        name = buf[pos:pos + name_len].decode("utf-8")
        pos += name_len
        need(4, f"rank of {name}")
        (rank,) = _U32.unpack_from(buf, pos)
        pos += 4
        need(4 * rank, f"dims of {name}")
        dims = tuple(struct.unpack_from(f"<{rank}I", buf, pos)) if rank else ()
        pos += 4 * rank
        count = int(np.prod(dims)) if dims else 1
        need(8 * count, f"data of {name}")
        data = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).reshape(dims).copy()
        pos += 8 * count
        records[name] = data
    return records


def save_checkpoint(path: Union[str, Path], records: Dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(records))
    logger.info(f"💾 チェックポイント保存: {path} ({len(records)} records)")
    return path


def load_checkpoint(path: Union[str, Path]) -> "OrderedDict[str, np.ndarray]":
    path = Path(path)
    if not path.exists():
        raise MissingFile(path)
    return decode_checkpoint(path.read_bytes())
