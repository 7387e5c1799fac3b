"""
目視確認用の画像書き出し（8bit PNG / PPM）と学習曲線の図

ここで書いた画像は学習には読み戻さない。
"""
import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from src.errors import ShapeMismatch

logger = logging.getLogger(__name__)


def to_uint8(img) -> np.ndarray:
    """[0,1] にクランプして 8bit 化（色域外の負値はここで初めて切る）"""
    img = np.asarray(img, dtype=np.float64)
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path: Union[str, Path], img) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[-1] == 1:
        img = img[..., 0]
    plt.imsave(path, to_uint8(img), cmap="gray" if img.ndim == 2 else None)
    return path


def write_ppm(path: Union[str, Path], img) -> Path:
    """バイナリ PPM（P6, maxval 255）"""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[-1] != 3:
        raise ShapeMismatch(f"PPM needs [H, W, 3], got {img.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(to_uint8(img).tobytes())
    return path


def read_ppm(path: Union[str, Path]) -> np.ndarray:
    """write_ppm の出力のみ対応（コメント行なし）"""
    data = Path(path).read_bytes()
    header, _, rest = data.partition(b"\n255\n")
    magic, dims = header.split(b"\n", 1)
    if magic != b"P6":
        raise ShapeMismatch(f"{path}: not a binary PPM")
    w, h = (int(v) for v in dims.split())
    return np.frombuffer(rest, dtype=np.uint8, count=w * h * 3).reshape(h, w, 3)


def export_stack_previews(
    out_dir: Union[str, Path],
    stack: np.ndarray,
    centers_nm: Sequence[float],
    rgb: Optional[np.ndarray] = None,
) -> Optional[Path]:
    """
    バンドごとの PNG と一覧図を書き出す

    失敗しても例外は投げない（ログのみ）。
    """
    out_dir = Path(out_dir)
    try:
        for k, c in enumerate(centers_nm):
            write_png(out_dir / f"band_{k:02d}_{int(round(c))}nm.png", stack[:, :, k, :])
        if rgb is not None:
            write_png(out_dir / "rgb.png", rgb)

        n = len(centers_nm) + (1 if rgb is not None else 0)
        fig, axes = plt.subplots(1, n, figsize=(2.0 * n, 2.4))
        axes = np.atleast_1d(axes)
        for k, c in enumerate(centers_nm):
            axes[k].imshow(to_uint8(stack[:, :, k, :]))
            axes[k].set_title(f"{c:.0f} nm", fontsize=9)
        if rgb is not None:
            axes[-1].imshow(to_uint8(rgb))
            axes[-1].set_title("RGB", fontsize=9)
        for ax in axes:
            ax.axis("off")
        fig.tight_layout()
        strip = out_dir / "bands.png"
        fig.savefig(strip, dpi=100)
        plt.close(fig)
        return strip
    except Exception:
        logger.exception(f"⚠️ プレビュー書き出し失敗: {out_dir}")
        return None


def plot_training_curve(log_df: pd.DataFrame, path: Union[str, Path]) -> Optional[Path]:
    """training_log.csv の loss と平均バンド PSNR を図にする"""
    path = Path(path)
    try:
        fig, ax1 = plt.subplots(figsize=(10, 5))
        ax1.plot(log_df["step"], log_df["loss"], linewidth=1.5, label="loss")
        ax1.set_yscale("log")
        ax1.set_xlabel("step")
        ax1.set_ylabel("loss")
        ax1.grid(True, alpha=0.3)
        psnr_cols = [c for c in log_df.columns if c.startswith("psnr_")]
        if psnr_cols:
            ax2 = ax1.twinx()
            ev = log_df.dropna(subset=psnr_cols)
            ax2.plot(ev["step"], ev[psnr_cols].mean(axis=1), color="tab:orange", label="mean band PSNR")
            ax2.set_ylabel("PSNR [dB]")
        fig.tight_layout()
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, dpi=150)
        plt.close(fig)
        return path
    except Exception:
        logger.exception(f"⚠️ 学習曲線の書き出し失敗: {path}")
        return None
