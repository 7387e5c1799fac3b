"""
レイ上のサンプリング

- 層化サンプリング: [t_n, t_f] を n 等分し、各区間から一様に1点（ジッタ無しは区間中点）
- 階層的リサンプリング: 粗サンプルの重みを区間ごとの一定密度とみなし逆変換サンプリング

どちらも [R, N] のバッチで扱う（R=レイ数）。
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.errors import InvalidArgument

PDF_FLOOR = 1e-5


@dataclass
class SampleSet:
    """
    Attributes:
        t: [N] または [R, N] の狭義昇順サンプル位置（同値不可）
        near, far: 区間端（スカラーまたは [R]）
        provenance: "coarse" / "fine"
    """
    t: np.ndarray
    near: np.ndarray
    far: np.ndarray
    provenance: str = "coarse"

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        if not np.all(np.diff(self.t, axis=-1) > 0):
            raise InvalidArgument("SampleSet t values must be strictly ascending")

    def __len__(self) -> int:
        return self.t.shape[-1]


def break_ties(t: np.ndarray) -> np.ndarray:
    """昇順に並んだ t の同値を直前値の次の浮動小数点数へずらす"""
    t = np.array(t, dtype=np.float64)
    for i in range(1, t.shape[-1]):
        prev = t[..., i - 1]
        t[..., i] = np.where(t[..., i] > prev, t[..., i], np.nextafter(prev, np.inf))
    return t


def _bounds(t_n, t_f, n_rays: Optional[int]):
    near = np.asarray(t_n, dtype=np.float64)
    far = np.asarray(t_f, dtype=np.float64)
    if np.any(far <= near):
        raise InvalidArgument(f"Need t_f > t_n, got t_n={t_n} t_f={t_f}")
    if n_rays is not None:
        near = np.broadcast_to(near, (n_rays,)).astype(np.float64)
        far = np.broadcast_to(far, (n_rays,)).astype(np.float64)
    return near, far


def stratified_samples(
    t_n,
    t_f,
    n: int,
    seed: Optional[int] = None,
    jitter: bool = True,
    rng: Optional[np.random.Generator] = None,
    n_rays: Optional[int] = None,
    uniforms: Optional[np.ndarray] = None,
) -> SampleSet:
    """
    層化サンプリング

    Args:
        t_n, t_f: 区間端（スカラーまたは [R]）
        n: サンプル数（>= 2）
        seed / rng: ジッタ用の乱数源（rng 優先）
        jitter: False なら区間中点
        n_rays: バッチ化する場合のレイ数
        uniforms: 外部で生成した [R, n] の一様乱数（レイ単位の乱数ストリーム用）

    Returns:
        SampleSet（t は [n] または [R, n]）
    """
    if n < 2:
        raise InvalidArgument(f"stratified_samples needs n >= 2, got {n}")
    near, far = _bounds(t_n, t_f, n_rays)
    shape = near.shape + (n,)
    if not jitter:
        u = np.full(shape, 0.5)
    elif uniforms is not None:
        u = np.asarray(uniforms, dtype=np.float64).reshape(shape)
    else:
        rng = rng if rng is not None else np.random.default_rng(seed)
        u = rng.random(shape)
    k = np.arange(n, dtype=np.float64)
    width = (far - near)[..., None] / n
    t = near[..., None] + (k + u) * width
    if np.any(np.diff(t, axis=-1) <= 0):
        t = break_ties(t)
    return SampleSet(t, near, far, "coarse")


def bin_edges(ts: SampleSet) -> np.ndarray:
    """粗サンプルの区間境界 [t_n, 隣接中点..., t_f]（[..., N+1]）"""
    t = ts.t
    mids = 0.5 * (t[..., 1:] + t[..., :-1])
    near = np.broadcast_to(ts.near, t.shape[:-1])[..., None]
    far = np.broadcast_to(ts.far, t.shape[:-1])[..., None]
    return np.concatenate([near, mids, far], axis=-1)


def sample_pdf(edges: np.ndarray, weights: np.ndarray, n: int, u: np.ndarray) -> np.ndarray:
    """
    区分一定 PDF からの逆変換サンプリング

    Args:
        edges: [..., M+1]
        weights: [..., M]（>= 0）
        u: [..., n] の [0,1) 一様値

    Returns:
        [..., n]
    """
    pdf = weights + PDF_FLOOR
    pdf = pdf / pdf.sum(axis=-1, keepdims=True)
    cdf = np.concatenate([np.zeros(pdf.shape[:-1] + (1,)), np.cumsum(pdf, axis=-1)], axis=-1)
    m = pdf.shape[-1]
    flat_cdf = cdf.reshape(-1, m + 1)
    flat_u = u.reshape(flat_cdf.shape[0], n)
    idx = np.empty(flat_u.shape, dtype=np.int64)
    for r in range(flat_cdf.shape[0]):
        idx[r] = np.searchsorted(flat_cdf[r], flat_u[r], side="right") - 1
    idx = np.clip(idx, 0, m - 1).reshape(u.shape)

    cdf_lo = np.take_along_axis(cdf, idx, axis=-1)
    p = np.take_along_axis(pdf, idx, axis=-1)
    lo = np.take_along_axis(edges, idx, axis=-1)
    hi = np.take_along_axis(edges, idx + 1, axis=-1)
    frac = np.clip((u - cdf_lo) / p, 0.0, 1.0)
    return lo + frac * (hi - lo)


def hierarchical_resample(
    ts: SampleSet,
    weights,
    n_fine: int,
    seed: Optional[int] = None,
    deterministic: bool = False,
    rng: Optional[np.random.Generator] = None,
    uniforms: Optional[np.ndarray] = None,
) -> SampleSet:
    """
    粗サンプルの重みに従って細サンプルを追加する

    Args:
        ts: 粗 SampleSet
        weights: ts と同形の非負重み（T_i α_i）
        n_fine: 追加サンプル数
        deterministic: True なら u = (k + 0.5) / n_fine

    Returns:
        粗 + 細の和集合を狭義昇順に並べた SampleSet（provenance="fine"）

    Raises:
        InvalidArgument: 重みが負・形状不一致
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != ts.t.shape:
        raise InvalidArgument(f"weights shape {weights.shape} != samples shape {ts.t.shape}")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise InvalidArgument("weights must be finite and >= 0")
    if n_fine < 0:
        raise InvalidArgument(f"n_fine must be >= 0, got {n_fine}")
    if n_fine == 0:
        return SampleSet(ts.t.copy(), ts.near, ts.far, "fine")

    shape = ts.t.shape[:-1] + (n_fine,)
    if deterministic:
        u = np.broadcast_to((np.arange(n_fine) + 0.5) / n_fine, shape).copy()
    elif uniforms is not None:
        u = np.asarray(uniforms, dtype=np.float64).reshape(shape)
    else:
        rng = rng if rng is not None else np.random.default_rng(seed)
        u = rng.random(shape)

    fine = sample_pdf(bin_edges(ts), weights, n_fine, u)
    t_all = np.sort(np.concatenate([ts.t, fine], axis=-1), axis=-1)
    # 細サンプルが粗サンプルと一致しうる（一様重み・決定的 u など）
    if np.any(np.diff(t_all, axis=-1) <= 0):
        t_all = break_ties(t_all)
    return SampleSet(t_all, ts.near, ts.far, "fine")


def per_ray_uniforms(seed: int, stage: int, ray_ids: Sequence[int], n: int) -> np.ndarray:
    """
    レイ ID ごとの独立ストリームから一様乱数 [R, n] を作る

    同じ (seed, stage, ray_id) なら常に同じ値になるため、バッチ分割や並列順序に依存しない。
    """
    if len(ray_ids) == 0:
        return np.zeros((0, n))
    return np.stack([np.random.default_rng([seed, stage, int(r)]).random(n) for r in ray_ids])
