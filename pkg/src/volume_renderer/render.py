"""
レイ束の描画とスペクトルマップ全画像の生成

粗モデル: 層化サンプル n_coarse 点 → 求積 → 重み
細モデル: 重みから n_fine 点を追加し、粗+細の和集合で評価
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from src.errors import InvalidArgument, ShapeMismatch
from src.nn_core import Tensor, no_grad
from src.radiance_field import SpectralField, field_eval
from src.volume_renderer.camera import Camera, all_pixels, generate_rays
from src.volume_renderer.quadrature import quadrature
from src.volume_renderer.sampling import (
    SampleSet, hierarchical_resample, per_ray_uniforms, stratified_samples,
)

logger = logging.getLogger(__name__)

# per_ray_uniforms のストリーム番号
STAGE_COARSE = 0
STAGE_FINE = 1


@dataclass
class RenderConfig:
    n_coarse: int = 64
    n_fine: int = 128
    white_background: bool = False
    perturb_sigma_std: float = 0.0
    seed: int = 0
    jitter: bool = False
    batch_rays: int = 1024
    workers: int = 1

    def __post_init__(self):
        if self.n_coarse < 2:
            raise InvalidArgument(f"n_coarse must be >= 2, got {self.n_coarse}")
        if self.n_fine < 0:
            raise InvalidArgument(f"n_fine must be >= 0, got {self.n_fine}")
        if self.batch_rays < 1 or self.workers < 1:
            raise InvalidArgument(f"batch_rays and workers must be >= 1, got {self.batch_rays}, {self.workers}")


@dataclass
class RayBatchResult:
    """
    Attributes:
        coarse: [R, n_bands, 3]
        fine: [R, n_bands, 3]
        coarse_weights: [R, n_coarse]
        fine_samples: 細モデルの SampleSet
    """
    coarse: Tensor
    fine: Tensor
    coarse_weights: np.ndarray
    fine_samples: SampleSet


def _eval_on_samples(field: SpectralField, origins, directions, t, perturb_std, rng) -> Tuple[Tensor, Tensor]:
    R, N = t.shape
    pts = origins[:, None, :] + t[..., None] * directions[:, None, :]
    dirs = np.broadcast_to(directions[:, None, :], pts.shape)
    out = field_eval(field, pts.reshape(-1, 3), dirs.reshape(-1, 3), perturb_std=perturb_std, rng=rng)
    return out.sigma.reshape(R, N), out.radiance.reshape(R, N, field.cfg.n_bands, 3)


def render_rays(
    coarse: SpectralField,
    fine: SpectralField,
    origins: np.ndarray,
    directions: np.ndarray,
    near,
    far,
    cfg: RenderConfig,
    rng: Optional[np.random.Generator] = None,
    ray_ids: Optional[Sequence[int]] = None,
    training: bool = False,
) -> RayBatchResult:
    """
    レイ束を粗/細モデルで描画する

    Args:
        near, far: スカラーまたは [R]
        rng: 学習時のバッチ乱数（与えればジッタと σ 摂動に使う）
        ray_ids: レイ単位の乱数ストリーム用 ID（rng が無くジッタ有効な場合に必要）
        training: True なら σ 摂動を有効化

    Returns:
        RayBatchResult
    """
    if coarse.cfg.n_bands != fine.cfg.n_bands:
        raise ShapeMismatch(f"coarse/fine band counts differ: {coarse.cfg.n_bands} vs {fine.cfg.n_bands}")
    origins = np.asarray(origins, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    R = origins.shape[0]

    coarse_u = fine_u = None
    if cfg.jitter and rng is None:
        if ray_ids is None:
            raise InvalidArgument("jittered rendering without rng needs ray_ids")
        coarse_u = per_ray_uniforms(cfg.seed, STAGE_COARSE, ray_ids, cfg.n_coarse)
        fine_u = per_ray_uniforms(cfg.seed, STAGE_FINE, ray_ids, cfg.n_fine)

    ts = stratified_samples(near, far, cfg.n_coarse, jitter=cfg.jitter, rng=rng, n_rays=R, uniforms=coarse_u)
    perturb = cfg.perturb_sigma_std if training else 0.0
    if perturb > 0.0 and rng is None:
        raise InvalidArgument("training with sigma perturbation needs an rng")

    sig_c, rad_c = _eval_on_samples(coarse, origins, directions, ts.t, perturb, rng)
    val_c, w_c = quadrature(sig_c, rad_c, ts, white_background=cfg.white_background)

    ts_f = hierarchical_resample(ts, w_c.data, cfg.n_fine, deterministic=not cfg.jitter,
                                 rng=rng, uniforms=fine_u)
    sig_f, rad_f = _eval_on_samples(fine, origins, directions, ts_f.t, perturb, rng)
    val_f, _ = quadrature(sig_f, rad_f, ts_f, white_background=cfg.white_background)
    return RayBatchResult(coarse=val_c, fine=val_f, coarse_weights=w_c.data, fine_samples=ts_f)


def render_spectrum_maps(
    coarse: SpectralField,
    fine: SpectralField,
    camera: Camera,
    cfg: RenderConfig,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    全画素を描画して粗/細のスペクトルマップスタックを返す

    Returns:
        (Ŝ^c, Ŝ^f) いずれも [H, W, n_bands, 3]
    """
    pixels = all_pixels(camera)
    rays = generate_rays(camera, pixels)
    n_rays = len(rays)
    n_bands = coarse.cfg.n_bands
    stack_c = np.zeros((n_rays, n_bands, 3))
    stack_f = np.zeros((n_rays, n_bands, 3))
    batches = [(s, min(s + cfg.batch_rays, n_rays)) for s in range(0, n_rays, cfg.batch_rays)]

    def work(bounds):
        s, e = bounds
        # no_grad はスレッドローカルなのでワーカー内で有効化する
        with no_grad():
            res = render_rays(coarse, fine, rays.origins[s:e], rays.directions[s:e],
                              camera.near, camera.far, cfg, ray_ids=range(s, e))
        stack_c[s:e] = res.coarse.data
        stack_f[s:e] = res.fine.data

    if cfg.workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            list(pool.map(work, batches))
    else:
        for b in batches:
            work(b)

    shape = (camera.height, camera.width, n_bands, 3)
    return stack_c.reshape(shape), stack_f.reshape(shape)
