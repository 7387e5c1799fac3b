"""
解析的シーンと密な求積による参照レンダリング

密度はガウス型ブロブ（と定数密度の箱）の和。各プリミティブはバンドごとの発光スペクトルを持ち、
点 x でのバンド k の放射輝度は密度で重み付けた発光の平均:

    ρ_k(x) = Σ_b σ_b(x) e_b(λ_k) / Σ_b σ_b(x)

スペクトルマップは S_k = ρ̂_k · c_k（c_k はバンドの表示色）。
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.errors import InvalidArgument, ShapeMismatch
from src.spectral_color import BandPartition
from src.volume_renderer import Camera, all_pixels, generate_rays

logger = logging.getLogger(__name__)

ORACLE_SAMPLES_PER_RAY = 4096
ORACLE_RAY_CHUNK = 256


@dataclass(frozen=True)
class SpectralEmission:
    """
    e(λ) = amplitude · exp(-(λ - center)² / (2 width²))（width=None なら全波長一定）
    """
    center_nm: float = 550.0
    width_nm: Optional[float] = 40.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.amplitude <= 1.0:
            raise InvalidArgument(f"emission amplitude must be in [0, 1], got {self.amplitude}")
        if self.width_nm is not None and self.width_nm <= 0:
            raise InvalidArgument(f"emission width must be > 0, got {self.width_nm}")

    def at(self, lambdas) -> np.ndarray:
        lambdas = np.asarray(lambdas, dtype=np.float64)
        if self.width_nm is None:
            return np.full(lambdas.shape, self.amplitude)
        return self.amplitude * np.exp(-0.5 * ((lambdas - self.center_nm) / self.width_nm) ** 2)

    def to_dict(self) -> dict:
        return {"center_nm": float(self.center_nm),
                "width_nm": None if self.width_nm is None else float(self.width_nm),
                "amplitude": float(self.amplitude)}


@dataclass(frozen=True)
class DensityBlob:
    """σ(x) = peak_sigma · exp(-|x - center|² / (2 radius²))"""
    center: Tuple[float, float, float]
    radius: float
    peak_sigma: float
    emission: SpectralEmission

    def __post_init__(self):
        if self.radius <= 0 or self.peak_sigma < 0:
            raise InvalidArgument(f"blob needs radius > 0 and peak_sigma >= 0, got {self.radius}, {self.peak_sigma}")

    def density(self, x: np.ndarray) -> np.ndarray:
        d2 = np.sum((x - np.asarray(self.center)) ** 2, axis=-1)
        return self.peak_sigma * np.exp(-0.5 * d2 / (self.radius * self.radius))

    def to_dict(self) -> dict:
        return {"type": "blob", "center": [float(c) for c in self.center], "radius": float(self.radius),
                "peak_sigma": float(self.peak_sigma), "emission": self.emission.to_dict()}


@dataclass(frozen=True)
class DensityBox:
    """軸平行な箱の内部で一定密度"""
    lower: Tuple[float, float, float]
    upper: Tuple[float, float, float]
    sigma: float
    emission: SpectralEmission

    def __post_init__(self):
        if any(u <= l for l, u in zip(self.lower, self.upper)) or self.sigma < 0:
            raise InvalidArgument(f"box needs upper > lower and sigma >= 0: {self}")

    def density(self, x: np.ndarray) -> np.ndarray:
        inside = np.all((x >= np.asarray(self.lower)) & (x <= np.asarray(self.upper)), axis=-1)
        return np.where(inside, self.sigma, 0.0)

    def to_dict(self) -> dict:
        return {"type": "box", "lower": [float(v) for v in self.lower], "upper": [float(v) for v in self.upper],
                "sigma": float(self.sigma), "emission": self.emission.to_dict()}


@dataclass
class AnalyticScene:
    name: str = "analytic"
    primitives: List = field(default_factory=list)
    bounds: Tuple[Tuple[float, float, float], Tuple[float, float, float]] = ((-1.5, -1.5, -1.5), (1.5, 1.5, 1.5))
    white_background: bool = False

    def density(self, x: np.ndarray) -> np.ndarray:
        """[..., 3] -> [...]"""
        x = np.asarray(x, dtype=np.float64)
        if not self.primitives:
            return np.zeros(x.shape[:-1])
        return sum(p.density(x) for p in self.primitives)

    def density_and_radiance(self, x: np.ndarray, lambdas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Returns:
            (σ [...], ρ [..., s])
        """
        x = np.asarray(x, dtype=np.float64)
        s = len(lambdas)
        if not self.primitives:
            return np.zeros(x.shape[:-1]), np.zeros(x.shape[:-1] + (s,))
        sig = np.stack([p.density(x) for p in self.primitives], axis=-1)         # [..., P]
        emis = np.stack([p.emission.at(lambdas) for p in self.primitives], axis=0)  # [P, s]
        total = sig.sum(axis=-1)
        weighted = sig @ emis
        with np.errstate(invalid="ignore", divide="ignore"):
            rho = np.where(total[..., None] > 0, weighted / total[..., None], 0.0)
        return total, rho

    def to_dict(self) -> dict:
        return {"name": self.name, "white_background": bool(self.white_background),
                "bounds": [list(map(float, b)) for b in self.bounds],
                "primitives": [p.to_dict() for p in self.primitives]}


def default_scene() -> AnalyticScene:
    """青・緑・赤の3ブロブ（450 / 550 / 650 nm）"""
    return AnalyticScene(
        name="three_blobs",
        primitives=[
            DensityBlob((-0.55, 0.0, 0.0), 0.35, 12.0, SpectralEmission(450.0, 30.0, 0.9)),
            DensityBlob((0.45, 0.3, 0.15), 0.40, 10.0, SpectralEmission(550.0, 35.0, 0.85)),
            DensityBlob((0.1, -0.45, -0.3), 0.30, 14.0, SpectralEmission(650.0, 30.0, 0.95)),
        ],
    )


def scene_from_dict(d: dict) -> AnalyticScene:
    prims = []
    for p in d.get("primitives", []):
        em = SpectralEmission(**p["emission"])
        if p["type"] == "blob":
            prims.append(DensityBlob(tuple(p["center"]), p["radius"], p["peak_sigma"], em))
        elif p["type"] == "box":
            prims.append(DensityBox(tuple(p["lower"]), tuple(p["upper"]), p["sigma"], em))
        else:
            raise InvalidArgument(f"Unknown primitive type: {p['type']}")
    bounds = d.get("bounds")
    scene = AnalyticScene(d.get("name", "analytic"), prims, white_background=bool(d.get("white_background", False)))
    if bounds:
        scene.bounds = (tuple(bounds[0]), tuple(bounds[1]))
    return scene


# ==================== 参照レンダリング ====================

def oracle_render_rays(
    scene: AnalyticScene,
    origins: np.ndarray,
    directions: np.ndarray,
    near: float,
    far: float,
    lambdas: Sequence[float],
    samples_per_ray: int = ORACLE_SAMPLES_PER_RAY,
) -> np.ndarray:
    """
    中点則による固定刻みの求積

    Returns:
        ρ̂ [R, s]
    """
    if samples_per_ray < 1:
        raise InvalidArgument(f"samples_per_ray must be >= 1, got {samples_per_ray}")
    lambdas = np.asarray(lambdas, dtype=np.float64)
    R = origins.shape[0]
    out = np.zeros((R, len(lambdas)))
    step = (far - near) / samples_per_ray
    t = near + (np.arange(samples_per_ray) + 0.5) * step
    for s in range(0, R, ORACLE_RAY_CHUNK):
        e = min(s + ORACLE_RAY_CHUNK, R)
        pts = origins[s:e, None, :] + t[None, :, None] * directions[s:e, None, :]
        sigma, rho = scene.density_and_radiance(pts, lambdas)
        sd = sigma * step
        trans = np.exp(-(np.cumsum(sd, axis=-1) - sd))
        w = trans * (1.0 - np.exp(-sd))
        out[s:e] = np.einsum("rn,rns->rs", w, rho)
        if scene.white_background:
            out[s:e] += (1.0 - w.sum(axis=-1))[:, None]
    return out


def oracle_render(
    scene: AnalyticScene,
    camera: Camera,
    partition: BandPartition,
    samples_per_ray: int = ORACLE_SAMPLES_PER_RAY,
    band_colors: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    全画素の参照スペクトルマップスタック

    Args:
        band_colors: [s, 3] のバンド色（負成分可）。None なら全チャネル 1（ρ̂ をそのまま3チャネルに複製）

    Returns:
        [H, W, s, 3]
    """
    rays = generate_rays(camera, all_pixels(camera))
    rho = oracle_render_rays(scene, rays.origins, rays.directions, camera.near, camera.far,
                             partition.centers, samples_per_ray)
    colors = np.ones((partition.s_num, 3)) if band_colors is None else np.asarray(band_colors, dtype=np.float64)
    if colors.shape != (partition.s_num, 3):
        raise ShapeMismatch(f"band_colors shape {colors.shape} != ({partition.s_num}, 3)")
    stack = rho[:, :, None] * colors[None, :, :]
    return stack.reshape(camera.height, camera.width, partition.s_num, 3)
