"""
解析的シーンから合成データセットを生成する

出力:
    <out>/manifest.yaml
    <out>/views/<view>/band_XX.sfm   （S_k、3ch、既定は符号付きバンド色）
    <out>/views/<view>/rgb.sfm       （白色光合成、3ch）
    <out>/previews/<view>/*.png      （export_png=True のときのみ）
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import yaml

from src.errors import InvalidArgument
from src.fusion import linear_fuse
from src.spectral_color import (
    SPD, BandPartition, band_coefficients, compose_rgb, normalize_band_colors,
    CMFTable, illuminant_at_centers, kappa_for_illuminant, load_cmf_table,
)
from src.volume_renderer import Camera, arc_poses, sphere_poses
from src.dataset_io.export import export_stack_previews
from src.dataset_io.scene import ORACLE_SAMPLES_PER_RAY, AnalyticScene, oracle_render
from src.dataset_io.sfm import SpectralFloatMap, sfm_write

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.yaml"
MANIFEST_FORMAT = "spectral-dataset-v1"
VIEW_LAYOUTS = ("sphere", "arc")


@dataclass
class ViewLayout:
    n_train: int = 30
    n_test: int = 10
    width: int = 64
    height: int = 64
    fov_deg: float = 40.0
    radius: float = 4.0
    near: float = 2.0
    far: float = 6.0
    layout: str = "sphere"

    def __post_init__(self):
        if self.n_train + self.n_test < 2:
            raise InvalidArgument(f"need >= 2 views, got {self.n_train}+{self.n_test}")
        if self.layout not in VIEW_LAYOUTS:
            raise InvalidArgument(f"Unknown view layout '{self.layout}', use one of {VIEW_LAYOUTS}")

    @property
    def n_views(self) -> int:
        return self.n_train + self.n_test

    def cameras(self, seed: int) -> List[Camera]:
        if self.layout == "sphere":
            poses = sphere_poses(self.n_views, self.radius, seed=seed)
        else:
            poses = arc_poses(self.n_views, self.radius)
        return [Camera.from_fov(self.width, self.height, self.fov_deg, p, self.near, self.far) for p in poses]


def _split_tags(n_train: int, n_test: int, seed: int) -> List[str]:
    """テストビューを等間隔に散らす（シードでずらす）"""
    n = n_train + n_test
    tags = ["train"] * n
    if n_test:
        offset = int(np.random.default_rng(seed).integers(0, n))
        for k in range(n_test):
            tags[(offset + (k * n) // n_test) % n] = "test"
    return tags


def _rel(path: Path, root: Path) -> str:
    return path.relative_to(root).as_posix()


def gen_synthetic(
    out_dir: Union[str, Path],
    scene: AnalyticScene,
    partition: BandPartition,
    illuminant: SPD,
    seed: int,
    views: Optional[ViewLayout] = None,
    samples_per_ray: int = ORACLE_SAMPLES_PER_RAY,
    illuminant_in_maps: bool = True,
    workers: int = 1,
    export_png: bool = False,
    band_colors: str = "signed",
    cmf_table: Optional[CMFTable] = None,
) -> Path:
    """
    合成データセットを生成してマニフェストのパスを返す

    Args:
        illuminant_in_maps: False ならバンドマップは単位光源で作り、光源は RGB 合成時に掛ける
            （RGB = κ Σ_k L(λ_k) S_k、マニフェストに rgb_weights を記録）
        workers: ビュー単位の並列数（書き込み先は互いに素）
        band_colors: "signed"（負成分を保持、RGB は分光の測色値と一致）/ "clipped"（[0,1] に切る）
        cmf_table: None なら load_cmf_table()（環境変数 > 同梱データ）
    """
    out_dir = Path(out_dir)
    views = views or ViewLayout()
    table = cmf_table if cmf_table is not None else load_cmf_table()

    coeffs = band_coefficients(table, illuminant if illuminant_in_maps else None, partition)
    colors, gain = normalize_band_colors(coeffs, band_colors)
    kappa = kappa_for_illuminant(table, illuminant, partition) * gain
    rgb_weights = None if illuminant_in_maps else illuminant_at_centers(illuminant, partition)

    cameras = views.cameras(seed)
    tags = _split_tags(views.n_train, views.n_test, seed)
    names = [f"view_{k:03d}" for k in range(views.n_views)]

    def render_view(k: int) -> dict:
        cam, name = cameras[k], names[k]
        view_dir = out_dir / "views" / name
        stack = oracle_render(scene, cam, partition, samples_per_ray, band_colors=colors)
        stack32 = stack.astype(np.float32)
        band_paths = []
        for b, center in enumerate(partition.centers):
            p = sfm_write(view_dir / f"band_{b:02d}.sfm", SpectralFloatMap(stack32[:, :, b, :], center))
            band_paths.append(_rel(p, out_dir))
        # 保存値（f32）から合成する
        stored = stack32.astype(np.float64)
        if rgb_weights is None:
            rgb = compose_rgb(stored, kappa)
        else:
            rgb = linear_fuse(stored, rgb_weights, kappa)
        rgb_path = sfm_write(view_dir / "rgb.sfm", SpectralFloatMap(rgb.astype(np.float32), 0.0))
        if export_png:
            export_stack_previews(out_dir / "previews" / name, stored, partition.centers, rgb)
        return {
            "name": name,
            "split": tags[k],
            "pose": [[float(v) for v in row] for row in cam.pose],
            "intrinsics": cam.intrinsics_dict(),
            "near": float(cam.near),
            "far": float(cam.far),
            "bands": band_paths,
            "rgb": _rel(rgb_path, out_dir),
        }

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(render_view, range(views.n_views)))
    else:
        records = [render_view(k) for k in range(views.n_views)]

    manifest = {
        "format": MANIFEST_FORMAT,
        "scene": scene.to_dict(),
        "seed": int(seed),
        "partition": partition.to_dict(),
        "illuminant": illuminant.name,
        "illuminant_in_maps": bool(illuminant_in_maps),
        "kappa": float(kappa),
        "band_color_mode": band_colors,
        "band_colors": [[float(v) for v in row] for row in colors],
        "rgb_weights": None if rgb_weights is None else [float(v) for v in rgb_weights],
        "samples_per_ray": int(samples_per_ray),
        "views": records,
    }
    manifest_path = out_dir / MANIFEST_NAME
    with open(manifest_path, "w", encoding="utf-8") as f:
        yaml.safe_dump(manifest, f, sort_keys=False, allow_unicode=True)

    n_test = sum(1 for t in tags if t == "test")
    logger.info(f"✅ 合成データセット生成: {out_dir} views={views.n_views} (test={n_test}) "
                f"s_num={partition.s_num} {views.width}x{views.height} κ={kappa:.6g}")
    return manifest_path
