"""
データセットの読み込みと検証

マニフェストの全参照ファイルについて存在・寸法・バンド中心を確認する。
マップ本体は ViewRecord.load_* で必要になったときに読む。
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import yaml

from src.errors import BadPartition, DimMismatch, InvalidArgument, MissingFile
from src.fusion import linear_fuse
from src.spectral_color import BandPartition, partition_from_dict
from src.volume_renderer import Camera, pose_invertible
from src.dataset_io.scene import AnalyticScene, scene_from_dict
from src.dataset_io.sfm import sfm_header, sfm_read
from src.dataset_io.synthetic import MANIFEST_FORMAT, MANIFEST_NAME

logger = logging.getLogger(__name__)

CENTER_TOL_NM = 1e-3
REQUIRED_KEYS = ("partition", "kappa", "views")


@dataclass
class ViewRecord:
    name: str
    split: str
    camera: Camera
    band_paths: List[Path]
    rgb_path: Path

    def load_stack(self) -> np.ndarray:
        """[H, W, s, 3] float64"""
        return np.stack([sfm_read(p).data.astype(np.float64) for p in self.band_paths], axis=2)

    def load_rgb(self) -> np.ndarray:
        """[H, W, 3] float64"""
        return sfm_read(self.rgb_path).data.astype(np.float64)


@dataclass
class SpectralDataset:
    root: Path
    partition: BandPartition
    kappa: float
    illuminant: str
    views: List[ViewRecord]
    band_colors: Optional[np.ndarray] = None
    rgb_weights: Optional[np.ndarray] = None
    scene: Optional[AnalyticScene] = None
    manifest: dict = field(default_factory=dict)

    def split(self, tag: str) -> List[ViewRecord]:
        return [v for v in self.views if v.split == tag]

    @property
    def train_views(self) -> List[ViewRecord]:
        return self.split("train")

    @property
    def test_views(self) -> List[ViewRecord]:
        return self.split("test")

    def view(self, name: str) -> ViewRecord:
        for v in self.views:
            if v.name == name:
                return v
        raise InvalidArgument(f"No view named {name} in {self.root}")

    def compose(self, stack: np.ndarray) -> np.ndarray:
        """保存 RGB と同じ規則でバンドスタックを合成する"""
        return linear_fuse(stack, self.rgb_weights, self.kappa)


def _require_file(root: Path, rel: str) -> Path:
    path = root / rel
    if not path.exists():
        raise MissingFile(path)
    return path


def _check_map(path: Path, width: int, height: int, center: Optional[float]) -> None:
    w, h, c, stored_center = sfm_header(path)
    if (w, h, c) != (width, height, 3):
        raise DimMismatch(f"{path}: {w}x{h}x{c}, expected {width}x{height}x3")
    if center is not None and abs(stored_center - center) > CENTER_TOL_NM:
        raise BadPartition(f"{path}: band center {stored_center} nm, manifest says {center} nm")


def load_dataset(manifest_path: Union[str, Path]) -> SpectralDataset:
    """
    マニフェストを読み込み、参照ファイルを検証する

    Args:
        manifest_path: manifest.yaml またはそれを含むディレクトリ

    Raises:
        MissingFile: マニフェストや参照ファイルが無い
        BadPartition: バンド数・中心がマニフェストの分割と一致しない
        DimMismatch: マップの寸法がカメラと一致しない
    """
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_NAME
    if not manifest_path.exists():
        raise MissingFile(manifest_path)
    root = manifest_path.parent
    with open(manifest_path, "r", encoding="utf-8") as f:
        manifest = yaml.safe_load(f) or {}

    missing = [k for k in REQUIRED_KEYS if k not in manifest]
    if missing:
        raise InvalidArgument(f"{manifest_path}: missing keys {missing}")
    if manifest.get("format", MANIFEST_FORMAT) != MANIFEST_FORMAT:
        raise InvalidArgument(f"{manifest_path}: unsupported format {manifest.get('format')}")

    try:
        partition = partition_from_dict(manifest["partition"])
    except (KeyError, InvalidArgument) as e:
        raise BadPartition(f"{manifest_path}: invalid partition: {e}") from e

    views = []
    for rec in manifest["views"]:
        intr = rec["intrinsics"]
        camera = Camera(intr["width"], intr["height"], intr["fx"], intr["fy"], intr["cx"], intr["cy"],
                        np.array(rec["pose"], dtype=np.float64), rec["near"], rec["far"])
        if not pose_invertible(camera.pose):
            raise InvalidArgument(f"{manifest_path}: view {rec['name']} has a singular pose")
        if len(rec["bands"]) != partition.s_num:
            raise BadPartition(f"view {rec['name']}: {len(rec['bands'])} band files for s_num={partition.s_num}")
        band_paths = [_require_file(root, p) for p in rec["bands"]]
        rgb_path = _require_file(root, rec["rgb"])
        for p, c in zip(band_paths, partition.centers):
            _check_map(p, camera.width, camera.height, float(c))
        _check_map(rgb_path, camera.width, camera.height, None)
        views.append(ViewRecord(rec["name"], rec.get("split", "train"), camera, band_paths, rgb_path))

    colors = manifest.get("band_colors")
    weights = manifest.get("rgb_weights")
    ds = SpectralDataset(
        root=root,
        partition=partition,
        kappa=float(manifest["kappa"]),
        illuminant=str(manifest.get("illuminant", "")),
        views=views,
        band_colors=None if colors is None else np.asarray(colors, dtype=np.float64),
        rgb_weights=None if weights is None else np.asarray(weights, dtype=np.float64),
        scene=scene_from_dict(manifest["scene"]) if "scene" in manifest else None,
        manifest=manifest,
    )
    logger.info(f"✅ データセット読み込み: {root} views={len(views)} "
                f"(train={len(ds.train_views)}, test={len(ds.test_views)}) s_num={partition.s_num}")
    return ds


def check_self_consistency(ds: SpectralDataset, tol: float = 1e-6) -> float:
    """
    保存 RGB とバンドマップ合成の最大差を返す

    Raises:
        DimMismatch: 差が tol を超えるビューがある
    """
    worst = 0.0
    for v in ds.views:
        diff = float(np.max(np.abs(ds.compose(v.load_stack()) - v.load_rgb())))
        worst = max(worst, diff)
        if diff > tol:
            raise DimMismatch(f"view {v.name}: stored RGB differs from composed bands by {diff:.3e}")
    return worst
