"""
ピンホールカメラとレイ生成

姿勢は camera-to-world の 4x4（右手系、カメラは -z 方向を向き、+y が画像上方向）。
画素 (i, j) は列 i・行 j、レイは画素中心 (i+0.5, j+0.5) を通る。
"""
from dataclasses import dataclass
from typing import List

import numpy as np

from src.errors import InvalidArgument, OutOfBounds


@dataclass
class Camera:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    pose: np.ndarray
    near: float
    far: float

    def __post_init__(self):
        self.pose = np.asarray(self.pose, dtype=np.float64)
        if self.width < 1 or self.height < 1:
            raise InvalidArgument(f"Camera size must be positive, got {self.width}x{self.height}")
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidArgument(f"Focal lengths must be > 0, got fx={self.fx} fy={self.fy}")
        if not self.far > self.near > 0:
            raise InvalidArgument(f"Need far > near > 0, got near={self.near} far={self.far}")
        if self.pose.shape != (4, 4):
            raise InvalidArgument(f"pose must be 4x4, got {self.pose.shape}")
        if not np.array_equal(self.pose[3], [0.0, 0.0, 0.0, 1.0]):
            raise InvalidArgument(f"pose bottom row must be (0,0,0,1), got {self.pose[3]}")

    @property
    def num_pixels(self) -> int:
        return self.width * self.height

    @classmethod
    def from_fov(cls, width: int, height: int, fov_deg: float, pose, near: float, far: float) -> "Camera":
        """水平画角から内部パラメータを決める（主点は画像中心）"""
        focal = 0.5 * width / np.tan(0.5 * np.deg2rad(fov_deg))
        return cls(width, height, focal, focal, width / 2.0, height / 2.0, pose, near, far)

    def intrinsics_dict(self) -> dict:
        return {"width": int(self.width), "height": int(self.height), "fx": float(self.fx),
                "fy": float(self.fy), "cx": float(self.cx), "cy": float(self.cy)}


@dataclass
class Rays:
    """レイ束（origins, directions ともに [N, 3]）"""
    origins: np.ndarray
    directions: np.ndarray

    def __len__(self) -> int:
        return self.origins.shape[0]

    def subset(self, idx) -> "Rays":
        return Rays(self.origins[idx], self.directions[idx])


def all_pixels(camera: Camera) -> np.ndarray:
    """全画素の (i, j) を行優先で返す [H*W, 2]"""
    jj, ii = np.meshgrid(np.arange(camera.height), np.arange(camera.width), indexing="ij")
    return np.stack([ii.ravel(), jj.ravel()], axis=-1)


def generate_rays(camera: Camera, pixels) -> Rays:
    """
    画素中心を通るレイを生成する

    Args:
        pixels: [N, 2] の (i, j)

    Raises:
        OutOfBounds: 画像外の画素
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    i, j = pixels[:, 0], pixels[:, 1]
    outside = (i < 0) | (i >= camera.width) | (j < 0) | (j >= camera.height)
    if np.any(outside):
        k = int(np.argmax(outside))
        raise OutOfBounds(f"pixel ({i[k]}, {j[k]}) outside {camera.width}x{camera.height} image")

    dirs_cam = np.stack([
        (i + 0.5 - camera.cx) / camera.fx,
        -(j + 0.5 - camera.cy) / camera.fy,
        -np.ones_like(i),
    ], axis=-1)
    dirs = dirs_cam @ camera.pose[:3, :3].T
    dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(camera.pose[:3, 3], dirs.shape).copy()
    return Rays(origins, dirs)


# ==================== 視点配置 ====================

def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """eye から target を向く camera-to-world 姿勢"""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    up = np.asarray(up, dtype=np.float64)
    if abs(np.dot(forward, up)) > 1.0 - 1e-9:
        up = np.array([0.0, 1.0, 0.0]) if abs(forward[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    true_up = np.cross(right, forward)
    pose = np.eye(4)
    pose[:3, 0] = right
    pose[:3, 1] = true_up
    pose[:3, 2] = -forward
    pose[:3, 3] = eye
    return pose


def sphere_poses(n_views: int, radius: float, seed: int = 0, min_elevation_deg: float = -30.0,
                 max_elevation_deg: float = 60.0) -> List[np.ndarray]:
    """
    原点を囲む球面上の視点（フィボナッチ配置 + シード付き方位オフセット）

    Returns:
        n_views 個の 4x4 姿勢。すべて原点から距離 radius
    """
    if n_views < 1:
        raise InvalidArgument(f"n_views must be >= 1, got {n_views}")
    rng = np.random.default_rng(seed)
    offset = rng.uniform(0.0, 2.0 * np.pi)
    golden = np.pi * (3.0 - np.sqrt(5.0))
    z_lo, z_hi = np.sin(np.deg2rad(min_elevation_deg)), np.sin(np.deg2rad(max_elevation_deg))
    poses = []
    for k in range(n_views):
        z = z_lo + (z_hi - z_lo) * (k + 0.5) / n_views
        r = np.sqrt(max(0.0, 1.0 - z * z))
        phi = offset + golden * k
        eye = radius * np.array([r * np.cos(phi), r * np.sin(phi), z])
        poses.append(look_at(eye))
    return poses


def arc_poses(n_views: int, radius: float, arc_deg: float = 60.0, elevation_deg: float = 10.0) -> List[np.ndarray]:
    """前方の円弧上に並ぶ視点（実機撮影の前向き配置）"""
    if n_views < 1:
        raise InvalidArgument(f"n_views must be >= 1, got {n_views}")
    elev = np.deg2rad(elevation_deg)
    azimuths = np.deg2rad(np.linspace(-arc_deg / 2.0, arc_deg / 2.0, n_views))
    poses = []
    for az in azimuths:
        eye = radius * np.array([np.cos(elev) * np.sin(az), -np.cos(elev) * np.cos(az), np.sin(elev)])
        poses.append(look_at(eye))
    return poses


def pose_invertible(pose: np.ndarray, tol: float = 1e-9) -> bool:
    return abs(float(np.linalg.det(np.asarray(pose, dtype=np.float64)))) > tol
