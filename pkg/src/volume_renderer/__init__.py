"""
体積レンダリング（レイ生成、層化/階層的サンプリング、求積、スペクトルマップ描画）
"""
from src.volume_renderer.camera import (
    Camera, Rays, all_pixels, generate_rays, look_at, sphere_poses, arc_poses, pose_invertible,
)
from src.volume_renderer.sampling import (
    SampleSet, PDF_FLOOR, break_ties, stratified_samples, hierarchical_resample, sample_pdf, bin_edges,
    per_ray_uniforms,
)
from src.volume_renderer.quadrature import deltas, quadrature
from src.volume_renderer.render import RenderConfig, RayBatchResult, render_rays, render_spectrum_maps
