"""
データセット入出力（SFM 形式、解析的シーンと参照レンダリング、合成データ生成、読み込み、画像書き出し）
"""
from src.dataset_io.sfm import (
    SpectralFloatMap, sfm_encode, sfm_decode, sfm_write, sfm_read, sfm_header,
)
from src.dataset_io.scene import (
    SpectralEmission, DensityBlob, DensityBox, AnalyticScene, default_scene, scene_from_dict,
    oracle_render, oracle_render_rays, ORACLE_SAMPLES_PER_RAY,
)
from src.dataset_io.synthetic import ViewLayout, gen_synthetic, MANIFEST_NAME
from src.dataset_io.loader import ViewRecord, SpectralDataset, load_dataset, check_self_consistency
from src.dataset_io.export import write_png, write_ppm, read_ppm, export_stack_previews, plot_training_curve
