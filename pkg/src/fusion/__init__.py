"""
スペクトルマップスタックから白色光 RGB への融合（線形 / SAUNet）
"""
from src.fusion.linear import (
    LinearFusionWeights, linear_fuse, fit_weights_least_squares, weights_vs_spd,
    write_weights_file, read_weights_file,
)
from src.fusion.saunet import (
    SAUNetConfig, SAUNet, make_saunet, saunet_forward, attention_gate, spectrum_attention,
    se_scales, stack_to_nchw, saunet_to_records, saunet_from_records,
)
from src.fusion.model import FusionModel, FUSION_KINDS, save_fusion_model, load_fusion_model
