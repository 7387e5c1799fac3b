"""
最小構成の自動微分エンジン

SpectralMLP と SAUNet が使う演算、Adam、勾配検証、SPNF チェックポイント。
"""
from src.nn_core.tensor import Tensor, as_tensor, no_grad, is_grad_enabled, set_default_dtype
from src.nn_core.ops import (
    dense, conv2d, relu, sigmoid, global_avg_pool, downsample2, upsample2,
    concat, mse, exclusive_cumsum, init_dense, init_conv,
)
from src.nn_core.optim import AdamConfig, ParameterStore, adam_step
from src.nn_core.gradcheck import GradCheckReport, finite_diff_check
from src.nn_core.checkpoint import save_checkpoint, load_checkpoint, encode_checkpoint, decode_checkpoint

# 勾配検証の既定値
GRADCHECK_STEP = 1e-4
GRADCHECK_TOL = 1e-4
