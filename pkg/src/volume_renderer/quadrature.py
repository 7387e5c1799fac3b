"""
体積レンダリングの求積

    δ_i = t_{i+1} - t_i（最後は t_f - t_N）
    α_i = 1 - exp(-σ_i δ_i)
    T_i = exp(-Σ_{j<i} σ_j δ_j) = Π_{j<i} (1 - α_j)
    出力 = Σ_i T_i α_i s_i（全バンド・全チャネルで重み共通）

σ と放射輝度は Tensor のまま扱い、学習時はここを通して逆伝播する。
"""
from typing import Tuple, Union

import numpy as np

from src.errors import ShapeMismatch
from src.nn_core import Tensor, as_tensor, exclusive_cumsum
from src.volume_renderer.sampling import SampleSet


def deltas(t: np.ndarray, t_f) -> np.ndarray:
    """区間幅 [..., N]（最後の区間は t_f まで）"""
    t = np.asarray(t, dtype=np.float64)
    far = np.broadcast_to(np.asarray(t_f, dtype=np.float64), t.shape[:-1])[..., None]
    return np.concatenate([np.diff(t, axis=-1), far - t[..., -1:]], axis=-1)


def quadrature(
    sigmas,
    radiances,
    ts: Union[SampleSet, np.ndarray],
    t_f=None,
    white_background: bool = False,
) -> Tuple[Tensor, Tensor]:
    """
    レイごとの求積

    Args:
        sigmas: [N] または [R, N]
        radiances: [N, s, 3] または [R, N, s, 3]
        ts: SampleSet またはサンプル位置 [..., N]
        t_f: 遠方境界（SampleSet なら省略可）
        white_background: True なら (1 - Σ重み) を全チャネルに加える

    Returns:
        (values [s, 3] または [R, s, 3], weights [N] または [R, N])
    """
    if isinstance(ts, SampleSet):
        t = ts.t
        t_f = ts.far if t_f is None else t_f
    else:
        t = np.asarray(ts, dtype=np.float64)
    if t_f is None:
        raise ShapeMismatch("quadrature needs t_f when ts is a bare array")

    sigmas = as_tensor(sigmas)
    radiances = as_tensor(radiances)
    single = sigmas.ndim == 1
    if single:
        sigmas = sigmas.reshape(1, -1)
        radiances = radiances.reshape((1,) + radiances.shape)
        t = t.reshape(1, -1)
    R, N = sigmas.shape
    if t.shape != (R, N) or radiances.ndim != 4 or radiances.shape[:2] != (R, N):
        raise ShapeMismatch(f"quadrature: sigmas {sigmas.shape}, radiances {radiances.shape}, t {t.shape}")

    sd = sigmas * deltas(t, t_f)
    alpha = 1.0 - (-sd).exp()
    trans = (-exclusive_cumsum(sd, axis=-1)).exp()
    weights = trans * alpha
    values = (weights.reshape(R, N, 1, 1) * radiances).sum(axis=1)
    if white_background:
        values = values + (1.0 - weights.sum(axis=1)).reshape(R, 1, 1)

    if single:
        return values.reshape(values.shape[1:]), weights.reshape(-1)
    return values, weights
