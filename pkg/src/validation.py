"""
検証モジュール
- 勾配検証スイート（全層種 + 注意ゲート + SA ブロック + フィールド + 求積）
- 求積の収束チェック（一様密度スラブの解析解との比較）
"""
import logging
from typing import Callable, Dict, List

import numpy as np

from src.fusion import SAUNetConfig, attention_gate, make_saunet, spectrum_attention
from src.nn_core import (
    GRADCHECK_STEP, GRADCHECK_TOL, GradCheckReport, Tensor, concat, conv2d, dense, downsample2,
    exclusive_cumsum, finite_diff_check, global_avg_pool, mse, relu, set_default_dtype, sigmoid, upsample2,
)
from src.radiance_field import EncodingConfig, SpectralMLPConfig, field_eval, make_field
from src.volume_renderer import quadrature, stratified_samples

logger = logging.getLogger(__name__)


def _projection(rng: np.random.Generator, shape) -> np.ndarray:
    """出力をスカラーに落とすための固定ランダム射影"""
    return rng.normal(size=shape)


def _case(name: str, x: Tensor, f: Callable[[], Tensor]) -> GradCheckReport:
    return finite_diff_check(f, x, tol=GRADCHECK_TOL, h=GRADCHECK_STEP, name=name)


def gradcheck_cases(seed: int = 0) -> List[GradCheckReport]:
    """
    有限差分スイートを実行する（float64）

    Returns:
        ケースごとの GradCheckReport
    """
    set_default_dtype(np.float64)
    rng = np.random.default_rng(seed)
    reports: List[GradCheckReport] = []

    # ==================== 全結合 / 畳み込み ====================
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    W = Tensor(rng.normal(size=(4, 5)) * 0.5, requires_grad=True)
    b = Tensor(rng.normal(size=5) * 0.1, requires_grad=True)
    P = _projection(rng, (3, 5))
    for name, t in (("dense.x", x), ("dense.W", W), ("dense.b", b)):
        reports.append(_case(name, t, lambda: (dense(x, W, b) * P).sum()))

    xc = Tensor(rng.normal(size=(1, 2, 5, 5)), requires_grad=True)
    K = Tensor(rng.normal(size=(3, 2, 3, 3)) * 0.3, requires_grad=True)
    kb = Tensor(rng.normal(size=3) * 0.1, requires_grad=True)
    Pc = _projection(rng, (1, 3, 5, 5))
    for name, t in (("conv2d.x", xc), ("conv2d.W", K), ("conv2d.b", kb)):
        reports.append(_case(name, t, lambda: (conv2d(xc, K, kb, padding=1) * Pc).sum()))
    Ps = _projection(rng, (1, 3, 2, 2))
    reports.append(_case("conv2d.stride2", K, lambda: (conv2d(xc, K, kb, stride=2, padding=0) * Ps).sum()))

    # ==================== 活性化 / プーリング ====================
    xa = Tensor(rng.normal(size=(2, 3, 4, 4)), requires_grad=True)
    Pa = _projection(rng, (2, 3, 4, 4))
    reports.append(_case("relu", xa, lambda: (relu(xa) * Pa).sum()))
    reports.append(_case("sigmoid", xa, lambda: (sigmoid(xa) * Pa).sum()))
    Pg = _projection(rng, (2, 3, 1, 1))
    reports.append(_case("global_avg_pool", xa, lambda: (global_avg_pool(xa) * Pg).sum()))
    Pd = _projection(rng, (2, 3, 2, 2))
    reports.append(_case("downsample2", xa, lambda: (downsample2(xa) * Pd).sum()))
    Pu = _projection(rng, (2, 3, 8, 8))
    reports.append(_case("upsample2", xa, lambda: (upsample2(xa) * Pu).sum()))
    xb = Tensor(rng.normal(size=(2, 2, 4, 4)), requires_grad=True)
    Pcat = _projection(rng, (2, 5, 4, 4))
    reports.append(_case("concat", xb, lambda: (concat([xa, xb], axis=1) * Pcat).sum()))
    target = rng.normal(size=(2, 3, 4, 4))
    reports.append(_case("mse", xa, lambda: mse(xa, target)))
    xs = Tensor(np.abs(rng.normal(size=(3, 6))), requires_grad=True)
    Pe = _projection(rng, (3, 6))
    reports.append(_case("exclusive_cumsum", xs, lambda: (exclusive_cumsum(xs) * Pe).sum()))

    # ==================== 注意ゲート / SA ブロック ====================
    net = make_saunet(SAUNetConfig(s_num=2, base_channels=4, sa_placement=("E1",), se_reduction=2), seed)
    skip = Tensor(rng.normal(size=(1, 4, 4, 4)), requires_grad=True)
    gate = Tensor(rng.normal(size=(1, 8, 2, 2)), requires_grad=True)
    Pag = _projection(rng, (1, 4, 4, 4))
    reports.append(_case("attention_gate.skip", skip, lambda: (attention_gate(skip, gate, net, "D1") * Pag).sum()))
    reports.append(_case("attention_gate.gate", gate, lambda: (attention_gate(skip, gate, net, "D1") * Pag).sum()))
    psi = net.p("D1.ag.psi.W")
    reports.append(_case("attention_gate.psi", psi, lambda: (attention_gate(skip, gate, net, "D1") * Pag).sum()))
    reports.append(_case("sa_block.x", skip, lambda: (spectrum_attention(skip, net, "E1") * Pag).sum()))
    se1 = net.p("E1.sa.se1.W")
    reports.append(_case("sa_block.se1", se1, lambda: (spectrum_attention(skip, net, "E1") * Pag).sum()))

    # ==================== フィールド / 求積 ====================
    cfg = SpectralMLPConfig(s_num=2, depth=3, width=6, skip_layer=2, bottleneck_width=4,
                            encoding=EncodingConfig(2, 1))
    coarse, _ = make_field(cfg, seed)
    pts = rng.uniform(-1.0, 1.0, size=(4, 3))
    dirs = rng.normal(size=(4, 3))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    Pr = _projection(rng, (4, 2, 3))
    Psig = _projection(rng, (4,))

    def field_scalar():
        out = field_eval(coarse, pts, dirs)
        return (out.radiance * Pr).sum() + (out.sigma * Psig).sum()

    for layer in ("trunk0.W", "trunk2.W", "sigma.W", "bottleneck.W", "radiance.W"):
        reports.append(_case(f"field.{layer}", coarse.params[layer], field_scalar))

    sig = Tensor(np.abs(rng.normal(size=(2, 8))) + 0.1, requires_grad=True)
    rad = Tensor(rng.uniform(size=(2, 8, 2, 3)), requires_grad=True)
    ts = np.sort(rng.uniform(2.0, 6.0, size=(2, 8)), axis=-1)
    Pq = _projection(rng, (2, 2, 3))
    reports.append(_case("quadrature.sigma", sig, lambda: (quadrature(sig, rad, ts, t_f=6.0)[0] * Pq).sum()))
    reports.append(_case("quadrature.radiance", rad, lambda: (quadrature(sig, rad, ts, t_f=6.0)[0] * Pq).sum()))
    return reports


def summarize_gradcheck(reports: List[GradCheckReport]) -> Dict[str, float]:
    worst = max(reports, key=lambda r: r.max_rel_error)
    return {"n_cases": len(reports), "n_failed": sum(not r.passed for r in reports),
            "worst_case": worst.name, "worst_rel_error": worst.max_rel_error}


# ==================== 求積の収束 ====================

def slab_quadrature_error(n_samples: int, sigma: float = 2.0, depth: float = 1.0) -> float:
    """
    一様密度スラブ（単位発光）で 1 - exp(-σ·depth) との誤差

    サンプルは [0, depth) に一様に置き、最後の区間は depth まで伸ばす。
    """
    t = np.arange(n_samples) * (depth / n_samples)
    sig = np.full(n_samples, sigma)
    rad = np.ones((n_samples, 1, 3))
    value, _ = quadrature(sig, rad, t, t_f=depth)
    return float(abs(value.data[0, 0] - (1.0 - np.exp(-sigma * depth))))


def jittered_slab_errors(sample_counts=(32, 64, 128, 256, 512), seed: int = 0, n_rays: int = 64) -> List[float]:
    """
    層化ジッタ付きサンプルでのレイ平均誤差

    レイごとに σ を区間 [0, 0.5) で 0、[0.5, 1] で 2 とする段差スラブ。
    """
    rng = np.random.default_rng(seed)
    exact = 1.0 - np.exp(-2.0 * 0.5)
    errors = []
    for n in sample_counts:
        ts = stratified_samples(0.0, 1.0, n, rng=rng, n_rays=n_rays)
        sig = np.where(ts.t >= 0.5, 2.0, 0.0)
        rad = np.ones((n_rays, n, 1, 3))
        value, _ = quadrature(sig, rad, ts)
        errors.append(float(np.mean(np.abs(value.data[:, 0, 0] - exact))))
    return errors
