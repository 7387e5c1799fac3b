"""
SAUNet: スペクトルマップ → 白色光 RGB

構成（入力 [B, 3*s_num, H, W]、H, W は 4 の倍数）:
    E1: conv3x3 ×2 (+SA)                    解像度 H
    E2: down → conv3x3 ×2 (+SA)             H/2
    E3: down → conv3x3 ×2 (+SA)             H/4
    D3: conv3x3 ×2（ボトルネック）          H/4
    D2: up(D3) ⊕ AG(E2, D3) → conv3x3 ×2    H/2
    D1: up(D2) ⊕ AG(E1, D2) → conv3x3 ×2    H
    出力: conv1x1 → 3ch → sigmoid

チャネル数は base·(1, 2, 4)。SA = 1x1 conv+relu ×3 → SE チャネル注意 → 残差加算。
AG = 加法型注意ゲート（中間チャネル C/2）。
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from src.errors import BadDimensions, InvalidArgument, ShapeMismatch
from src.nn_core import (
    ParameterStore, Tensor, as_tensor, concat, conv2d, dense, downsample2,
    global_avg_pool, init_conv, init_dense, relu, sigmoid, upsample2,
)

logger = logging.getLogger(__name__)

STAGES = ("E1", "E2", "E3")


@dataclass(frozen=True)
class SAUNetConfig:
    """
    Attributes:
        s_num: 入力バンド数（入力チャネル = 3*s_num）
        sa_placement: SA ブロックを置くエンコーダ（空なら SA 無効）
        attention_gates: False ならスキップ接続をそのまま連結
    """
    s_num: int
    base_channels: int = 16
    sa_placement: Tuple[str, ...] = ("E1", "E2")
    se_reduction: int = 4
    attention_gates: bool = True

    def __post_init__(self):
        if self.s_num < 1 or self.base_channels < 1 or self.se_reduction < 1:
            raise InvalidArgument(f"Invalid SAUNet config: {self}")
        unknown = set(self.sa_placement) - set(STAGES)
        if unknown:
            raise InvalidArgument(f"Unknown sa_placement stages: {sorted(unknown)}")
        object.__setattr__(self, "sa_placement", tuple(s for s in STAGES if s in self.sa_placement))
        for stage in self.sa_placement:
            c = self.stage_channels(stage)
            if c % self.se_reduction:
                raise InvalidArgument(f"{stage} channels {c} not divisible by se_reduction {self.se_reduction}")

    @property
    def in_channels(self) -> int:
        return 3 * self.s_num

    @property
    def enc_channels(self) -> Tuple[int, int, int]:
        b = self.base_channels
        return (b, 2 * b, 4 * b)

    def stage_channels(self, stage: str) -> int:
        return self.enc_channels[STAGES.index(stage)]

    def to_vector(self) -> np.ndarray:
        flags = [1.0 if s in self.sa_placement else 0.0 for s in STAGES]
        return np.array([self.s_num, self.base_channels, self.se_reduction, float(self.attention_gates)] + flags)

    @classmethod
    def from_vector(cls, v) -> "SAUNetConfig":
        v = np.asarray(v).ravel()
        placement = tuple(s for s, f in zip(STAGES, v[4:7]) if f > 0.5)
        return cls(int(round(v[0])), int(round(v[1])), placement, int(round(v[2])), bool(v[3] > 0.5))


class SAUNet:
    """SAUNet のパラメータ一式"""

    def __init__(self, cfg: SAUNetConfig, params: ParameterStore):
        self.cfg = cfg
        self.params = params

    def p(self, name: str) -> Tensor:
        return self.params[name]

    def num_parameters(self) -> int:
        return self.params.num_parameters()


# ==================== パラメータ生成 ====================

def _layer_specs(cfg: SAUNetConfig) -> List[Tuple[str, str, int, int, int]]:
    """(名前, 種類, in, out, kernel) の一覧。生成順もこの順"""
    b1, b2, b3 = cfg.enc_channels
    specs = []

    def conv(name, cin, cout, k=3):
        specs.append((name, "conv", cin, cout, k))

    def sa(prefix, c):
        for i in (1, 2, 3):
            conv(f"{prefix}.sa.c{i}", c, c, 1)
        specs.append((f"{prefix}.sa.se1", "dense", c, c // cfg.se_reduction, 0))
        specs.append((f"{prefix}.sa.se2", "dense", c // cfg.se_reduction, c, 0))

    def ag(prefix, c_skip, c_gate):
        inter = max(c_skip // 2, 1)
        conv(f"{prefix}.ag.Wx", c_skip, inter, 1)
        conv(f"{prefix}.ag.Wg", c_gate, inter, 1)
        conv(f"{prefix}.ag.psi", inter, 1, 1)

    for stage, cin, cout in (("E1", cfg.in_channels, b1), ("E2", b1, b2), ("E3", b2, b3)):
        conv(f"{stage}.conv1", cin, cout)
        conv(f"{stage}.conv2", cout, cout)
        if stage in cfg.sa_placement:
            sa(stage, cout)
    conv("D3.conv1", b3, b3)
    conv("D3.conv2", b3, b3)
    if cfg.attention_gates:
        ag("D2", b2, b3)
    conv("D2.conv1", b3 + b2, b2)
    conv("D2.conv2", b2, b2)
    if cfg.attention_gates:
        ag("D1", b1, b2)
    conv("D1.conv1", b2 + b1, b1)
    conv("D1.conv2", b1, b1)
    conv("out", b1, 3, 1)
    return specs


def make_saunet(cfg: SAUNetConfig, seed: int) -> SAUNet:
    store = ParameterStore()
    for idx, (name, kind, cin, cout, k) in enumerate(_layer_specs(cfg)):
        rng = np.random.default_rng([seed, idx])
        if kind == "conv":
            W, b = init_conv(rng, cin, cout, k)
        else:
            W, b = init_dense(rng, cin, cout)
        store.add(f"{name}.W", W)
        store.add(f"{name}.b", b)
    logger.info(f"✅ SAUNet 初期化: s_num={cfg.s_num} base={cfg.base_channels} "
                f"SA={list(cfg.sa_placement) or 'なし'} AG={'on' if cfg.attention_gates else 'off'} "
                f"params={store.num_parameters():,}")
    return SAUNet(cfg, store)


# ==================== ブロック ====================

def _conv(model: SAUNet, name: str, x: Tensor) -> Tensor:
    W = model.p(f"{name}.W")
    return conv2d(x, W, model.p(f"{name}.b"), stride=1, padding=W.shape[-1] // 2)


def attention_gate(skip, gate, model: SAUNet, prefix: str) -> Tensor:
    """
    加法型注意ゲート

    Args:
        skip: [B, C, H, W]
        gate: [B, Cg, H/2, W/2]

    Returns:
        skip ⊙ mask（mask は [B, 1, H, W]、値は (0, 1)）
    """
    skip, gate = as_tensor(skip), as_tensor(gate)
    if skip.ndim != 4 or gate.ndim != 4:
        raise ShapeMismatch(f"attention_gate expects NCHW, got {skip.shape} / {gate.shape}")
    if gate.shape[0] != skip.shape[0] or 2 * gate.shape[2] != skip.shape[2] or 2 * gate.shape[3] != skip.shape[3]:
        raise ShapeMismatch(f"gate {gate.shape} must be half the spatial size of skip {skip.shape}")
    mask = gate_mask(skip, gate, model, prefix)
    return skip * mask


def gate_mask(skip: Tensor, gate: Tensor, model: SAUNet, prefix: str) -> Tensor:
    theta = _conv(model, f"{prefix}.ag.Wx", skip)
    phi = _conv(model, f"{prefix}.ag.Wg", upsample2(gate))
    return sigmoid(_conv(model, f"{prefix}.ag.psi", relu(theta + phi)))


def se_scales(y, model: SAUNet, prefix: str) -> Tensor:
    """SE チャネル注意の係数 [B, C]"""
    y = as_tensor(y)
    B, C = y.shape[:2]
    z = global_avg_pool(y).reshape(B, C)
    z = relu(dense(z, model.p(f"{prefix}.sa.se1.W"), model.p(f"{prefix}.sa.se1.b")))
    return sigmoid(dense(z, model.p(f"{prefix}.sa.se2.W"), model.p(f"{prefix}.sa.se2.b")))


def spectrum_attention(x, model: SAUNet, prefix: str) -> Tensor:
    """
    1x1 conv+relu ×3 → SE で再重み付け → 入力との残差加算

    Args:
        x: [B, C, H, W]（C は se_reduction の倍数）
    """
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeMismatch(f"spectrum_attention expects NCHW, got {x.shape}")
    if f"{prefix}.sa.c1.W" in model.params and model.p(f"{prefix}.sa.c1.W").shape[1] != x.shape[1]:
        raise ShapeMismatch(f"{prefix}: SA built for {model.p(f'{prefix}.sa.c1.W').shape[1]} channels, got {x.shape[1]}")
    y = x
    for i in (1, 2, 3):
        y = relu(_conv(model, f"{prefix}.sa.c{i}", y))
    B, C = y.shape[:2]
    s = se_scales(y, model, prefix)
    return x + y * s.reshape(B, C, 1, 1)


def _encoder(model: SAUNet, stage: str, x: Tensor) -> Tensor:
    h = relu(_conv(model, f"{stage}.conv1", x))
    h = relu(_conv(model, f"{stage}.conv2", h))
    if stage in model.cfg.sa_placement:
        h = spectrum_attention(h, model, stage)
    return h


def _decoder(model: SAUNet, stage: str, below: Tensor, skip: Tensor) -> Tensor:
    gated = attention_gate(skip, below, model, stage) if model.cfg.attention_gates else skip
    h = concat([upsample2(below), gated], axis=1)
    h = relu(_conv(model, f"{stage}.conv1", h))
    return relu(_conv(model, f"{stage}.conv2", h))


# ==================== 順伝播 ====================

def stack_to_nchw(stack) -> Tensor:
    """[H, W, s, 3] / [B, H, W, s, 3] → [B, 3s, H, W]（チャネル順はバンド優先）"""
    stack = as_tensor(stack)
    if stack.ndim == 4:
        stack = stack.reshape((1,) + stack.shape)
    if stack.ndim != 5 or stack.shape[-1] != 3:
        raise ShapeMismatch(f"stack must be [H, W, s, 3] or [B, H, W, s, 3], got {stack.shape}")
    B, H, W, s, _ = stack.shape
    return stack.reshape(B, H, W, 3 * s).transpose(0, 3, 1, 2)


def saunet_forward(stack, model: SAUNet) -> Tensor:
    """
    Ĉ = SAUNet(Ŝ)

    Args:
        stack: [H, W, s, 3] または [B, H, W, s, 3]

    Returns:
        [H, W, 3]（バッチ入力なら [B, H, W, 3]）、値は (0, 1)

    Raises:
        BadDimensions: H, W が 4 の倍数でない
        ShapeMismatch: バンド数が設定と異なる
    """
    stack = as_tensor(stack)
    batched = stack.ndim == 5
    shape = stack.shape
    if stack.ndim not in (4, 5) or shape[-1] != 3:
        raise ShapeMismatch(f"stack must be [H, W, s, 3] or [B, H, W, s, 3], got {shape}")
    if shape[-2] != model.cfg.s_num:
        raise ShapeMismatch(f"stack has {shape[-2]} bands, model expects {model.cfg.s_num}")
    H, W = shape[-4], shape[-3]
    if H % 4 or W % 4:
        raise BadDimensions(f"H and W must be divisible by 4, got {H}x{W}")

    x = stack_to_nchw(stack)
    e1 = _encoder(model, "E1", x)
    e2 = _encoder(model, "E2", downsample2(e1))
    e3 = _encoder(model, "E3", downsample2(e2))
    d3 = relu(_conv(model, "D3.conv2", relu(_conv(model, "D3.conv1", e3))))
    d2 = _decoder(model, "D2", d3, e2)
    d1 = _decoder(model, "D1", d2, e1)
    out = sigmoid(_conv(model, "out", d1)).transpose(0, 2, 3, 1)
    return out if batched else out.reshape(H, W, 3)


# ==================== 直列化 ====================

def saunet_to_records(model: SAUNet, prefix: str = "saunet") -> Dict[str, np.ndarray]:
    records = {f"{prefix}/{name}": p.data for name, p in model.params.items()}
    records["meta/saunet_cfg"] = model.cfg.to_vector()
    return records


def saunet_from_records(records: Dict[str, np.ndarray], prefix: str = "saunet") -> SAUNet:
    if "meta/saunet_cfg" not in records:
        raise ShapeMismatch("checkpoint has no meta/saunet_cfg record")
    cfg = SAUNetConfig.from_vector(records["meta/saunet_cfg"])
    model = make_saunet(cfg, 0)
    arrays = {name[len(prefix) + 1:]: arr for name, arr in records.items() if name.startswith(prefix + "/")}
    model.params.load_arrays(arrays)
    return model
