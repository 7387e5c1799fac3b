"""
SpectralMLP

    (s_λ1..s_λn, σ) = F_Θ(γ(x), γ(d))

トランク（depth 層、skip_layer で γ(x) を再注入）→ σ ヘッド（relu）→ 特徴層 →
γ(d) を連結 → ボトルネック（relu）→ 3*s_num ヘッド（sigmoid）。
方向は σ ヘッドの後に入るため、σ は視線方向に依存しない。
"""
import logging
from dataclasses import dataclass, field as dataclass_field
from typing import Dict, Optional, Tuple

import numpy as np

from src.errors import InvalidArgument, NotNormalized, ShapeMismatch
from src.nn_core import ParameterStore, Tensor, concat, dense, init_dense, relu, sigmoid
from src.radiance_field.encoding import EncodingConfig, encode_direction, encode_position

logger = logging.getLogger(__name__)

OUTPUT_MODES = ("spectral", "rgb")
DIRECTION_TOL = 1e-6

# サブシード: 粗/細モデル
COARSE, FINE = 0, 1


@dataclass(frozen=True)
class SpectralMLPConfig:
    """
    Attributes:
        output_mode: spectral（3*s_num 出力）/ rgb（3 出力、バンドを持たない比較用モデル）
    """
    s_num: int = 11
    depth: int = 8
    width: int = 256
    skip_layer: int = 4
    bottleneck_width: int = 128
    encoding: EncodingConfig = dataclass_field(default_factory=EncodingConfig)
    output_mode: str = "spectral"

    def __post_init__(self):
        if self.depth < 1 or self.width < 1 or self.bottleneck_width < 1:
            raise InvalidArgument(f"Invalid MLP dims: depth={self.depth} width={self.width}")
        if not 0 <= self.skip_layer < self.depth:
            raise InvalidArgument(f"skip_layer must be in [0, {self.depth}), got {self.skip_layer}")
        if self.s_num < 1:
            raise InvalidArgument(f"s_num must be >= 1, got {self.s_num}")
        if self.output_mode not in OUTPUT_MODES:
            raise InvalidArgument(f"output_mode must be one of {OUTPUT_MODES}, got {self.output_mode}")

    @property
    def n_bands(self) -> int:
        """ヘッドが出力するバンド数（rgb モードは 1）"""
        return 1 if self.output_mode == "rgb" else self.s_num

    @property
    def head_width(self) -> int:
        return 3 * self.n_bands

    def layer_shapes(self) -> Dict[str, Tuple[int, int]]:
        """層名 -> (fan_in, fan_out)。パラメータ生成順もこの順"""
        pos_w = self.encoding.position_width
        dir_w = self.encoding.direction_width
        shapes = {}
        for i in range(self.depth):
            fan_in = pos_w if i == 0 else self.width
            if i == self.skip_layer and i > 0:
                fan_in += pos_w
            shapes[f"trunk{i}"] = (fan_in, self.width)
        shapes["sigma"] = (self.width, 1)
        shapes["feature"] = (self.width, self.width)
        shapes["bottleneck"] = (self.width + dir_w, self.bottleneck_width)
        shapes["radiance"] = (self.bottleneck_width, self.head_width)
        return shapes

    def num_parameters(self) -> int:
        return sum(i * o + o for i, o in self.layer_shapes().values())

    def to_vector(self) -> np.ndarray:
        enc = self.encoding
        return np.array([
            self.s_num, self.depth, self.width, self.skip_layer, self.bottleneck_width,
            enc.num_freqs_position, enc.num_freqs_direction, int(enc.include_identity),
            OUTPUT_MODES.index(self.output_mode),
        ], dtype=np.float64)

    @classmethod
    def from_vector(cls, v) -> "SpectralMLPConfig":
        v = [int(round(x)) for x in np.asarray(v).ravel()]
        return cls(
            s_num=v[0], depth=v[1], width=v[2], skip_layer=v[3], bottleneck_width=v[4],
            encoding=EncodingConfig(v[5], v[6], bool(v[7])),
            output_mode=OUTPUT_MODES[v[8]],
        )

    def to_dict(self) -> dict:
        return {
            "s_num": self.s_num, "depth": self.depth, "width": self.width,
            "skip_layer": self.skip_layer, "bottleneck_width": self.bottleneck_width,
            "num_freqs_position": self.encoding.num_freqs_position,
            "num_freqs_direction": self.encoding.num_freqs_direction,
            "include_identity": self.encoding.include_identity,
            "output_mode": self.output_mode,
        }


@dataclass
class FieldSample:
    """1 サンプル点の出力"""
    sigma: float
    radiance: np.ndarray  # [n_bands, 3]


@dataclass
class FieldOutput:
    """バッチ出力（Tensor のまま保持し、逆伝播に使う）"""
    sigma: Tensor      # [B]
    radiance: Tensor   # [B, n_bands, 3]

    def __len__(self) -> int:
        return self.sigma.shape[0]

    def sample(self, i: int) -> FieldSample:
        return FieldSample(float(self.sigma.data[i]), self.radiance.data[i].copy())


class SpectralField:
    """SpectralMLP のパラメータ一式"""

    def __init__(self, cfg: SpectralMLPConfig, params: ParameterStore):
        self.cfg = cfg
        self.params = params

    def layer(self, name: str) -> Tuple[Tensor, Tensor]:
        return self.params[f"{name}.W"], self.params[f"{name}.b"]

    def num_parameters(self) -> int:
        return self.params.num_parameters()

    def with_config(self, cfg: SpectralMLPConfig) -> "SpectralField":
        return SpectralField(cfg, self.params)


def _init_field(cfg: SpectralMLPConfig, seed: int, sub: int) -> SpectralField:
    store = ParameterStore()
    for idx, (name, (fan_in, fan_out)) in enumerate(cfg.layer_shapes().items()):
        # 層ごとに独立したストリーム。s_num を変えてもトランクの初期値は同じ
        rng = np.random.default_rng([seed, sub, idx])
        W, b = init_dense(rng, fan_in, fan_out)
        store.add(f"{name}.W", W)
        store.add(f"{name}.b", b)
    return SpectralField(cfg, store)


def make_field(cfg: SpectralMLPConfig, seed: int) -> Tuple[SpectralField, SpectralField]:
    """
    粗モデルと細モデルを独立に初期化する

    Returns:
        (coarse, fine)
    """
    coarse = _init_field(cfg, seed, COARSE)
    fine = _init_field(cfg, seed, FINE)
    logger.info(f"✅ SpectralMLP 初期化: depth={cfg.depth} width={cfg.width} s_num={cfg.s_num} "
                f"mode={cfg.output_mode} params={coarse.num_parameters():,} x2")
    return coarse, fine


def check_directions(directions: np.ndarray) -> None:
    norms = np.linalg.norm(directions, axis=-1)
    bad = np.abs(norms - 1.0) > DIRECTION_TOL
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NotNormalized(f"direction {i} has norm {norms[i]:.9f} (tolerance {DIRECTION_TOL})")


def field_eval(
    field: SpectralField,
    positions,
    directions,
    perturb_std: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> FieldOutput:
    """
    フィールドを評価する

    Args:
        positions: [B, 3] レイ上のサンプル点 r(t)
        directions: [B, 3] 単位方向
        perturb_std: σ 前活性に加える正規ノイズの標準偏差（学習時のみ、rng 必須）

    Returns:
        FieldOutput（sigma [B], radiance [B, n_bands, 3]）

    Raises:
        NotNormalized: 方向が単位長でない
    """
    cfg = field.cfg
    positions = np.asarray(positions, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    if positions.ndim != 2 or positions.shape[1] != 3 or directions.shape != positions.shape:
        raise ShapeMismatch(f"positions {positions.shape} / directions {directions.shape} must be [B, 3]")
    check_directions(directions)

    gx = Tensor(encode_position(positions, cfg.encoding))
    gd = Tensor(encode_direction(directions, cfg.encoding))

    h = gx
    for i in range(cfg.depth):
        if i == cfg.skip_layer and i > 0:
            h = concat([h, gx], axis=1)
        h = relu(dense(h, *field.layer(f"trunk{i}")))

    sigma_pre = dense(h, *field.layer("sigma"))
    if perturb_std > 0.0:
        if rng is None:
            raise InvalidArgument("perturb_std > 0 requires an rng")
        sigma_pre = sigma_pre + rng.normal(0.0, perturb_std, size=sigma_pre.shape)
    sigma = relu(sigma_pre).reshape(-1)

    feat = dense(h, *field.layer("feature"))
    h = relu(dense(concat([feat, gd], axis=1), *field.layer("bottleneck")))
    rad = sigmoid(dense(h, *field.layer("radiance")))
    return FieldOutput(sigma=sigma, radiance=rad.reshape(-1, cfg.n_bands, 3))


# ==================== 直列化 ====================

def field_to_records(field: SpectralField, prefix: str) -> Dict[str, np.ndarray]:
    records = {f"{prefix}/{name}": p.data for name, p in field.params.items()}
    records["meta/field_cfg"] = field.cfg.to_vector()
    return records


def field_from_records(records: Dict[str, np.ndarray], prefix: str) -> SpectralField:
    """チェックポイントのレコードから SpectralField を復元する"""
    if "meta/field_cfg" not in records:
        raise ShapeMismatch("checkpoint has no meta/field_cfg record")
    cfg = SpectralMLPConfig.from_vector(records["meta/field_cfg"])
    field = _init_field(cfg, 0, COARSE)
    arrays = {name[len(prefix) + 1:]: arr for name, arr in records.items() if name.startswith(prefix + "/")}
    field.params.load_arrays(arrays)
    return field
