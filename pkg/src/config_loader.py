"""
設定ファイルローダー
config/*.yaml を読み込み、既定値のマージ・バリデーション・型付きアクセサを提供
"""
import copy
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from src.env_check import resolve_workers
from src.fusion import SAUNetConfig
from src.losses import LossConfig
from src.radiance_field import EncodingConfig, SpectralMLPConfig
from src.spectral_color import (
    BAND_COLOR_MODES, BandPartition, CMFTable, SPD, load_cmf_table, load_illuminant, partition_from_config,
)
from src.volume_renderer import RenderConfig

DTYPES = ("float64", "float32")
SECTIONS = ("spectral", "field", "render", "loss", "fusion", "train", "dataset", "paths")

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "spectral": {
        "layout": "uniform",         # uniform / real8 / explicit
        "s_num": 11,
        "lambda_min_nm": 380.0,
        "lambda_max_nm": 780.0,
        "illuminant": "D65",
        "cmf_path": None,
        "illuminant_path": None,
    },
    "field": {
        "depth": 8,
        "width": 256,
        "skip_layer": 4,
        "bottleneck_width": 128,
        "num_freqs_position": 10,
        "num_freqs_direction": 4,
        "output_mode": "spectral",   # spectral / rgb
    },
    "render": {
        "n_coarse": 64,
        "n_fine": 128,
        "white_background": False,
        "perturb_sigma_std": 0.0,
        "batch_rays": 1024,
        "workers": 1,
    },
    "loss": {
        "lambda_rgb": 1.1,
        "ws_interval": 100,
        "ema_decay": 0.9,
        "use_ws": True,
    },
    "fusion": {
        "kind": "saunet",            # saunet / linear
        "base_channels": 16,
        "sa_placement": ["E1", "E2"],
        "se_reduction": 4,
        "attention_gates": True,
        "lr": 1e-3,
        "iterations": 2000,
        "crop": 32,
        "per_channel": False,
    },
    "train": {
        "lr": 5e-4,
        "iterations": 20000,
        "batch_rays": 1024,
        "log_every": 100,
        "eval_every": 1000,
        "ckpt_every": 5000,
        "eval_views": 2,
        "lr_decay": False,
        "joint": False,
        "joint_patch": 16,
        "dtype": "float64",          # float64 / float32（勾配検証は常に float64）
    },
    "dataset": {
        "n_train": 30,
        "n_test": 10,
        "width": 64,
        "height": 64,
        "fov_deg": 40.0,
        "radius": 4.0,
        "near": 2.0,
        "far": 6.0,
        "layout": "sphere",          # sphere / arc
        "samples_per_ray": 4096,
        "illuminant_in_maps": True,
        "band_colors": "signed",     # signed / clipped
        "export_png": False,
    },
    "paths": {
        "data_dir": "data/synthetic",
        "out_dir": "results",
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


class RunConfig:
    """実行設定を管理するクラス"""

    def __init__(self, config_path: Optional[str] = "config/default.yaml", overrides: Optional[dict] = None):
        file_cfg: Dict[str, Any] = {}
        self.config_path = Path(config_path) if config_path else None
        if self.config_path is not None:
            if not self.config_path.exists():
                raise FileNotFoundError(f"Config file not found: {config_path}")
            with open(self.config_path, "r", encoding="utf-8") as f:
                file_cfg = yaml.safe_load(f) or {}

        self.config = _merge(DEFAULTS, file_cfg)
        self.config.setdefault("seed", 0)
        if overrides:
            self.apply_overrides(overrides)
        self._validate()

    def _validate(self):
        """必須セクションと値域のバリデーション"""
        for key in SECTIONS:
            if not isinstance(self.config.get(key), dict):
                raise ValueError(f"Missing required config section: {key}")

        sp = self.config["spectral"]
        if sp["layout"] == "uniform" and int(sp["s_num"]) < 1:
            raise ValueError("spectral.s_num must be >= 1")
        if sp["layout"] == "explicit" and not sp.get("centers_nm"):
            raise ValueError("Missing spectral.centers_nm for explicit layout")

        if self.config["loss"]["lambda_rgb"] <= 0:
            raise ValueError("loss.lambda_rgb must be > 0")
        tr = self.config["train"]
        if tr["lr"] <= 0 or self.config["fusion"]["lr"] <= 0:
            raise ValueError("Invalid learning rate (must be > 0)")
        if tr["iterations"] < 0 or tr["batch_rays"] < 1:
            raise ValueError("Invalid train.iterations / train.batch_rays")
        if self.config["fusion"]["kind"] not in ("saunet", "linear"):
            raise ValueError(f"Unknown fusion.kind: {self.config['fusion']['kind']}")
        if self.config["fusion"]["crop"] % 4:
            raise ValueError("fusion.crop must be a multiple of 4")
        if tr["dtype"] not in DTYPES:
            raise ValueError(f"Unknown train.dtype: {tr['dtype']}, use one of {DTYPES}")
        if self.config["dataset"]["band_colors"] not in BAND_COLOR_MODES:
            raise ValueError(f"Unknown dataset.band_colors: {self.config['dataset']['band_colors']}")

    def apply_overrides(self, overrides: Dict[str, Any]) -> None:
        """
        "section.key" 形式の上書き（None は無視）

        Args:
            overrides: {"train.lr": 1e-3, "seed": 7, ...}
        """
        for dotted, value in overrides.items():
            if value is None:
                continue
            if "." not in dotted:
                self.config[dotted] = value
                continue
            section, key = dotted.split(".", 1)
            self.config.setdefault(section, {})[key] = value

    def derive(self, overrides: Dict[str, Any]) -> "RunConfig":
        """設定を複製して上書きしたもの（元の設定は変更しない）"""
        out = copy.copy(self)
        out.config = copy.deepcopy(self.config)
        out.apply_overrides(overrides)
        out._validate()
        return out

    # ==================== アクセサ ====================

    def get_seed(self) -> int:
        return int(self.config["seed"])

    def section(self, name: str) -> Dict[str, Any]:
        return self.config[name]

    def get_partition(self) -> BandPartition:
        return partition_from_config(self.config["spectral"])

    def get_illuminant(self) -> SPD:
        sp = self.config["spectral"]
        return load_illuminant(sp["illuminant"], sp.get("illuminant_path"))

    def get_cmf_table(self) -> CMFTable:
        """spectral.cmf_path（None なら環境変数 > 同梱データ）"""
        return load_cmf_table(self.config["spectral"].get("cmf_path"))

    def get_dtype(self) -> str:
        return str(self.config["train"]["dtype"])

    def get_field_config(self, n_bands: Optional[int] = None) -> SpectralMLPConfig:
        f = self.config["field"]
        s_num = n_bands if n_bands is not None else self.get_partition().s_num
        return SpectralMLPConfig(
            s_num=s_num,
            depth=int(f["depth"]),
            width=int(f["width"]),
            skip_layer=int(f["skip_layer"]),
            bottleneck_width=int(f["bottleneck_width"]),
            encoding=EncodingConfig(int(f["num_freqs_position"]), int(f["num_freqs_direction"])),
            output_mode=f["output_mode"],
        )

    def get_render_config(self, training: bool = False) -> RenderConfig:
        r = self.config["render"]
        return RenderConfig(
            n_coarse=int(r["n_coarse"]),
            n_fine=int(r["n_fine"]),
            white_background=bool(r["white_background"]),
            perturb_sigma_std=float(r["perturb_sigma_std"]),
            seed=self.get_seed(),
            jitter=training,
            batch_rays=int(r["batch_rays"]),
            workers=self.get_workers(),
        )

    def get_workers(self) -> int:
        return resolve_workers(self.config["render"]["workers"])

    def get_loss_config(self) -> LossConfig:
        l = self.config["loss"]
        return LossConfig(float(l["lambda_rgb"]), int(l["ws_interval"]), float(l["ema_decay"]), bool(l["use_ws"]))

    def get_saunet_config(self, s_num: int) -> SAUNetConfig:
        fu = self.config["fusion"]
        return SAUNetConfig(
            s_num=s_num,
            base_channels=int(fu["base_channels"]),
            sa_placement=tuple(fu["sa_placement"] or ()),
            se_reduction=int(fu["se_reduction"]),
            attention_gates=bool(fu["attention_gates"]),
        )

    def get_data_dir(self) -> Path:
        return Path(self.config["paths"]["data_dir"])

    def get_out_dir(self) -> Path:
        return Path(self.config["paths"]["out_dir"])

    def to_dict(self) -> Dict[str, Any]:
        """設定を辞書で返す"""
        return self.config

    def write_echo(self, out_dir, extra: Optional[dict] = None) -> Path:
        """解決済み設定を out_dir/config_echo.yaml に書く"""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        echo = copy.deepcopy(self.config)
        if extra:
            echo.update(extra)
        path = out_dir / "config_echo.yaml"
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump(echo, f, sort_keys=False, allow_unicode=True)
        return path


def load_run_config(config_path: Optional[str] = "config/default.yaml", overrides: Optional[dict] = None) -> RunConfig:
    """実行設定をロード"""
    return RunConfig(config_path, overrides)
