"""
融合モデル（線形 / SAUNet）の共通インターフェース
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from src.errors import InvalidArgument
from src.fusion.linear import LinearFusionWeights, linear_fuse
from src.fusion.saunet import SAUNet, saunet_forward, saunet_from_records, saunet_to_records
from src.nn_core import load_checkpoint, no_grad, save_checkpoint

logger = logging.getLogger(__name__)

FUSION_KINDS = ("linear", "saunet")


@dataclass
class FusionModel:
    """
    kind に応じて linear（weights, kappa）または saunet（net）のどちらかを保持する
    """
    kind: str
    weights: Optional[LinearFusionWeights] = None
    kappa: float = 1.0
    net: Optional[SAUNet] = None

    def __post_init__(self):
        if self.kind not in FUSION_KINDS:
            raise InvalidArgument(f"Unknown fusion kind '{self.kind}', use one of {FUSION_KINDS}")
        if self.kind == "saunet" and self.net is None:
            raise InvalidArgument("saunet fusion model needs a network")

    @classmethod
    def linear(cls, weights=None, kappa: float = 1.0) -> "FusionModel":
        if weights is not None and not isinstance(weights, LinearFusionWeights):
            weights = LinearFusionWeights(weights)
        return cls("linear", weights=weights, kappa=kappa)

    @classmethod
    def saunet(cls, net: SAUNet) -> "FusionModel":
        return cls("saunet", net=net)

    def fuse(self, stack) -> np.ndarray:
        """
        Args:
            stack: [H, W, s, 3]

        Returns:
            [H, W, 3]
        """
        if self.kind == "linear":
            return linear_fuse(stack, self.weights, self.kappa)
        with no_grad():
            return saunet_forward(np.asarray(stack, dtype=np.float64), self.net).data


def save_fusion_model(path: Union[str, Path], model: FusionModel) -> Path:
    """SAUNet をチェックポイントとして保存（線形は weights ファイルを使う）"""
    if model.kind != "saunet":
        raise InvalidArgument("only saunet models are stored as checkpoints")
    return save_checkpoint(path, saunet_to_records(model.net))


def load_fusion_model(path: Union[str, Path]) -> FusionModel:
    records = load_checkpoint(path)
    net = saunet_from_records(records)
    logger.info(f"✅ SAUNet 読み込み: {path}")
    return FusionModel.saunet(net)
