"""
SAUNet の学習（スペクトルマップスタック → RGB、L_RGB のみ）
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.errors import BadDimensions, InvalidArgument, NumericFailure, ShapeMismatch
from src.fusion import SAUNet, SAUNetConfig, make_saunet, saunet_forward, saunet_from_records, saunet_to_records
from src.losses import rgb_loss
from src.metrics import psnr
from src.nn_core import adam_step, load_checkpoint, no_grad, save_checkpoint
from src.training.state import adam_from_records, adam_to_records

logger = logging.getLogger(__name__)


@dataclass
class FusionTrainConfig:
    iterations: int = 2000
    lr: float = 1e-3
    crop: int = 32
    log_every: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.crop < 4 or self.crop % 4:
            raise BadDimensions(f"crop must be a positive multiple of 4, got {self.crop}")
        if self.iterations < 0 or self.lr <= 0:
            raise InvalidArgument(f"Invalid fusion training config: {self}")


def random_crop(stack: np.ndarray, rgb: np.ndarray, size: int, rng: np.random.Generator):
    H, W = stack.shape[:2]
    if H < size or W < size:
        raise BadDimensions(f"crop {size} larger than image {H}x{W}")
    j = int(rng.integers(0, H - size + 1))
    i = int(rng.integers(0, W - size + 1))
    return stack[j:j + size, i:i + size], rgb[j:j + size, i:i + size]


class FusionTrainer:
    """(スタック, RGB) の組から SAUNet を学習する"""

    def __init__(
        self,
        stacks: Sequence[np.ndarray],
        targets: Sequence[np.ndarray],
        net_cfg: SAUNetConfig,
        train_cfg: FusionTrainConfig,
        out_dir: Optional[Union[str, Path]] = None,
    ):
        if not stacks or len(stacks) != len(targets):
            raise ShapeMismatch(f"{len(stacks)} stacks vs {len(targets)} targets")
        for s, t in zip(stacks, targets):
            if s.shape[:2] != t.shape[:2] or s.shape[2] != net_cfg.s_num:
                raise ShapeMismatch(f"stack {s.shape} incompatible with target {t.shape} / s_num={net_cfg.s_num}")
        self.stacks = [np.asarray(s, dtype=np.float64) for s in stacks]
        self.targets = [np.asarray(t, dtype=np.float64) for t in targets]
        self.cfg = train_cfg
        self.crop = min(train_cfg.crop, *(4 * (min(s.shape[:2]) // 4) for s in self.stacks))
        if self.crop < 4:
            raise BadDimensions("images smaller than 4x4 cannot be fused")
        self.net: SAUNet = make_saunet(net_cfg, train_cfg.seed)
        self.step_num = 0
        self.log_rows: List[Dict] = []
        self.out_dir = Path(out_dir) if out_dir else None

    def step(self) -> Dict[str, float]:
        step = self.step_num + 1
        rng = np.random.default_rng([self.cfg.seed, step])
        k = int(rng.integers(0, len(self.stacks)))
        stack, target = random_crop(self.stacks[k], self.targets[k], self.crop, rng)
        loss = rgb_loss(saunet_forward(stack, self.net), target)
        value = float(loss.item())
        if not np.isfinite(value):
            logger.error(f"❌ 融合損失が NaN/Inf: step={step} image={k}")
            raise NumericFailure(f"non-finite fusion loss at step {step} (image {k})")
        loss.backward()
        adam_step(self.net.params, self.cfg.lr)
        self.step_num = step
        return {"step": step, "loss_rgb": value}

    def train(self, iterations: Optional[int] = None) -> pd.DataFrame:
        total = self.cfg.iterations if iterations is None else iterations
        logger.info(f"🚀 SAUNet 学習開始: {len(self.stacks)} images crop={self.crop} "
                    f"params={self.net.num_parameters():,}")
        while self.step_num < total:
            row = self.step()
            if self.cfg.log_every and (row["step"] % self.cfg.log_every == 0 or row["step"] == 1):
                logger.info(f"step {row['step']}: L_RGB={row['loss_rgb']:.6g}")
            self.log_rows.append(row)
        if self.out_dir:
            self.save(self.out_dir / "saunet_final.spnf")
            pd.DataFrame(self.log_rows).to_csv(self.out_dir / "fusion_log.csv", index=False, float_format="%.9g")
        logger.info(f"✅ SAUNet 学習完了: step {self.step_num}")
        return pd.DataFrame(self.log_rows)

    def evaluate(self) -> float:
        """全画像（4 の倍数に切り詰め）の平均 PSNR"""
        scores = []
        with no_grad():
            for s, t in zip(self.stacks, self.targets):
                H, W = 4 * (s.shape[0] // 4), 4 * (s.shape[1] // 4)
                pred = saunet_forward(s[:H, :W], self.net).data
                scores.append(psnr(pred, t[:H, :W]))
        return float(np.mean(scores))

    def to_records(self) -> Dict[str, np.ndarray]:
        records = saunet_to_records(self.net)
        records.update(adam_to_records(self.net.params, "saunet"))
        records["meta/fusion_step"] = np.array(float(self.step_num))
        return records

    def save(self, path: Union[str, Path]) -> Path:
        return save_checkpoint(path, self.to_records())

    def resume(self, path: Union[str, Path]) -> None:
        records = load_checkpoint(path)
        net = saunet_from_records(records)
        if net.cfg != self.net.cfg:
            raise ShapeMismatch(f"checkpoint SAUNet config {net.cfg} != requested {self.net.cfg}")
        adam_from_records(net.params, records, "saunet")
        self.net = net
        self.step_num = int(records.get("meta/fusion_step", 0))
