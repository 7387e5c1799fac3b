"""
フィールドと SAUNet の同時学習

    L = L_spectral + λ_RGB · L_RGB

学習ビューから正方パッチを切り出し、そのレイを描画したスペクトルマップを SAUNet に通す。
L_RGB の勾配は SAUNet を通ってフィールドまで流れる。
"""
import logging
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from src.dataset_io import SpectralDataset
from src.errors import BadDimensions, InvalidArgument, NumericFailure, ShapeMismatch
from src.fusion import SAUNetConfig, make_saunet, saunet_forward, saunet_from_records, saunet_to_records
from src.losses import LossConfig, rgb_loss, spectral_loss, total_loss, update_ws
from src.nn_core import adam_step
from src.radiance_field import SpectralMLPConfig
from src.training.field import FieldTrainConfig, FieldTrainer
from src.training.state import adam_from_records, adam_to_records, decayed_lr
from src.volume_renderer import generate_rays, render_rays

logger = logging.getLogger(__name__)


class JointTrainer(FieldTrainer):
    """FieldTrainer にパッチ単位の SAUNet 経路を加えたもの"""

    def __init__(
        self,
        dataset: SpectralDataset,
        field_cfg: SpectralMLPConfig,
        render_cfg,
        loss_cfg: LossConfig,
        train_cfg: FieldTrainConfig,
        net_cfg: SAUNetConfig,
        patch: int = 16,
        fusion_lr: float = 1e-3,
        out_dir: Optional[Union[str, Path]] = None,
    ):
        if field_cfg.output_mode != "spectral":
            raise InvalidArgument("joint training needs a spectral field")
        if patch < 4 or patch % 4:
            raise BadDimensions(f"joint patch must be a positive multiple of 4, got {patch}")
        super().__init__(dataset, field_cfg, render_cfg, loss_cfg, train_cfg, out_dir)
        self.patch = patch
        self.fusion_lr = fusion_lr
        self.net = make_saunet(net_cfg, train_cfg.seed)
        self.views = dataset.train_views

    def _patch(self, rng: np.random.Generator):
        v = self.views[int(rng.integers(0, len(self.views)))]
        cam = v.camera
        if cam.width < self.patch or cam.height < self.patch:
            raise BadDimensions(f"patch {self.patch} larger than view {cam.width}x{cam.height}")
        j0 = int(rng.integers(0, cam.height - self.patch + 1))
        i0 = int(rng.integers(0, cam.width - self.patch + 1))
        jj, ii = np.meshgrid(np.arange(j0, j0 + self.patch), np.arange(i0, i0 + self.patch), indexing="ij")
        rays = generate_rays(cam, np.stack([ii.ravel(), jj.ravel()], axis=-1))
        stack = v.load_stack()[j0:j0 + self.patch, i0:i0 + self.patch]
        rgb = v.load_rgb()[j0:j0 + self.patch, i0:i0 + self.patch]
        return cam, rays, stack.reshape(-1, stack.shape[2], 3), rgb

    def step(self) -> Dict[str, float]:
        step = self.step_num + 1
        rng = np.random.default_rng([self.cfg.seed, step])
        cam, rays, target, rgb = self._patch(rng)
        render_rng = np.random.default_rng([self.cfg.seed, step, 1])
        res = render_rays(self.coarse, self.fine, rays.origins, rays.directions, cam.near, cam.far,
                          self.render_cfg, rng=render_rng, training=True)

        l_spec = spectral_loss(res.coarse, res.fine, target, self.ws)
        p = self.patch
        pred_rgb = saunet_forward(res.fine.reshape(p, p, self.field_cfg.n_bands, 3), self.net)
        l_rgb = rgb_loss(pred_rgb, rgb)
        loss = total_loss(l_spec, l_rgb, self.loss_cfg)
        value = float(loss.item())
        if not np.isfinite(value):
            logger.error(f"❌ 同時学習の損失が NaN/Inf: step={step}")
            raise NumericFailure(f"non-finite joint loss at step {step}")

        loss.backward()
        lr = decayed_lr(self.cfg.lr, step, self.cfg.iterations, self.cfg.lr_decay)
        adam_step(self.coarse.params, lr)
        adam_step(self.fine.params, lr)
        adam_step(self.net.params, self.fusion_lr)
        if step % self.loss_cfg.ws_interval == 0:
            self.ws = update_ws(res.coarse, target, self.ws, self.loss_cfg)
        self.step_num = step
        return {"step": step, "loss": value, "loss_spectral": float(l_spec.item()),
                "loss_rgb": float(l_rgb.item()), "lr": lr}

    def to_records(self) -> Dict[str, np.ndarray]:
        records = super().to_records()
        records.update(saunet_to_records(self.net))
        records.update(adam_to_records(self.net.params, "saunet"))
        return records

    def restore(self, records: Dict[str, np.ndarray]) -> None:
        super().restore(records)
        net = saunet_from_records(records)
        if net.cfg != self.net.cfg:
            raise ShapeMismatch(f"checkpoint SAUNet config {net.cfg} != requested {self.net.cfg}")
        adam_from_records(net.params, records, "saunet")
        self.net = net

    def train(self, iterations: Optional[int] = None):
        df = super().train(iterations)
        if len(df):
            last = df.iloc[-1]
            logger.info(f"📊 同時学習: L_spectral={last['loss_spectral']:.6g} L_RGB={last['loss_rgb']:.6g}")
        return df
