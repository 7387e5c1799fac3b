"""
SpectralMLP（粗 + 細）の学習ループ

各ステップの乱数は default_rng([seed, step]) から作るため、チェックポイントからの再開は
中断しなかった場合とビット単位で一致する。
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from src.dataset_io import SpectralDataset, ViewRecord
from src.errors import InvalidArgument, NumericFailure, ShapeMismatch
from src.losses import LossConfig, SpectralWeights, rgb_loss, spectral_loss, update_ws
from src.metrics import band_psnr_row, psnr
from src.nn_core import adam_step, load_checkpoint, no_grad, save_checkpoint
from src.radiance_field import SpectralField, SpectralMLPConfig, field_from_records, field_to_records, make_field
from src.training.state import adam_from_records, adam_to_records, decayed_lr
from src.volume_renderer import RenderConfig, all_pixels, generate_rays, render_rays, render_spectrum_maps

logger = logging.getLogger(__name__)


@dataclass
class FieldTrainConfig:
    iterations: int = 20000
    batch_rays: int = 1024
    lr: float = 5e-4
    log_every: int = 100
    eval_every: int = 1000
    ckpt_every: int = 5000
    eval_views: int = 2
    lr_decay: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0 or self.batch_rays < 1 or self.lr <= 0:
            raise InvalidArgument(f"Invalid field training config: {self}")


@dataclass
class RayPool:
    """学習ビューの全レイと教師値"""
    origins: np.ndarray      # [N, 3]
    directions: np.ndarray   # [N, 3]
    near: np.ndarray         # [N]
    far: np.ndarray          # [N]
    targets: np.ndarray      # [N, s, 3]
    rgb: np.ndarray          # [N, 3]

    def __len__(self) -> int:
        return self.origins.shape[0]

    @classmethod
    def from_views(cls, views: List[ViewRecord]) -> "RayPool":
        if not views:
            raise InvalidArgument("no training views")
        parts = {k: [] for k in ("o", "d", "n", "f", "t", "c")}
        for v in views:
            cam = v.camera
            rays = generate_rays(cam, all_pixels(cam))
            stack = v.load_stack()
            parts["o"].append(rays.origins)
            parts["d"].append(rays.directions)
            parts["n"].append(np.full(len(rays), cam.near))
            parts["f"].append(np.full(len(rays), cam.far))
            parts["t"].append(stack.reshape(-1, stack.shape[2], 3))
            parts["c"].append(v.load_rgb().reshape(-1, 3))
        cat = {k: np.concatenate(v, axis=0) for k, v in parts.items()}
        return cls(cat["o"], cat["d"], cat["n"], cat["f"], cat["t"], cat["c"])


class FieldTrainer:
    """粗/細 SpectralMLP を L_spectral（rgb モードは RGB MSE）で学習する"""

    def __init__(
        self,
        dataset: SpectralDataset,
        field_cfg: SpectralMLPConfig,
        render_cfg: RenderConfig,
        loss_cfg: LossConfig,
        train_cfg: FieldTrainConfig,
        out_dir: Optional[Union[str, Path]] = None,
    ):
        if field_cfg.output_mode == "spectral" and field_cfg.s_num != dataset.partition.s_num:
            raise ShapeMismatch(f"field s_num={field_cfg.s_num} but dataset s_num={dataset.partition.s_num}")
        self.dataset = dataset
        self.field_cfg = field_cfg
        self.render_cfg = render_cfg
        self.loss_cfg = loss_cfg
        self.cfg = train_cfg
        self.out_dir = Path(out_dir) if out_dir else None
        self.coarse, self.fine = make_field(field_cfg, train_cfg.seed)
        self.ws = SpectralWeights(field_cfg.n_bands, uniform=not loss_cfg.use_ws)
        self.step_num = 0
        self.log_rows: List[Dict] = []
        self.pool = RayPool.from_views(dataset.train_views)
        self.eval_set = (dataset.test_views or dataset.train_views)[: max(train_cfg.eval_views, 0)]

    @property
    def rgb_mode(self) -> bool:
        return self.field_cfg.output_mode == "rgb"

    # ==================== 1ステップ ====================

    def batch_indices(self, step: int) -> np.ndarray:
        rng = np.random.default_rng([self.cfg.seed, step])
        n = min(self.cfg.batch_rays, len(self.pool))
        return np.sort(rng.choice(len(self.pool), size=n, replace=False))

    def compute_loss(self, res, idx: np.ndarray):
        """(loss, loss_spectral, loss_rgb) を返す"""
        if self.rgb_mode:
            target = self.pool.rgb[idx]
            coarse = res.coarse.reshape(len(idx), 3)
            fine = res.fine.reshape(len(idx), 3)
            loss = rgb_loss(coarse, target) + rgb_loss(fine, target)
            return loss, 0.0, float(loss.item())
        loss = spectral_loss(res.coarse, res.fine, self.pool.targets[idx], self.ws)
        return loss, float(loss.item()), 0.0

    def step(self) -> Dict[str, float]:
        step = self.step_num + 1
        idx = self.batch_indices(step)
        # ジッタと σ 摂動はバッチ抽出の後のストリームから取る
        rng = np.random.default_rng([self.cfg.seed, step, 1])
        res = render_rays(self.coarse, self.fine, self.pool.origins[idx], self.pool.directions[idx],
                          self.pool.near[idx], self.pool.far[idx], self.render_cfg, rng=rng, training=True)
        loss, l_spec, l_rgb = self.compute_loss(res, idx)
        value = float(loss.item())
        if not np.isfinite(value):
            shown = ", ".join(str(i) for i in idx[:16])
            logger.error(f"❌ 損失が NaN/Inf: step={step} batch rays=[{shown}{' ...' if len(idx) > 16 else ''}]")
            raise NumericFailure(f"non-finite loss at step {step}; batch ray indices: {idx.tolist()}")

        loss.backward()
        lr = decayed_lr(self.cfg.lr, step, self.cfg.iterations, self.cfg.lr_decay)
        adam_step(self.coarse.params, lr)
        adam_step(self.fine.params, lr)

        if not self.rgb_mode and step % self.loss_cfg.ws_interval == 0:
            self.ws = update_ws(res.coarse, self.pool.targets[idx], self.ws, self.loss_cfg)
        self.step_num = step
        return {"step": step, "loss": value, "loss_spectral": l_spec, "loss_rgb": l_rgb, "lr": lr}

    # ==================== 評価 ====================

    def render_view(self, view: ViewRecord) -> np.ndarray:
        """細モデルのスペクトルマップ [H, W, n_bands, 3]"""
        eval_cfg = RenderConfig(self.render_cfg.n_coarse, self.render_cfg.n_fine,
                                self.render_cfg.white_background, 0.0, self.render_cfg.seed, False,
                                self.render_cfg.batch_rays, self.render_cfg.workers)
        _, fine = render_spectrum_maps(self.coarse, self.fine, view.camera, eval_cfg)
        return fine

    def evaluate(self, views: Optional[List[ViewRecord]] = None) -> Dict[str, float]:
        views = self.eval_set if views is None else views
        if not views:
            return {}
        band_rows, rgb_scores = [], []
        with no_grad():
            for v in views:
                pred = self.render_view(v)
                gt_rgb = v.load_rgb()
                if self.rgb_mode:
                    rgb_scores.append(psnr(pred[:, :, 0, :], gt_rgb))
                    continue
                band_rows.append(band_psnr_row(pred, v.load_stack(), self.dataset.partition.centers))
                rgb_scores.append(psnr(self.dataset.compose(pred), gt_rgb))
        out: Dict[str, float] = {}
        if band_rows:
            out = pd.DataFrame(band_rows).mean().to_dict()
            out["psnr_mean"] = float(np.mean(list(out.values())))
        out["psnr_rgb"] = float(np.mean(rgb_scores))
        return out

    # ==================== ループ ====================

    def train(self, iterations: Optional[int] = None) -> pd.DataFrame:
        """
        学習を進める（再開時は現在のステップから iterations まで）

        Returns:
            学習ログ DataFrame
        """
        total = self.cfg.iterations if iterations is None else iterations
        logger.info(f"🚀 フィールド学習開始: step {self.step_num} → {total} "
                    f"(rays={len(self.pool):,} batch={self.cfg.batch_rays})")
        while self.step_num < total:
            row = self.step()
            step = row["step"]
            if self.cfg.eval_every and (step % self.cfg.eval_every == 0 or step == total):
                metrics = self.evaluate()
                row.update(metrics)
                if metrics:
                    logger.info(f"📊 step {step}: PSNR(bands)={metrics.get('psnr_mean', float('nan')):.2f}dB "
                                f"PSNR(RGB)={metrics['psnr_rgb']:.2f}dB")
            if self.cfg.log_every and (step % self.cfg.log_every == 0 or step == 1):
                logger.info(f"step {step}: loss={row['loss']:.6f} lr={row['lr']:.2e}")
            self.log_rows.append(row)
            if self.out_dir and self.cfg.ckpt_every and step % self.cfg.ckpt_every == 0:
                self.save(self.out_dir / f"field_{step:06d}.spnf")
        if self.out_dir:
            self.save(self.out_dir / "field_final.spnf")
            self.write_log(self.out_dir / "training_log.csv")
        logger.info(f"✅ フィールド学習完了: step {self.step_num}")
        return self.log_frame()

    def log_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.log_rows)

    def write_log(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.log_frame().to_csv(path, index=False, float_format="%.9g")
        return path

    # ==================== チェックポイント ====================

    def to_records(self) -> Dict[str, np.ndarray]:
        records = {}
        records.update(field_to_records(self.coarse, "coarse"))
        records.update(field_to_records(self.fine, "fine"))
        records.update(adam_to_records(self.coarse.params, "coarse"))
        records.update(adam_to_records(self.fine.params, "fine"))
        records.update(self.ws.to_records())
        records["meta/step"] = np.array(float(self.step_num))
        records["meta/seed"] = np.array(float(self.cfg.seed))
        return records

    def save(self, path: Union[str, Path]) -> Path:
        return save_checkpoint(path, self.to_records())

    def restore(self, records: Dict[str, np.ndarray]) -> None:
        self.coarse = field_from_records(records, "coarse")
        self.fine = field_from_records(records, "fine")
        if self.coarse.cfg != self.field_cfg:
            raise ShapeMismatch(f"checkpoint field config {self.coarse.cfg} != requested {self.field_cfg}")
        adam_from_records(self.coarse.params, records, "coarse")
        adam_from_records(self.fine.params, records, "fine")
        self.ws = SpectralWeights.from_records(records, uniform=not self.loss_cfg.use_ws)
        self.step_num = int(records["meta/step"])

    def resume(self, path: Union[str, Path]) -> None:
        self.restore(load_checkpoint(path))
        logger.info(f"✅ チェックポイントから再開: {path} (step {self.step_num})")


def load_fields(path: Union[str, Path]):
    """チェックポイントから (coarse, fine) を読み込む"""
    records = load_checkpoint(path)
    return field_from_records(records, "coarse"), field_from_records(records, "fine")
