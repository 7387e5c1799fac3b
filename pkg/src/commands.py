"""
コマンド本体（scripts/*.py から呼ばれる）

各コマンドは出力先に config_echo.yaml（解決済み設定 + シード）を書く。
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml

from src.config_loader import RunConfig
from src.dataset_io import (
    SpectralDataset, ViewLayout, default_scene, export_stack_previews, gen_synthetic, load_dataset,
    plot_training_curve, sfm_read, sfm_write, SpectralFloatMap,
)
from src.errors import BadPartition, MissingFile
from src.fusion import (
    FusionModel, LinearFusionWeights, fit_weights_least_squares, load_fusion_model, read_weights_file,
    weights_vs_spd, write_weights_file,
)
from src.metrics import image_metrics, metrics_table, summarize, write_metrics_csv
from src.spectral_color import load_illuminant
from src.training import (
    FieldTrainConfig, FieldTrainer, FusionTrainConfig, FusionTrainer, JointTrainer, load_fields,
)
from src.validation import gradcheck_cases, summarize_gradcheck
from src.volume_renderer import render_spectrum_maps

logger = logging.getLogger(__name__)

RGB_MAP = "rgb.sfm"


# ==================== 共通 ====================

def _dataset(cfg: RunConfig, dataset_path: Optional[Union[str, Path]]) -> SpectralDataset:
    return load_dataset(Path(dataset_path) if dataset_path else cfg.get_data_dir())


def _check_s_num(cfg: RunConfig, ds: SpectralDataset) -> None:
    requested = cfg.get_partition()
    if requested.s_num != ds.partition.s_num:
        raise BadPartition(f"config s_num={requested.s_num} but dataset {ds.root} has s_num={ds.partition.s_num}")


def _field_train_config(cfg: RunConfig) -> FieldTrainConfig:
    tr = cfg.section("train")
    return FieldTrainConfig(
        iterations=int(tr["iterations"]),
        batch_rays=int(tr["batch_rays"]),
        lr=float(tr["lr"]),
        log_every=int(tr["log_every"]),
        eval_every=int(tr["eval_every"]),
        ckpt_every=int(tr["ckpt_every"]),
        eval_views=int(tr["eval_views"]),
        lr_decay=bool(tr["lr_decay"]),
        seed=cfg.get_seed(),
    )


def _fusion_train_config(cfg: RunConfig) -> FusionTrainConfig:
    fu = cfg.section("fusion")
    return FusionTrainConfig(iterations=int(fu["iterations"]), lr=float(fu["lr"]), crop=int(fu["crop"]),
                             log_every=int(cfg.section("train")["log_every"]), seed=cfg.get_seed())


def read_stack_dir(stacks_dir: Union[str, Path]) -> Dict[str, np.ndarray]:
    """
    <dir>/<view>/band_XX.sfm を読み、{view: [H, W, s, 3]} を返す
    """
    stacks_dir = Path(stacks_dir)
    if not stacks_dir.exists():
        raise MissingFile(stacks_dir)
    base = stacks_dir / "views" if (stacks_dir / "views").is_dir() else stacks_dir
    out = {}
    for view_dir in sorted(p for p in base.iterdir() if p.is_dir()):
        bands = sorted(view_dir.glob("band_*.sfm"))
        if bands:
            out[view_dir.name] = np.stack([sfm_read(b).data.astype(np.float64) for b in bands], axis=2)
    if not out:
        raise MissingFile(stacks_dir, f"No band maps found under {stacks_dir}")
    return out


def read_rgb_dir(root: Union[str, Path]) -> Dict[str, Path]:
    """<dir>/<view>/rgb.sfm（データセットなら <dir>/views/<view>/rgb.sfm）の一覧"""
    root = Path(root)
    if not root.exists():
        raise MissingFile(root)
    base = root / "views" if (root / "views").is_dir() else root
    return {p.parent.name: p for p in sorted(base.glob(f"*/{RGB_MAP}"))}


# ==================== gen_synthetic ====================

def cmd_gen_synthetic(cfg: RunConfig, out: Optional[Union[str, Path]] = None) -> Path:
    """解析的シーンから合成データセットを生成する"""
    out_dir = Path(out) if out else cfg.get_data_dir()
    d = cfg.section("dataset")
    layout = ViewLayout(
        n_train=int(d["n_train"]), n_test=int(d["n_test"]), width=int(d["width"]), height=int(d["height"]),
        fov_deg=float(d["fov_deg"]), radius=float(d["radius"]), near=float(d["near"]), far=float(d["far"]),
        layout=d["layout"],
    )
    manifest = gen_synthetic(
        out_dir, default_scene(), cfg.get_partition(), cfg.get_illuminant(), cfg.get_seed(),
        views=layout, samples_per_ray=int(d["samples_per_ray"]),
        illuminant_in_maps=bool(d["illuminant_in_maps"]), workers=cfg.get_workers(),
        export_png=bool(d["export_png"]),
        band_colors=d["band_colors"], cmf_table=cfg.get_cmf_table(),
    )
    cfg.write_echo(out_dir, {"command": "gen_synthetic"})
    return manifest


# ==================== train_field ====================

def cmd_train_field(
    cfg: RunConfig,
    dataset_path: Optional[Union[str, Path]] = None,
    out: Optional[Union[str, Path]] = None,
    resume: Optional[Union[str, Path]] = None,
) -> Path:
    """
    粗/細フィールドを学習し、最終チェックポイントのパスを返す

    train.joint が真なら SAUNet との同時学習（L_spectral + λ_RGB·L_RGB）。
    """
    ds = _dataset(cfg, dataset_path)
    _check_s_num(cfg, ds)
    out_dir = Path(out) if out else cfg.get_out_dir() / "field"
    cfg.write_echo(out_dir, {"command": "train_field", "dataset": str(ds.root)})
    field_cfg = cfg.get_field_config(ds.partition.s_num)
    args = (ds, field_cfg, cfg.get_render_config(training=True), cfg.get_loss_config(), _field_train_config(cfg))
    if cfg.section("train")["joint"]:
        trainer = JointTrainer(*args, net_cfg=cfg.get_saunet_config(ds.partition.s_num),
                               patch=int(cfg.section("train")["joint_patch"]),
                               fusion_lr=float(cfg.section("fusion")["lr"]), out_dir=out_dir)
    else:
        trainer = FieldTrainer(*args, out_dir=out_dir)
    if resume:
        trainer.resume(resume)
    log = trainer.train()
    if len(log):
        plot_training_curve(log, out_dir / "training_curve.png")
    return out_dir / "field_final.spnf"


# ==================== render_spectra ====================

def cmd_render_spectra(
    cfg: RunConfig,
    checkpoint: Union[str, Path],
    dataset_path: Optional[Union[str, Path]] = None,
    out: Optional[Union[str, Path]] = None,
    views: Optional[Sequence[str]] = None,
    split: str = "test",
) -> List[Path]:
    """
    細モデルのスペクトルマップをビューごとに SFM で書き出す

    <out>/<view>/band_XX.sfm と、線形合成（w ≡ 1）の rgb.sfm。
    """
    coarse, fine = load_fields(checkpoint)
    ds = _dataset(cfg, dataset_path)
    if coarse.cfg.output_mode == "spectral" and coarse.cfg.n_bands != ds.partition.s_num:
        raise BadPartition(f"checkpoint has {coarse.cfg.n_bands} bands, dataset s_num={ds.partition.s_num}")
    out_dir = Path(out) if out else cfg.get_out_dir() / "spectra"
    cfg.write_echo(out_dir, {"command": "render_spectra", "checkpoint": str(checkpoint)})
    selected = [ds.view(n) for n in views] if views else ds.split(split)
    render_cfg = cfg.get_render_config(training=False)
    centers = ds.partition.centers if coarse.cfg.output_mode == "spectral" else [0.0]

    written = []
    for v in selected:
        _, stack = render_spectrum_maps(coarse, fine, v.camera, render_cfg)
        view_dir = out_dir / v.name
        for k, c in enumerate(centers):
            sfm_write(view_dir / f"band_{k:02d}.sfm", SpectralFloatMap(stack[:, :, k, :], c))
        rgb = ds.compose(stack) if coarse.cfg.output_mode == "spectral" else stack[:, :, 0, :]
        sfm_write(view_dir / RGB_MAP, SpectralFloatMap(rgb, 0.0))
        if cfg.section("dataset")["export_png"]:
            export_stack_previews(view_dir / "previews", stack, centers, rgb)
        written.append(view_dir)
        logger.info(f"💾 スペクトルマップ保存: {view_dir}")
    return written


# ==================== fit_weights ====================

def cmd_fit_weights(
    cfg: RunConfig,
    dataset_path: Optional[Union[str, Path]] = None,
    stacks_dir: Optional[Union[str, Path]] = None,
    out: Optional[Union[str, Path]] = None,
    reference: Optional[str] = "D65",
) -> Tuple[LinearFusionWeights, Optional[float]]:
    """
    最小二乗で線形融合の重みを推定する

    Args:
        stacks_dir: 描画済みスタック（None ならデータセットのバンドマップ）
        reference: 相関を取る参照 SPD 名（None なら相関なし）

    Returns:
        (重み, ピアソン相関 or None)
    """
    ds = _dataset(cfg, dataset_path)
    if stacks_dir:
        stacks = read_stack_dir(stacks_dir)
    else:
        stacks = {v.name: v.load_stack() for v in ds.views}

    out_dir = Path(out) if out else cfg.get_out_dir() / "fusion"
    cfg.write_echo(out_dir, {"command": "fit_weights", "reference": reference})
    return _fit_linear(cfg, ds, stacks, out_dir, reference)


def _fit_linear(
    cfg: RunConfig, ds: SpectralDataset, stacks: Dict[str, np.ndarray], out_dir: Path, reference: Optional[str],
) -> Tuple[LinearFusionWeights, Optional[float]]:
    """重みを推定して fusion_weights.txt と fit_report.yaml を書く"""
    names = list(stacks)
    stack_list = [stacks[n] for n in names]
    targets = [ds.view(n).load_rgb() for n in names]
    weights = fit_weights_least_squares(stack_list, targets, per_channel=bool(cfg.section("fusion")["per_channel"]))
    write_weights_file(out_dir / "fusion_weights.txt", weights, ds.partition)

    r = None
    if reference:
        r = weights_vs_spd(weights, ds.partition, load_illuminant(reference))
        logger.info(f"📊 重みと {reference} の相関: r={r:.4f}")
    report = {"residual_rms": float(weights.residual_rms), "pearson_r": None if r is None else float(r),
              "reference": reference, "n_views": len(names), "dataset_kappa": float(ds.kappa)}
    with open(out_dir / "fit_report.yaml", "w", encoding="utf-8") as f:
        yaml.safe_dump(report, f, sort_keys=False)
    return weights, r


# ==================== train_fusion / fuse ====================

def cmd_train_fusion(
    cfg: RunConfig,
    dataset_path: Optional[Union[str, Path]] = None,
    out: Optional[Union[str, Path]] = None,
    stacks_dir: Optional[Union[str, Path]] = None,
    checkpoint: Optional[Union[str, Path]] = None,
) -> Path:
    """
    融合モデルを学習する（fusion.kind: saunet は SAUNet、linear は最小二乗の重み）

    入力スタックの優先順: stacks_dir > checkpoint で学習ビューを描画 > データセットのバンドマップ。
    train.joint が真ならフィールドとの同時学習に切り替える。

    Returns:
        saunet_final.spnf または fusion_weights.txt のパス
    """
    if cfg.section("train")["joint"]:
        return cmd_train_field(cfg, dataset_path, out)

    kind = cfg.section("fusion")["kind"]
    ds = _dataset(cfg, dataset_path)
    out_dir = Path(out) if out else cfg.get_out_dir() / "fusion"
    cfg.write_echo(out_dir, {"command": "train_fusion", "kind": kind})
    if stacks_dir:
        stacks = read_stack_dir(stacks_dir)
    elif checkpoint:
        coarse, fine = load_fields(checkpoint)
        render_cfg = cfg.get_render_config(training=False)
        stacks = {v.name: render_spectrum_maps(coarse, fine, v.camera, render_cfg)[1] for v in ds.train_views}
    else:
        stacks = {v.name: v.load_stack() for v in ds.train_views}
    if kind == "linear":
        _fit_linear(cfg, ds, stacks, out_dir, reference=None)
        return out_dir / "fusion_weights.txt"

    names = list(stacks)
    s_num = stacks[names[0]].shape[2]
    trainer = FusionTrainer([stacks[n] for n in names], [ds.view(n).load_rgb() for n in names],
                            cfg.get_saunet_config(s_num), _fusion_train_config(cfg), out_dir=out_dir)
    trainer.train()
    logger.info(f"📊 SAUNet 学習画像 PSNR: {trainer.evaluate():.2f}dB")
    return out_dir / "saunet_final.spnf"


def cmd_fuse(
    cfg: RunConfig,
    model_path: Union[str, Path],
    stacks_dir: Union[str, Path],
    out: Optional[Union[str, Path]] = None,
) -> List[Path]:
    """
    スタックを融合して <out>/<view>/rgb.sfm を書く

    Args:
        model_path: SAUNet チェックポイント（.spnf）または重みファイル
    """
    model_path = Path(model_path)
    if model_path.suffix == ".spnf":
        model = load_fusion_model(model_path)
    else:
        model = FusionModel.linear(read_weights_file(model_path))
    out_dir = Path(out) if out else cfg.get_out_dir() / "fused"
    cfg.write_echo(out_dir, {"command": "fuse", "model": str(model_path), "kind": model.kind})
    written = []
    for name, stack in read_stack_dir(stacks_dir).items():
        rgb = model.fuse(stack)
        written.append(sfm_write(out_dir / name / RGB_MAP, SpectralFloatMap(rgb, 0.0)))
    logger.info(f"✅ 融合完了: {len(written)} views ({model.kind})")
    return written


# ==================== eval ====================

def cmd_eval(
    cfg: RunConfig,
    pred_dir: Union[str, Path],
    gt_dir: Union[str, Path],
    out: Optional[Union[str, Path]] = None,
    scene: str = "scene",
    l1_scaled: bool = True,
) -> pd.DataFrame:
    """
    予測 RGB と正解 RGB を比較して PSNR / SSIM / L1 の CSV を作る

    Raises:
        MissingFile: 予測ビューに対応する正解が無い
    """
    preds = read_rgb_dir(pred_dir)
    gts = read_rgb_dir(gt_dir)
    if not preds:
        raise MissingFile(pred_dir, f"No {RGB_MAP} found under {pred_dir}")
    rows = []
    for name, p in preds.items():
        if name not in gts:
            raise MissingFile(Path(gt_dir) / name / RGB_MAP)
        m = image_metrics(sfm_read(p).data, sfm_read(gts[name]).data, l1_scaled=l1_scaled)
        rows.append({"scene": scene, "view": name, **m})
    df = metrics_table(rows)
    if out:
        out = Path(out)
        csv_path = out if out.suffix == ".csv" else out / "metrics.csv"
        write_metrics_csv(df, csv_path)
        cfg.write_echo(csv_path.parent, {"command": "eval", "pred": str(pred_dir), "gt": str(gt_dir)})
    s = summarize(df)
    logger.info(f"📊 {scene}: PSNR={s['psnr']:.3f} SSIM={s['ssim']:.4f} L1={s['l1']:.4f}")
    return df


# ==================== gradcheck ====================

def cmd_gradcheck(cfg: RunConfig, out: Optional[Union[str, Path]] = None) -> bool:
    """有限差分スイートを実行し、全ケース合格なら True（精度は train.dtype によらず float64）"""
    reports = gradcheck_cases(cfg.get_seed())
    for r in reports:
        (logger.info if r.passed else logger.error)(r.summary())
    summary = summarize_gradcheck(reports)
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        cfg.write_echo(out, {"command": "gradcheck", "dtype": "float64"})
        pd.DataFrame([{"case": r.name, "max_rel_error": r.max_rel_error, "tol": r.tol,
                       "checked": r.n_checked, "kinks": len(r.kink_indices), "passed": r.passed}
                      for r in reports]).to_csv(out / "gradcheck.csv", index=False, float_format="%.9g")
    ok = summary["n_failed"] == 0
    mark = "✅" if ok else "❌"
    logger.info(f"{mark} 勾配検証: {summary['n_cases'] - summary['n_failed']}/{summary['n_cases']} 合格 "
                f"(最大誤差 {summary['worst_rel_error']:.3e} @ {summary['worst_case']})")
    return ok


# ==================== band sweep ====================

def cmd_band_sweep(cfg: RunConfig, out: Union[str, Path], s_nums: Sequence[int] = (4, 8, 11)) -> pd.DataFrame:
    """
    バンド数を変えてデスク規模パイプラインを通し、指標を1つの CSV にまとめる
    """
    out = Path(out)
    rows = []
    for s in s_nums:
        sub = cfg.derive({"spectral.layout": "uniform", "spectral.s_num": int(s)})
        run_dir = out / f"s{s:02d}"
        data_dir = run_dir / "data"
        cmd_gen_synthetic(sub, data_dir)
        ckpt = cmd_train_field(sub, data_dir, run_dir / "field")
        cmd_render_spectra(sub, ckpt, data_dir, run_dir / "spectra")
        df = cmd_eval(sub, run_dir / "spectra", data_dir, run_dir, scene=f"s{s}")
        rows.append({"s_num": int(s), **summarize(df)})
    table = pd.DataFrame(rows, columns=["s_num", "psnr", "ssim", "l1"])
    write_metrics_csv(table, out / "band_sweep.csv")
    return table
