"""
コマンドライン

    python3 scripts/run_<command>.py [共通フラグ] [コマンド固有フラグ]
    python3 -m src.cli <command> [...]

終了コード: 0 成功 / 1 入力・設定エラー / 2 数値エラー（NaN 損失、特異な正規方程式）
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from src.commands import (
    cmd_band_sweep, cmd_eval, cmd_fit_weights, cmd_fuse, cmd_gen_synthetic, cmd_gradcheck,
    cmd_render_spectra, cmd_train_field, cmd_train_fusion,
)
from src.config_loader import RunConfig, load_run_config
from src.env_check import load_dotenv_if_exists, print_env_status
from src.errors import NumericFailure, SpectralNerfError
from src.nn_core import set_default_dtype

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERIC = 2

DEFAULT_CONFIG = Path(__file__).parent.parent / "config" / "default.yaml"

COMMANDS = (
    "gen-synthetic", "train-field", "render-spectra", "fit-weights",
    "train-fusion", "fuse", "eval", "gradcheck", "band-sweep",
)


def setup_logging(level: str = "INFO") -> None:
    logging.basicConfig(
        level=getattr(logging, level),
        format='%(asctime)s [%(levelname)s] %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
        force=True,
    )


def parse_sa_placement(value: str) -> List[str]:
    """"E1,E2" → ["E1", "E2"]、"none" → []"""
    if value.strip().lower() in ("none", ""):
        return []
    return [s.strip().upper() for s in value.split(",") if s.strip()]


# ==================== 引数 ====================

def add_common_flags(parser: argparse.ArgumentParser) -> None:
    """全コマンド共通のフラグ（設定ファイルの値を上書きする）"""
    parser.add_argument("--config", type=str, default=None, help="設定ファイル（既定: config/default.yaml）")
    parser.add_argument("--seed", type=int, default=None, help="乱数シード")
    parser.add_argument("--snum", type=int, default=None, help="バンド数（一様分割）")
    parser.add_argument("--ncoarse", type=int, default=None, help="粗サンプル数 / レイ")
    parser.add_argument("--nfine", type=int, default=None, help="細サンプル数 / レイ")
    parser.add_argument("--lr", type=float, default=None, help="フィールドの学習率（既定 5e-4）")
    parser.add_argument("--lr-fusion", type=float, default=None, help="SAUNet の学習率（既定 1e-3）")
    parser.add_argument("--lambda-rgb", type=float, default=None, help="λ_RGB（既定 1.1）")
    parser.add_argument("--sa-placement", type=parse_sa_placement, default=None,
                        help='SA ブロックの位置（例 "E1,E2"、"none"）')
    parser.add_argument("--joint", action="store_true", default=None, help="フィールドと SAUNet の同時学習")
    parser.add_argument("--iterations", type=int, default=None, help="学習ステップ数")
    parser.add_argument("--batch-rays", type=int, default=None, help="1ステップのレイ数")
    parser.add_argument("--workers", type=int, default=None, help="レンダリングのワーカー数")
    parser.add_argument("--dtype", type=str, default=None, choices=["float64", "float32"], help="パラメータ・活性の精度")
    parser.add_argument("--data", type=str, default=None, help="データセットのディレクトリ")
    parser.add_argument("--out", type=str, default=None, help="出力ディレクトリ")
    parser.add_argument("--log-level", type=str, default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="スペクトル放射輝度場パイプライン")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="合成データセット生成")
    add_common_flags(p)

    p = sub.add_parser("train-field", help="粗/細フィールドの学習")
    add_common_flags(p)
    p.add_argument("--resume", type=str, default=None, help="再開するチェックポイント")

    p = sub.add_parser("render-spectra", help="スペクトルマップの描画")
    add_common_flags(p)
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--views", type=str, default=None, help="ビュー名（カンマ区切り）")
    p.add_argument("--split", type=str, default="test", choices=["train", "test"])

    p = sub.add_parser("fit-weights", help="線形融合の重みを最小二乗で推定")
    add_common_flags(p)
    p.add_argument("--stacks", type=str, default=None, help="描画済みスタック（省略時はデータセットのバンドマップ）")
    p.add_argument("--reference", type=str, default="D65", help='相関を取る SPD（"none" で省略）')

    p = sub.add_parser("train-fusion", help="SAUNet の学習")
    add_common_flags(p)
    p.add_argument("--stacks", type=str, default=None)
    p.add_argument("--checkpoint", type=str, default=None, help="学習ビューを描画するフィールド")

    p = sub.add_parser("fuse", help="スタックを RGB に融合")
    add_common_flags(p)
    p.add_argument("--model", type=str, required=True, help="SAUNet チェックポイントまたは重みファイル")
    p.add_argument("--stacks", type=str, required=True)

    p = sub.add_parser("eval", help="PSNR / SSIM / L1 の評価")
    add_common_flags(p)
    p.add_argument("--pred", type=str, required=True)
    p.add_argument("--gt", type=str, required=True)
    p.add_argument("--scene", type=str, default="scene")
    p.add_argument("--l1-raw", action="store_true", help="L1 を ×10³ せずに出力")

    p = sub.add_parser("gradcheck", help="有限差分による勾配検証")
    add_common_flags(p)

    p = sub.add_parser("band-sweep", help="バンド数スイープ")
    add_common_flags(p)
    p.add_argument("--snums", type=str, default="4,8,11")
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    """フラグ → "section.key" 上書き（未指定は None のまま apply_overrides で無視される）"""
    overrides = {
        "seed": args.seed,
        "render.n_coarse": args.ncoarse,
        "render.n_fine": args.nfine,
        "render.workers": args.workers,
        "train.lr": args.lr,
        "train.iterations": args.iterations,
        "train.batch_rays": args.batch_rays,
        "train.joint": args.joint,
        "train.dtype": args.dtype,
        "fusion.lr": args.lr_fusion,
        "fusion.sa_placement": args.sa_placement,
        "loss.lambda_rgb": args.lambda_rgb,
        "paths.data_dir": args.data,
    }
    if args.snum is not None:
        overrides["spectral.layout"] = "uniform"
        overrides["spectral.s_num"] = args.snum
    return overrides


def load_config_from_args(args: argparse.Namespace) -> RunConfig:
    path = args.config
    if path is None and DEFAULT_CONFIG.exists():
        path = str(DEFAULT_CONFIG)
    cfg = load_run_config(path, overrides_from_args(args))
    logger.info(f"✅ 設定読み込み: {path or '既定値のみ'} (seed={cfg.get_seed()} dtype={cfg.get_dtype()})")
    return cfg


# ==================== 実行 ====================

def dispatch(args: argparse.Namespace) -> int:
    cfg = load_config_from_args(args)
    set_default_dtype(cfg.get_dtype())
    if args.command == "gradcheck":
        return EXIT_OK if cmd_gradcheck(cfg, args.out) else EXIT_VALIDATION
    if args.command == "eval":
        cmd_eval(cfg, args.pred, args.gt, args.out, scene=args.scene, l1_scaled=not args.l1_raw)
    elif args.command == "gen-synthetic":
        cmd_gen_synthetic(cfg, args.out)
    elif args.command == "train-field":
        cmd_train_field(cfg, args.data, args.out, resume=args.resume)
    elif args.command == "render-spectra":
        views = [v.strip() for v in args.views.split(",")] if args.views else None
        cmd_render_spectra(cfg, args.checkpoint, args.data, args.out, views=views, split=args.split)
    elif args.command == "fit-weights":
        reference = None if args.reference.lower() == "none" else args.reference
        cmd_fit_weights(cfg, args.data, args.stacks, args.out, reference=reference)
    elif args.command == "train-fusion":
        cmd_train_fusion(cfg, args.data, args.out, stacks_dir=args.stacks, checkpoint=args.checkpoint)
    elif args.command == "fuse":
        cmd_fuse(cfg, args.model, args.stacks, args.out)
    elif args.command == "band-sweep":
        s_nums = [int(s) for s in args.snums.split(",")]
        cmd_band_sweep(cfg, args.out or cfg.get_out_dir() / "band_sweep", s_nums)
    return EXIT_OK


def run_guarded(fn: Callable[[], int]) -> int:
    """例外を終了コードに変換する"""
    try:
        return fn()
    except NumericFailure as e:
        logger.error(f"❌ 数値エラー: {e}")
        return EXIT_NUMERIC
    except (SpectralNerfError, ValueError, FileNotFoundError) as e:
        logger.error(f"❌ エラー: {e}")
        return EXIT_VALIDATION


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv_if_exists()
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    if args.log_level == "DEBUG":
        print_env_status()
    logger.info(f"🚀 {args.command}")
    return run_guarded(lambda: dispatch(args))


if __name__ == "__main__":
    sys.exit(main())
