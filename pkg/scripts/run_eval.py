"""
予測 RGB と正解 RGB の PSNR / SSIM / L1 を CSV に出力

Usage:
    python3 scripts/run_eval.py --pred results/fused --gt data/synthetic --out results/metrics.csv
"""
import sys
from pathlib import Path

# パス追加
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.cli import main


if __name__ == "__main__":
    sys.exit(main(["eval", *sys.argv[1:]]))
