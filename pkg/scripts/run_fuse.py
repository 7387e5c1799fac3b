"""
融合モデル（SAUNet / 線形重み）でスタックを RGB に変換

Usage:
    python3 scripts/run_fuse.py --model results/fusion/saunet_final.spnf --stacks results/spectra --out results/fused
"""
import sys
from pathlib import Path

# パス追加
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.cli import main


if __name__ == "__main__":
    sys.exit(main(["fuse", *sys.argv[1:]]))
