"""
SAUNet の学習（スペクトルマップスタック → RGB）

Usage:
    python3 scripts/run_train_fusion.py --config config/desk.yaml --checkpoint results/field/field_final.spnf
    python3 scripts/run_train_fusion.py --sa-placement none --out results/fusion_noSA
"""
import sys
from pathlib import Path

# パス追加
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.cli import main


if __name__ == "__main__":
    sys.exit(main(["train-fusion", *sys.argv[1:]]))
