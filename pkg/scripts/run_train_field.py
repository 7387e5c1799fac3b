"""
粗/細 SpectralMLP の学習（--joint で SAUNet と同時学習）

Usage:
    python3 scripts/run_train_field.py --config config/desk.yaml --data data/synthetic --out results/field
    python3 scripts/run_train_field.py --config config/desk.yaml --resume results/field/field_005000.spnf
"""
import sys
from pathlib import Path

# パス追加
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.cli import main


if __name__ == "__main__":
    sys.exit(main(["train-field", *sys.argv[1:]]))
