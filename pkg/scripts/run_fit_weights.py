"""
線形融合の重みを最小二乗で推定し、参照 SPD との相関を報告

Usage:
    python3 scripts/run_fit_weights.py --data data/synthetic --out results/fusion
    python3 scripts/run_fit_weights.py --stacks results/spectra --reference none
"""
import sys
from pathlib import Path

# パス追加
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.cli import main


if __name__ == "__main__":
    sys.exit(main(["fit-weights", *sys.argv[1:]]))
