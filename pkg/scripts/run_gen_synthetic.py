"""
解析的シーンから合成スペクトルデータセットを生成

Usage:
    python3 scripts/run_gen_synthetic.py --config config/desk.yaml --out data/synthetic
    python3 scripts/run_gen_synthetic.py --snum 8 --seed 1
"""
import sys
from pathlib import Path

# パス追加
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.cli import main


if __name__ == "__main__":
    sys.exit(main(["gen-synthetic", *sys.argv[1:]]))
