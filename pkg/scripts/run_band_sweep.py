"""
バンド数を変えたデスク規模パイプラインの一括実行

Usage:
    python3 scripts/run_band_sweep.py --config config/desk.yaml --snums 4,8,11 --out results/band_sweep
"""
import sys
from pathlib import Path

# パス追加
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.cli import main


if __name__ == "__main__":
    sys.exit(main(["band-sweep", *sys.argv[1:]]))
