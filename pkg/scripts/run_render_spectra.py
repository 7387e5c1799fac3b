"""
学習済みフィールドからスペクトルマップを描画（SFM）

Usage:
    python3 scripts/run_render_spectra.py --checkpoint results/field/field_final.spnf --out results/spectra
"""
import sys
from pathlib import Path

# パス追加
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.cli import main


if __name__ == "__main__":
    sys.exit(main(["render-spectra", *sys.argv[1:]]))
