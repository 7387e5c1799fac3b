"""
有限差分による勾配検証スイート（失敗時は終了コード 1）

Usage:
    python3 scripts/run_gradcheck.py --out results/gradcheck
"""
import sys
from pathlib import Path

# パス追加
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.cli import main


if __name__ == "__main__":
    sys.exit(main(["gradcheck", *sys.argv[1:]]))
