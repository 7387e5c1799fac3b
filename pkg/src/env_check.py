"""
環境変数チェックユーティリティ

.env ファイル対応と、環境変数による設定上書き（ワーカー数・色彩テーブルのパス）を提供
"""
import logging
import os
import sys
from pathlib import Path
from typing import Optional

logger = logging.getLogger(__name__)

ENV_WORKERS = "SPECTRAL_NERF_WORKERS"
ENV_CMF_PATH = "SPECTRAL_NERF_CMF_PATH"
ENV_ILLUMINANT_PATH = "SPECTRAL_NERF_ILLUMINANT_PATH"


def load_dotenv_if_exists() -> bool:
    """
    .env ファイルが存在すれば読み込む（python-dotenv使用）
    存在しなければ無視
    """
    try:
        from dotenv import load_dotenv
        env_path = Path(__file__).parent.parent / ".env"
        if env_path.exists():
            load_dotenv(env_path)
            return True
        return False
    except ImportError:
        # python-dotenvがインストールされていない場合は無視
        return False


def _path_override(var: str, configured: Optional[str]) -> Optional[str]:
    value = os.environ.get(var)
    if value:
        if not Path(value).exists():
            print(f"❌ エラー: {var}={value} が存在しません", file=sys.stderr)
            raise FileNotFoundError(f"{var} points to a missing file: {value}")
        return value
    return configured


def resolve_cmf_path(configured: Optional[str] = None) -> Optional[str]:
    """等色関数ファイルのパス（環境変数 > 設定ファイル > None=同梱データ）"""
    return _path_override(ENV_CMF_PATH, configured)


def resolve_illuminant_path(configured: Optional[str] = None) -> Optional[str]:
    """D65 ファイルのパス（環境変数 > 設定ファイル > None=同梱データ）"""
    return _path_override(ENV_ILLUMINANT_PATH, configured)


def resolve_workers(configured: int = 1) -> int:
    """
    レンダリングのワーカー数

    Args:
        configured: 設定ファイル / CLI の値

    Returns:
        SPECTRAL_NERF_WORKERS が設定されていればその値（1 以上）
    """
    raw = os.environ.get(ENV_WORKERS)
    if not raw:
        return max(1, int(configured))
    try:
        workers = int(raw)
    except ValueError:
        raise ValueError(f"{ENV_WORKERS} must be an integer, got {raw!r}")
    if workers < 1:
        raise ValueError(f"{ENV_WORKERS} must be >= 1, got {workers}")
    return workers


def print_env_status():
    """現在の環境変数設定状況を表示"""
    print("📋 環境変数設定状況")
    print("-" * 60)
    for var in (ENV_WORKERS, ENV_CMF_PATH, ENV_ILLUMINANT_PATH):
        value = os.environ.get(var)
        print(f"{var}: {'✅ ' + value if value else '未設定（既定値を使用）'}")
    print("-" * 60)
